#include "deepsets/train.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace deepsets;

namespace {

// sum pool of phi(x) = digit value: predicts the digit sum exactly.
SetModel digit_sum_oracle() {
  DenseLayer phi;
  phi.weight = Tensor(10, 1);
  for (Index k = 0; k < 10; ++k) phi.weight(k, 0) = static_cast<double>(k);
  phi.bias = Tensor::Zero(1, 1);
  phi.activation = Activation::kIdentity;
  return InvariantModel({phi}, Pool::kSum, {});
}

SetModel constant_zero(Index width) {
  DenseLayer phi;
  phi.weight = Tensor::Zero(width, 1);
  phi.bias = Tensor::Zero(1, 1);
  phi.activation = Activation::kIdentity;
  return InvariantModel({phi}, Pool::kMean, {});
}

LabeledSetDataset shuffle_members(const LabeledSetDataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabeledSetDataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor& s = data.sets[i];
    std::vector<Index> perm(static_cast<std::size_t>(s.rows()));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index r = 0; r < s.rows(); ++r) out.sets[i].row(r) = s.row(perm[static_cast<std::size_t>(r)]);
    if (data.task == TaskKind::kOutlier) {
      const auto old = static_cast<Index>(data.targets[i]);
      out.targets[i] = static_cast<double>(std::find(perm.begin(), perm.end(), old) - perm.begin());
    }
  }
  return out;
}

}  // namespace

TEST(Config, DefaultsAreValidAndMatchTheTasks) {
  for (auto task : {TaskKind::kPopulation, TaskKind::kDigitSum, TaskKind::kOutlier}) {
    const auto c = TrainConfig::defaults(task);
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.optimizer.step_size, 1e-3);
    EXPECT_EQ(c.optimizer.beta1, 0.9);
    EXPECT_EQ(c.optimizer.beta2, 0.999);
    EXPECT_EQ(c.optimizer.epsilon, 1e-8);
  }
  const auto reg = TrainConfig::defaults(TaskKind::kPopulation);
  EXPECT_EQ(reg.architecture.phi_widths, (std::vector<Index>{64, 64, 64}));
  EXPECT_EQ(reg.architecture.rho_widths, (std::vector<Index>{64, 32, 1}));
  EXPECT_EQ(reg.architecture.pool, Pool::kSum);
  EXPECT_EQ(reg.loss, LossKind::kMse);
  const auto out = TrainConfig::defaults(TaskKind::kOutlier);
  EXPECT_EQ(out.architecture.kind, ArchitectureSpec::Kind::kEquivariant);
  EXPECT_EQ(out.architecture.equivariant_widths, (std::vector<Index>{64, 64, 1}));
  EXPECT_EQ(out.architecture.equivariant_activation, Activation::kTanh);
  EXPECT_EQ(out.loss, LossKind::kSetSoftmaxNll);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = TrainConfig::defaults(TaskKind::kOutlier);
  c.loss = LossKind::kMargin;
  c.margin = 0.25;
  c.epochs = 7;
  c.batch_size = 3;
  c.seed = 99;
  c.step_decay = 0.5;
  c.architecture.variant = EquivariantVariant::kFullLambdaGamma;
  const auto j = c.to_json();
  const auto back = TrainConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(back.loss, LossKind::kMargin);
  EXPECT_EQ(back.architecture.variant, EquivariantVariant::kFullLambdaGamma);

  // absent fields fall back to the task defaults
  const auto partial = TrainConfig::from_json({{"task", "digit-sum"}, {"epochs", 3}});
  EXPECT_EQ(partial.epochs, 3);
  EXPECT_EQ(partial.task, TaskKind::kDigitSum);
  EXPECT_EQ(partial.batch_size, TrainConfig::defaults(TaskKind::kDigitSum).batch_size);
}

TEST(Config, ValidationRejectsMismatches) {
  auto c = TrainConfig::defaults(TaskKind::kDigitSum);
  c.loss = LossKind::kSetSoftmaxNll;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = TrainConfig::defaults(TaskKind::kOutlier);
  c.loss = LossKind::kMse;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = TrainConfig::defaults(TaskKind::kOutlier);
  c.architecture.kind = ArchitectureSpec::Kind::kInvariant;
  c.loss = LossKind::kMargin;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = TrainConfig::defaults(TaskKind::kPopulation);
  c.architecture.rho_widths = {8, 2};
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = TrainConfig::defaults(TaskKind::kPopulation);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = TrainConfig::defaults(TaskKind::kPopulation);
  c.optimizer.beta2 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = TrainConfig::defaults(TaskKind::kPopulation);
  c.step_decay = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  EXPECT_THROW(loss_from_string("cross-entropy"), std::invalid_argument);
}

TEST(Metrics, CsvHeaderAndPrecision) {
  const std::vector<MetricsRecord> rows{{1, 0.1, 0.5, 0.0}, {2, 1.0 / 3.0, 1.0, 0.0}};
  EXPECT_EQ(metrics_csv(rows), "epoch,train_loss,eval_metric,wall_seconds\n"
                               "1,0.10000000000000001,0.5,0\n"
                               "2,0.33333333333333331,1,0\n");
}

TEST(Adam, FirstStepMovesByTheStepSize) {
  Tensor p(1, 2);
  p << 1.0, -2.0;
  Tensor g(1, 2);
  g << 0.5, -4.0;
  Adam adam;
  std::vector<Tensor*> params{&p};
  adam.step(params, std::vector<Tensor>{g});
  // bias-corrected moments equal g and g^2 after one step
  EXPECT_NEAR(p(0, 0), 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p(0, 1), -2.0 + 1e-3 * 4.0 / (4.0 + 1e-8), 1e-15);

  // second step by hand
  Tensor g2(1, 2);
  g2 << 0.1, 0.0;
  const double m = 0.9 * (0.1 * 0.5) + 0.1 * 0.1;
  const double v = 0.999 * (0.001 * 0.25) + 0.001 * 0.01;
  const double mhat = m / (1 - 0.81);
  const double vhat = v / (1 - 0.999 * 0.999);
  const double expected = p(0, 0) - 1e-3 * mhat / (std::sqrt(vhat) + 1e-8);
  adam.step(params, std::vector<Tensor>{g2});
  EXPECT_NEAR(p(0, 0), expected, 1e-15);

  EXPECT_THROW(adam.step(params, std::vector<Tensor>{}), std::invalid_argument);
}

TEST(Loss, HeadsMatchAnalyticForms) {
  const auto digits = gen_digit_sum(4, 3, 0, 1);
  const SetBatch batch = SetBatch::from_sets(digits.sets);
  {
    Tape tape;
    Tensor pred(4, 1);
    pred << 1, 2, 3, 4;
    const Var loss = task_loss(TrainConfig::defaults(TaskKind::kDigitSum), tape.constant(pred), batch, digits.targets);
    double expect = 0;
    for (Index i = 0; i < 4; ++i) expect += std::pow(pred(i, 0) - digits.targets[static_cast<std::size_t>(i)], 2);
    EXPECT_NEAR(loss.value()(0, 0), expect / 4, 1e-12);
  }

  // two sets of three members
  const std::vector<Tensor> sets{Tensor::Zero(3, 2), Tensor::Zero(3, 2)};
  const SetBatch sb = SetBatch::from_sets(sets);
  const std::vector<double> targets{2, 0};
  Tensor scores(6, 1);
  scores << 0.1, 0.4, 1.0, 0.3, 0.2, -0.5;
  {
    Tape tape;
    const Var loss = task_loss(TrainConfig::defaults(TaskKind::kOutlier), tape.constant(scores), sb, targets);
    const double l0 = std::log(std::exp(0.1) + std::exp(0.4) + std::exp(1.0)) - 1.0;
    const double l1 = std::log(std::exp(0.3) + std::exp(0.2) + std::exp(-0.5)) - 0.3;
    EXPECT_NEAR(loss.value()(0, 0), (l0 + l1) / 2, 1e-14);
  }
  {
    auto c = TrainConfig::defaults(TaskKind::kOutlier);
    c.loss = LossKind::kMargin;
    c.margin = 0.7;
    Tape tape;
    const Var loss = task_loss(c, tape.constant(scores), sb, targets);
    // (outlier, inlier) pairs: set 0 -> (1.0, 0.1), (1.0, 0.4); set 1 -> (0.3, 0.2), (0.3, -0.5)
    const double expect = (0.0 + 0.1 + 0.6 + 0.0) / 4.0;
    EXPECT_NEAR(loss.value()(0, 0), expect, 1e-14);
  }
}

TEST(Evaluate, FirstArgmaxBreaksTiesLow) {
  EXPECT_EQ(first_argmax(std::vector<double>{1, 3, 3, 2}), 1);
  EXPECT_EQ(first_argmax(std::vector<double>{5}), 0);
}

TEST(Evaluate, PerfectDigitSumModelScoresOne) {
  const auto data = gen_digit_sum(300, 10, 0, 8);
  EXPECT_EQ(evaluate(digit_sum_oracle(), data, TaskKind::kDigitSum).eval_metric, 1.0);
}

TEST(Evaluate, ZeroModelMseIsMeanSquaredTarget) {
  GaussianTaskSpec spec;
  spec.kind = GaussianKind::kRotation;
  spec.num_sets = 50;
  spec.set_size_min = 5;
  spec.set_size_max = 9;
  const auto data = gen_population_task(spec);
  double expect = 0;
  for (double t : data.targets) expect += t * t;
  expect /= static_cast<double>(data.size());
  EXPECT_NEAR(evaluate(constant_zero(2), data, TaskKind::kPopulation).eval_metric, expect, 1e-12);
}

TEST(Evaluate, PermutationStable) {
  TrainConfig c = TrainConfig::defaults(TaskKind::kPopulation);
  c.seed = 3;
  GaussianTaskSpec spec;
  spec.kind = GaussianKind::kRotation;
  spec.num_sets = 40;
  spec.set_size_min = 20;
  spec.set_size_max = 40;
  const auto pop = gen_population_task(spec);
  const SetModel pm = build_model(c, 2);
  EXPECT_NEAR(evaluate(pm, shuffle_members(pop, 1), TaskKind::kPopulation).eval_metric,
              evaluate(pm, pop, TaskKind::kPopulation).eval_metric, 1e-6);

  const auto out = gen_outlier_sets(200, 16, 8, 4.0, 2);
  TrainConfig oc = TrainConfig::defaults(TaskKind::kOutlier);
  oc.seed = 3;
  const SetModel om = build_model(oc, 8);
  EXPECT_EQ(evaluate(om, shuffle_members(out, 5), TaskKind::kOutlier).eval_metric,
            evaluate(om, out, TaskKind::kOutlier).eval_metric);

  const auto digits = gen_digit_sum(100, 10, 0, 3);
  const SetModel dm = build_model(TrainConfig::defaults(TaskKind::kDigitSum), 10);
  EXPECT_NEAR(evaluate(dm, shuffle_members(digits, 4), TaskKind::kDigitSum).eval_metric,
              evaluate(dm, digits, TaskKind::kDigitSum).eval_metric, 1e-6);
}

TEST(Train, DigitSumLossDropsTenfold) {
  const auto data = gen_digit_sum(1000, 10, 0, 21);
  const LabeledSetDataset copy = data;
  TrainConfig c = TrainConfig::defaults(TaskKind::kDigitSum);
  c.epochs = 50;
  c.seed = 1;
  const auto result = train(c, data);
  ASSERT_EQ(result.metrics.size(), 50u);
  for (std::size_t i = 0; i < result.metrics.size(); ++i) EXPECT_EQ(result.metrics[i].epoch, static_cast<int>(i + 1));
  EXPECT_LT(result.metrics.back().train_loss, 0.1 * result.metrics.front().train_loss);
  // the dataset is untouched
  EXPECT_EQ(data.sets, copy.sets);
  EXPECT_EQ(data.targets, copy.targets);
}

TEST(Train, DeterministicMetrics) {
  const auto data = gen_digit_sum(200, 8, 0, 4);
  TrainConfig c = TrainConfig::defaults(TaskKind::kDigitSum);
  c.epochs = 3;
  c.seed = 12;
  const auto a = train(c, data);
  const auto b = train(c, data);
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  EXPECT_EQ(model_to_json(a.model, c.task).dump(), model_to_json(b.model, c.task).dump());
  for (const auto& r : a.metrics) EXPECT_EQ(r.wall_seconds, 0.0);
}

TEST(Train, OutlierWithoutSignalStaysAtChance) {
  const auto data = gen_outlier_sets(2000, 16, 8, 0.0, 31);
  const auto test = gen_outlier_sets(2000, 16, 8, 0.0, 32);
  TrainConfig c = TrainConfig::defaults(TaskKind::kOutlier);
  c.epochs = 3;
  c.seed = 2;
  const auto result = train(c, data, &test);
  EXPECT_NEAR(result.metrics.back().eval_metric, 1.0 / 16.0, 0.05);
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  auto data = gen_digit_sum(20, 5, 0, 1);
  for (auto& t : data.targets) t = 1e200;
  TrainConfig c = TrainConfig::defaults(TaskKind::kDigitSum);
  c.epochs = 1;
  try {
    train(c, data);
    FAIL() << "expected a TrainingError";
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch"), std::string::npos) << what;
    EXPECT_NE(what.find("batch"), std::string::npos) << what;
    EXPECT_NE(what.find("norm"), std::string::npos) << what;
  }
}

TEST(Train, RejectsMismatchedData) {
  const auto data = gen_outlier_sets(10, 4, 3, 4.0, 1);
  EXPECT_ANY_THROW(train(TrainConfig::defaults(TaskKind::kDigitSum), data));
}
