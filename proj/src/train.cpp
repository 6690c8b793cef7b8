#include "deepsets/train.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace deepsets {

namespace {

constexpr std::array<std::pair<LossKind, std::string_view>, 3> kLosses{
    {{LossKind::kMse, "mse"}, {LossKind::kSetSoftmaxNll, "set-softmax-nll"}, {LossKind::kMargin, "margin"}}};

constexpr std::size_t kEvalChunk = 256;

std::vector<Index> widths_from_json(const nlohmann::json& j) { return j.get<std::vector<Index>>(); }

SetBatch batch_of(const LabeledSetDataset& data, std::span<const std::size_t> indices) {
  std::vector<Tensor> sets;
  sets.reserve(indices.size());
  for (std::size_t i : indices) sets.push_back(data.sets[i]);
  return SetBatch::from_sets(sets);
}

// Offsets of per-member scores: the batch offsets for a per-element output,
// fixed strides for an N x K output.
std::vector<Index> score_offsets(const Tensor& out, const SetBatch& batch) {
  if (out.cols() == 1 && out.rows() == batch.total_elements()) {
    return {batch.offsets().begin(), batch.offsets().end()};
  }
  if (out.rows() == batch.num_sets()) {
    std::vector<Index> offsets{0};
    for (Index s = 0; s < batch.num_sets(); ++s) {
      if (batch.set_size(s) != out.cols()) {
        throw ShapeError("outlier scores: output width " + std::to_string(out.cols()) + " but set has " +
                         std::to_string(batch.set_size(s)) + " members");
      }
      offsets.push_back(offsets.back() + out.cols());
    }
    return offsets;
  }
  throw ShapeError("outlier scores: output shape does not match the batch");
}

std::string parameter_norms(const SetModel& model) {
  std::ostringstream os;
  os << std::setprecision(4);
  bool first = true;
  for (const Tensor* p : parameters(model)) {
    os << (first ? "" : ", ") << p->norm();
    first = false;
  }
  return os.str();
}

}  // namespace

std::string_view to_string(LossKind l) {
  for (const auto& [k, n] : kLosses) {
    if (k == l) return n;
  }
  return "unknown";
}

LossKind loss_from_string(std::string_view s) {
  for (const auto& [k, n] : kLosses) {
    if (n == s) return k;
  }
  throw std::invalid_argument("unknown loss: " + std::string(s));
}

TrainConfig TrainConfig::defaults(TaskKind task) {
  TrainConfig c;
  c.task = task;
  if (task == TaskKind::kOutlier) {
    c.architecture.kind = ArchitectureSpec::Kind::kEquivariant;
    c.loss = LossKind::kSetSoftmaxNll;
    c.batch_size = 8;
  } else {
    c.architecture.kind = ArchitectureSpec::Kind::kInvariant;
    c.loss = LossKind::kMse;
  }
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c = defaults(task_from_string(j.value("task", std::string("digit-sum"))));
  if (j.contains("architecture")) {
    const auto& a = j["architecture"];
    ArchitectureSpec& arch = c.architecture;
    if (a.contains("kind")) {
      const auto kind = a["kind"].get<std::string>();
      if (kind == "invariant") {
        arch.kind = ArchitectureSpec::Kind::kInvariant;
      } else if (kind == "equivariant") {
        arch.kind = ArchitectureSpec::Kind::kEquivariant;
      } else {
        throw std::invalid_argument("unknown architecture kind: " + kind);
      }
    }
    if (a.contains("phi")) arch.phi_widths = widths_from_json(a["phi"]);
    if (a.contains("rho")) arch.rho_widths = widths_from_json(a["rho"]);
    if (a.contains("pool")) arch.pool = pool_from_string(a["pool"].get<std::string>());
    if (a.contains("phi_activation")) arch.phi_activation = activation_from_string(a["phi_activation"].get<std::string>());
    if (a.contains("rho_activation")) arch.rho_activation = activation_from_string(a["rho_activation"].get<std::string>());
    if (a.contains("variant")) arch.variant = equivariant_variant_from_string(a["variant"].get<std::string>());
    if (a.contains("widths")) arch.equivariant_widths = widths_from_json(a["widths"]);
    if (a.contains("activation")) {
      arch.equivariant_activation = activation_from_string(a["activation"].get<std::string>());
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.step_size = o.value("step_size", c.optimizer.step_size);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss")) c.loss = loss_from_string(j["loss"].get<std::string>());
  c.margin = j.value("margin", c.margin);
  c.step_decay = j.value("step_decay", c.step_decay);
  c.record_timing = j.value("record_timing", c.record_timing);
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  const ArchitectureSpec& a = architecture;
  nlohmann::json arch;
  if (a.kind == ArchitectureSpec::Kind::kInvariant) {
    arch = {{"kind", "invariant"},
            {"phi", a.phi_widths},
            {"rho", a.rho_widths},
            {"pool", std::string(to_string(a.pool))},
            {"phi_activation", std::string(to_string(a.phi_activation))},
            {"rho_activation", std::string(to_string(a.rho_activation))}};
  } else {
    arch = {{"kind", "equivariant"},
            {"variant", std::string(to_string(a.variant))},
            {"widths", a.equivariant_widths},
            {"activation", std::string(to_string(a.equivariant_activation))}};
  }
  return {{"task", std::string(to_string(task))},
          {"architecture", arch},
          {"optimizer",
           {{"step_size", optimizer.step_size},
            {"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"epsilon", optimizer.epsilon}}},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"loss", std::string(to_string(loss))},
          {"margin", margin},
          {"step_decay", step_decay},
          {"record_timing", record_timing}};
}

void TrainConfig::validate() const {
  const bool regression = task == TaskKind::kPopulation || task == TaskKind::kDigitSum;
  if (regression && loss != LossKind::kMse) throw std::invalid_argument("regression tasks train with the mse loss");
  if (task == TaskKind::kOutlier && loss == LossKind::kMse) {
    throw std::invalid_argument("the outlier task trains with set-softmax-nll or margin");
  }
  if (loss == LossKind::kMargin && architecture.kind != ArchitectureSpec::Kind::kEquivariant) {
    throw std::invalid_argument("the margin loss needs per-member scores from an equivariant model");
  }
  if (regression && architecture.kind != ArchitectureSpec::Kind::kInvariant) {
    throw std::invalid_argument("regression tasks need an invariant architecture");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(optimizer.step_size > 0.0) || !(optimizer.epsilon > 0.0)) {
    throw std::invalid_argument("optimizer step size and epsilon must be positive");
  }
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0) {
    throw std::invalid_argument("optimizer betas must lie in [0, 1)");
  }
  if (!(step_decay > 0.0) || step_decay > 1.0) throw std::invalid_argument("step_decay must lie in (0, 1]");
  if (margin < 0.0) throw std::invalid_argument("margin must be non-negative");
  const auto& widths = architecture.kind == ArchitectureSpec::Kind::kInvariant ? architecture.rho_widths
                                                                               : architecture.equivariant_widths;
  if (architecture.kind == ArchitectureSpec::Kind::kEquivariant && widths.empty()) {
    throw std::invalid_argument("equivariant architecture needs at least one layer");
  }
  if (regression && (widths.empty() || widths.back() != 1)) {
    throw std::invalid_argument("regression models must end in a single output");
  }
  if (task == TaskKind::kOutlier && architecture.kind == ArchitectureSpec::Kind::kEquivariant && widths.back() != 1) {
    throw std::invalid_argument("equivariant outlier models must emit one score per member");
  }
}

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream os;
  os << "epoch,train_loss,eval_metric,wall_seconds\n";
  os << std::setprecision(17);
  for (const auto& r : records) {
    os << r.epoch << ',' << r.train_loss << ',' << r.eval_metric << ',' << r.wall_seconds << '\n';
  }
  return os.str();
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam: one gradient per parameter required");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.push_back(Tensor::Zero(p->rows(), p->cols()));
      v_.push_back(Tensor::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -=
        config_.step_size * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
  }
}

SetModel build_model(const TrainConfig& config, Index input_width, Index set_size) {
  std::mt19937_64 rng = derived_stream(config.seed, 0x6d6f64656cULL);
  const ArchitectureSpec& a = config.architecture;
  if (a.kind == ArchitectureSpec::Kind::kEquivariant) {
    return EquivariantStack::random(a.variant, input_width, a.equivariant_widths, a.equivariant_activation, rng);
  }
  InvariantModel::Architecture arch;
  arch.input_width = input_width;
  arch.phi_widths = a.phi_widths;
  arch.phi_activation = a.phi_activation;
  arch.pool = a.pool;
  arch.rho_widths = a.rho_widths;
  arch.rho_activation = a.rho_activation;
  if (config.task == TaskKind::kOutlier) {
    if (set_size <= 0) throw std::invalid_argument("invariant outlier models need the set size");
    if (arch.rho_widths.empty() || arch.rho_widths.back() != set_size) arch.rho_widths.push_back(set_size);
  }
  return InvariantModel::random(arch, rng);
}

BatchScores predict(const SetModel& model, TaskKind task, const SetBatch& batch) {
  Tape tape;
  const ModelGraph graph = forward(model, tape, batch);
  BatchScores out;
  out.values = graph.output.value();
  if (task == TaskKind::kOutlier) {
    out.offsets = score_offsets(out.values, batch);
  } else if (out.values.cols() != 1 || out.values.rows() != batch.num_sets()) {
    throw ShapeError("regression models must produce one value per set");
  }
  return out;
}

Var task_loss(const TrainConfig& config, Var output, const SetBatch& batch, std::span<const double> targets) {
  Tape& tape = *output.tape();
  if (static_cast<Index>(targets.size()) != batch.num_sets()) throw ShapeError("loss: one target per set required");
  switch (config.loss) {
    case LossKind::kMse: {
      Tensor t(batch.num_sets(), 1);
      for (Index i = 0; i < t.rows(); ++i) t(i, 0) = targets[static_cast<std::size_t>(i)];
      return mse_loss(output, tape.constant(std::move(t)));
    }
    case LossKind::kSetSoftmaxNll: {
      const std::vector<Index> offsets = score_offsets(output.value(), batch);
      std::vector<Index> index(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) index[i] = static_cast<Index>(targets[i]);
      return set_softmax_nll(output, offsets, index);
    }
    case LossKind::kMargin: {
      if (output.cols() != 1 || output.rows() != batch.total_elements()) {
        throw ShapeError("margin loss needs one score per member");
      }
      // Selector rows pick (outlier, other member) score pairs.
      const Index pairs = batch.total_elements() - batch.num_sets();
      Tensor pos = Tensor::Zero(pairs, batch.total_elements());
      Tensor neg = Tensor::Zero(pairs, batch.total_elements());
      Index row = 0;
      for (Index s = 0; s < batch.num_sets(); ++s) {
        const Index begin = batch.offsets()[static_cast<std::size_t>(s)];
        const Index target = begin + static_cast<Index>(targets[static_cast<std::size_t>(s)]);
        for (Index i = begin; i < begin + batch.set_size(s); ++i) {
          if (i == target) continue;
          pos(row, target) = 1.0;
          neg(row, i) = 1.0;
          ++row;
        }
      }
      return hinge_margin_loss(matmul(tape.constant(std::move(pos)), output),
                               matmul(tape.constant(std::move(neg)), output), config.margin);
    }
  }
  throw std::logic_error("unhandled loss");
}

Index first_argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<Index>(best);
}

MetricsRecord evaluate(const SetModel& model, const LabeledSetDataset& data, TaskKind task) {
  if (data.task != task) throw std::invalid_argument("evaluate: dataset task does not match");
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  double accumulated = 0.0;
  std::vector<std::size_t> chunk;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    chunk.resize(std::min(kEvalChunk, data.size() - begin));
    std::iota(chunk.begin(), chunk.end(), begin);
    const SetBatch batch = batch_of(data, chunk);
    const BatchScores scores = predict(model, task, batch);
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const double target = data.targets[chunk[k]];
      switch (task) {
        case TaskKind::kPopulation: {
          const double r = scores.values(static_cast<Index>(k), 0) - target;
          accumulated += r * r;
          break;
        }
        case TaskKind::kDigitSum:
          accumulated += std::round(scores.values(static_cast<Index>(k), 0)) == target ? 1.0 : 0.0;
          break;
        case TaskKind::kOutlier: {
          const Index b = scores.offsets[k];
          const Index e = scores.offsets[k + 1];
          const std::span<const double> member_scores(scores.values.data() + b, static_cast<std::size_t>(e - b));
          accumulated += static_cast<double>(first_argmax(member_scores)) == target ? 1.0 : 0.0;
          break;
        }
      }
    }
  }
  MetricsRecord r;
  r.eval_metric = accumulated / static_cast<double>(data.size());
  return r;
}

TrainResult train(const TrainConfig& config, const LabeledSetDataset& data, const LabeledSetDataset* eval) {
#ifdef __GLIBC__
  // Batch activations run to tens of MB; keep them on the heap instead of
  // paying for fresh mmap pages every step.
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)tuned;
#endif
  config.validate();
  data.validate();
  if (data.task != config.task) throw std::invalid_argument("train: dataset task does not match the config");
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (eval != nullptr && eval->task != config.task) throw std::invalid_argument("train: eval task does not match");

  TrainResult result{build_model(config, data.sets.front().cols(), data.sets.front().rows()), {}};
  Adam adam(config.optimizer);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    auto rng = derived_stream(config.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::span<const std::size_t> indices(order.data() + begin,
                                                 std::min(config.batch_size, order.size() - begin));
      const SetBatch batch = batch_of(data, indices);
      std::vector<double> targets;
      targets.reserve(indices.size());
      for (std::size_t i : indices) targets.push_back(data.targets[i]);

      Tape tape;
      double loss_value = 0.0;
      std::vector<Tensor> grads;
      try {
        const ModelGraph graph = forward(result.model, tape, batch);
        const Var loss = task_loss(config, graph.output, batch, targets);
        loss_value = loss.value()(0, 0);
        tape.backprop(loss);
        for (const Var& p : graph.parameters) grads.push_back(tape.grad(p));
      } catch (const NonFiniteError& e) {
        throw TrainingError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + " (" + e.what() + "); parameter norms: " +
                            parameter_norms(result.model));
      }
      adam.step(parameters(result.model), grads);
      loss_sum += loss_value * static_cast<double>(indices.size());
    }
    adam.set_step_size(adam.step_size() * config.step_decay);

    MetricsRecord record = evaluate(result.model, eval != nullptr ? *eval : data, config.task);
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(data.size());
    if (config.record_timing) {
      record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.metrics.push_back(record);
  }
  return result;
}

}  // namespace deepsets
