#include "deepsets/check.hpp"

#include "deepsets/bayes_set.hpp"
#include "deepsets/powersum.hpp"
#include "deepsets/tasks.hpp"
#include "deepsets/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace deepsets {

namespace {

using Clock = std::chrono::steady_clock;

// Streams for the suites, so each suite's draws do not depend on which ran before it.
enum Stream : std::uint64_t { kInvariance = 1001, kEquivariance, kGradients, kPowerSum, kBayes };

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

CheckOutcome outcome(std::string suite, std::string name, double observed, double threshold,
                     Clock::time_point start) {
  return {std::move(suite), std::move(name), observed <= threshold, observed, threshold, seconds_since(start)};
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

double max_rel_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_diff(a.data()[i], b.data()[i]));
  return worst;
}

Tensor normal_tensor(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

std::vector<Index> permutation(Index n, std::mt19937_64& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Tensor permute_rows(const Tensor& t, std::span<const Index> perm) {
  Tensor out(t.rows(), t.cols());
  for (Index i = 0; i < t.rows(); ++i) out.row(i) = t.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

template <typename E>
E pick(std::initializer_list<E> options, std::mt19937_64& rng) {
  const auto k = std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng);
  return *(options.begin() + static_cast<std::ptrdiff_t>(k));
}

Index uniform_index(Index lo, Index hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

}  // namespace

std::vector<CheckOutcome> check_invariance(std::uint64_t seed, int trials) {
  const auto start = Clock::now();
  auto rng = derived_stream(seed, kInvariance);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    InvariantModel::Architecture arch;
    arch.input_width = uniform_index(1, 4, rng);
    for (Index k = uniform_index(1, 3, rng); k > 0; --k) arch.phi_widths.push_back(uniform_index(1, 16, rng));
    for (Index k = uniform_index(1, 2, rng); k > 0; --k) arch.rho_widths.push_back(uniform_index(1, 8, rng));
    arch.phi_activation = pick({Activation::kRelu, Activation::kTanh, Activation::kSigmoid, Activation::kElu}, rng);
    arch.rho_activation = pick({Activation::kRelu, Activation::kTanh, Activation::kIdentity}, rng);
    arch.pool = pick({Pool::kSum, Pool::kMax, Pool::kMean}, rng);
    const bool conditioned = t % 4 == 3;
    if (conditioned) {
      arch.condition_mode = ConditionMode::kConcatAfterPool;
      arch.condition_width = uniform_index(1, 3, rng);
    }
    const InvariantModel model = InvariantModel::random(arch, rng);

    // A few sets per batch so ragged offsets are exercised too.
    const Index num_sets = uniform_index(1, 3, rng);
    std::vector<Tensor> sets;
    std::vector<Tensor> permuted;
    for (Index s = 0; s < num_sets; ++s) {
      sets.push_back(normal_tensor(uniform_index(1, 50, rng), arch.input_width, rng));
      const auto perm = permutation(sets.back().rows(), rng);
      permuted.push_back(permute_rows(sets.back(), perm));
    }
    std::optional<Tensor> cond;
    if (conditioned) cond = normal_tensor(num_sets, arch.condition_width, rng);
    const Tensor a = model.predict(SetBatch::from_sets(sets, cond));
    const Tensor b = model.predict(SetBatch::from_sets(permuted, cond));
    worst = std::max(worst, max_rel_diff(a, b));
  }
  return {outcome("invariance", "permuted sets, " + std::to_string(trials) + " random models", worst, 1e-6, start)};
}

std::vector<CheckOutcome> check_equivariance(std::uint64_t seed, int trials) {
  std::vector<CheckOutcome> out;
  auto start = Clock::now();
  auto rng = derived_stream(seed, kEquivariance);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto variant = pick({EquivariantVariant::kScalarLambdaGamma, EquivariantVariant::kFullLambdaGamma,
                               EquivariantVariant::kMaxpoolNormalized, EquivariantVariant::kMaxpoolLambdaGamma},
                              rng);
    const bool scalar = variant == EquivariantVariant::kScalarLambdaGamma;
    const Index input_width = scalar ? 1 : uniform_index(1, 4, rng);
    std::vector<Index> widths;
    for (Index k = uniform_index(1, 4, rng); k > 0; --k) widths.push_back(scalar ? 1 : uniform_index(1, 8, rng));
    const auto activation = pick({Activation::kTanh, Activation::kRelu, Activation::kSigmoid, Activation::kIdentity}, rng);
    const EquivariantStack stack = EquivariantStack::random(variant, input_width, widths, activation, rng);

    const Index num_sets = uniform_index(1, 3, rng);
    std::vector<Tensor> sets;
    std::vector<Tensor> permuted;
    std::vector<std::vector<Index>> perms;
    for (Index s = 0; s < num_sets; ++s) {
      sets.push_back(normal_tensor(uniform_index(1, 20, rng), input_width, rng));
      perms.push_back(permutation(sets.back().rows(), rng));
      permuted.push_back(permute_rows(sets.back(), perms.back()));
    }
    const SetBatch plain = SetBatch::from_sets(sets);
    const Tensor y = stack.predict(plain);
    const Tensor y_perm = stack.predict(SetBatch::from_sets(permuted));
    // pi f(x): permute each set's block of the output the same way.
    Tensor expected(y.rows(), y.cols());
    for (Index s = 0; s < num_sets; ++s) {
      const Index begin = plain.offsets()[static_cast<std::size_t>(s)];
      expected.middleRows(begin, plain.set_size(s)) =
          permute_rows(y.middleRows(begin, plain.set_size(s)), perms[static_cast<std::size_t>(s)]);
    }
    worst = std::max(worst, max_rel_diff(expected, y_perm));
  }
  out.push_back(outcome("equivariance", "f(pi x) = pi f(x), " + std::to_string(trials) + " random stacks", worst,
                        1e-9, start));

  start = Clock::now();
  double commute_failures = 0.0;
  for (Index m = 1; m <= 6; ++m) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    if (!commutes_with_all_permutations(build_theta(u(rng), u(rng), m))) commute_failures += 1.0;
    // Breaking the sharing pattern must be detected.
    if (m >= 2) {
      Tensor broken = build_theta(u(rng), u(rng), m);
      broken(0, 1) += 0.5;
      if (commutes_with_all_permutations(broken)) commute_failures += 1.0;
    }
  }
  out.push_back(outcome("equivariance", "lambda I + gamma 11^T commutes, perturbed does not", commute_failures, 0.0,
                        start));

  start = Clock::now();
  double dim_errors = 0.0;
  for (Index m = 2; m <= 6; ++m) dim_errors += std::abs(static_cast<double>(commutant_dimension(m)) - 2.0);
  out.push_back(outcome("equivariance", "commutant dimension 2 for M = 2..6", dim_errors, 0.0, start));
  return out;
}

namespace {

// r^T y c with fixed, shape-determined r and c: a generic scalar probe of y.
Var probe(Tape& tape, Var y) {
  Tensor r(1, y.rows());
  Tensor c(y.cols(), 1);
  for (Index i = 0; i < r.cols(); ++i) r(0, i) = std::cos(0.3 + 0.7 * static_cast<double>(i));
  for (Index j = 0; j < c.rows(); ++j) c(j, 0) = std::sin(0.5 + 1.3 * static_cast<double>(j));
  return matmul(matmul(tape.constant(std::move(r)), y), tape.constant(std::move(c)));
}

// Entries bounded away from zero, for kinked activations.
Tensor away_from_zero(Index rows, Index cols, std::mt19937_64& rng) {
  Tensor t = normal_tensor(rows, cols, rng);
  for (Index i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    v = std::copysign(0.1 + std::abs(v), v == 0.0 ? 1.0 : v);
  }
  return t;
}

// Distinct values spaced at least 0.05 apart in random positions, for max reductions.
Tensor distinct_values(Index rows, Index cols, std::mt19937_64& rng) {
  Tensor t(rows, cols);
  const auto order = permutation(rows * cols, rng);
  std::uniform_real_distribution<double> jitter(0.0, 0.05);
  for (Index i = 0; i < t.size(); ++i) {
    t.data()[i] = 0.1 * static_cast<double>(order[static_cast<std::size_t>(i)]) - 1.0 + jitter(rng);
  }
  return t;
}

struct GradCase {
  std::string name;
  GraphBuilder f;
  std::vector<Tensor> params;
  double threshold;
};

}  // namespace

std::vector<CheckOutcome> check_gradients(std::uint64_t seed) {
  auto rng = derived_stream(seed, kGradients);
  constexpr double kSmooth = 1e-6;
  constexpr double kKinked = 1e-4;
  static const std::vector<Index> kOffsets{0, 2, 5, 6};

  std::vector<GradCase> cases;
  auto unary = [&](std::string name, std::function<Var(Var)> op, Tensor x, double threshold) {
    cases.push_back({std::move(name), [op](Tape& t, std::span<const Var> p) { return probe(t, op(p[0])); },
                     {std::move(x)}, threshold});
  };
  auto binary = [&](std::string name, std::function<Var(Var, Var)> op, Tensor a, Tensor b, double threshold) {
    cases.push_back({std::move(name), [op](Tape& t, std::span<const Var> p) { return probe(t, op(p[0], p[1])); },
                     {std::move(a), std::move(b)}, threshold});
  };

  binary("matmul", [](Var a, Var b) { return matmul(a, b); }, normal_tensor(3, 4, rng), normal_tensor(4, 2, rng),
         kSmooth);
  binary("add", [](Var a, Var b) { return add(a, b); }, normal_tensor(3, 4, rng), normal_tensor(3, 4, rng), kSmooth);
  binary("add (row broadcast)", [](Var a, Var b) { return add(a, b); }, normal_tensor(3, 4, rng),
         normal_tensor(1, 4, rng), kSmooth);
  binary("sub", [](Var a, Var b) { return sub(a, b); }, normal_tensor(3, 4, rng), normal_tensor(3, 4, rng), kSmooth);
  binary("sub (row broadcast)", [](Var a, Var b) { return sub(a, b); }, normal_tensor(3, 4, rng),
         normal_tensor(1, 4, rng), kSmooth);
  unary("scale", [](Var a) { return scale(a, -1.7); }, normal_tensor(3, 4, rng), kSmooth);
  unary("relu", [](Var a) { return relu(a); }, away_from_zero(3, 4, rng), kKinked);
  unary("tanh", [](Var a) { return tanh(a); }, normal_tensor(3, 4, rng), kSmooth);
  unary("sigmoid", [](Var a) { return sigmoid(a); }, normal_tensor(3, 4, rng), kSmooth);
  unary("elu", [](Var a) { return elu(a); }, away_from_zero(3, 4, rng), kKinked);
  for (int axis : {0, 1}) {
    const std::string ax = " axis " + std::to_string(axis);
    unary("reduce_sum" + ax, [axis](Var a) { return reduce_sum(a, axis); }, normal_tensor(3, 4, rng), kSmooth);
    unary("reduce_max" + ax, [axis](Var a) { return reduce_max(a, axis); }, distinct_values(3, 4, rng), kKinked);
    unary("reduce_mean" + ax, [axis](Var a) { return reduce_mean(a, axis); }, normal_tensor(3, 4, rng), kSmooth);
    unary("softmax" + ax, [axis](Var a) { return softmax(a, axis); }, normal_tensor(3, 4, rng), kSmooth);
  }
  binary("concat axis 0", [](Var a, Var b) { return concat(a, b, 0); }, normal_tensor(2, 3, rng),
         normal_tensor(4, 3, rng), kSmooth);
  binary("concat axis 1", [](Var a, Var b) { return concat(a, b, 1); }, normal_tensor(3, 2, rng),
         normal_tensor(3, 4, rng), kSmooth);
  unary("segment_sum", [](Var a) { return segment_sum(a, kOffsets); }, normal_tensor(6, 3, rng), kSmooth);
  unary("segment_max", [](Var a) { return segment_max(a, kOffsets); }, distinct_values(6, 3, rng), kKinked);
  unary("segment_mean", [](Var a) { return segment_mean(a, kOffsets); }, normal_tensor(6, 3, rng), kSmooth);
  unary("segment_broadcast", [](Var a) { return segment_broadcast(a, kOffsets); }, normal_tensor(3, 3, rng),
        kSmooth);
  binary("mse_loss", [](Var a, Var b) { return mse_loss(a, b); }, normal_tensor(4, 2, rng), normal_tensor(4, 2, rng),
         kSmooth);
  {
    // Hinge arguments kept 0.1 or more from the kink, some active and some not.
    Tensor pos = normal_tensor(6, 1, rng);
    Tensor neg(6, 1);
    for (Index i = 0; i < 6; ++i) neg(i, 0) = pos(i, 0) - 1.0 + (i % 2 == 0 ? 0.4 : -0.4) + 0.1 * static_cast<double>(i % 3);
    binary("hinge_margin_loss", [](Var a, Var b) { return hinge_margin_loss(a, b, 1.0); }, std::move(pos),
           std::move(neg), kKinked);
  }
  cases.push_back({"set_softmax_nll",
                   [](Tape&, std::span<const Var> p) {
                     static const std::vector<Index> targets{1, 0, 0};
                     return set_softmax_nll(p[0], kOffsets, targets);
                   },
                   {normal_tensor(6, 1, rng)},
                   kSmooth});

  // Default architectures on small batches, through their training losses.
  {
    const TrainConfig config = TrainConfig::defaults(TaskKind::kDigitSum);
    const auto data = gen_digit_sum(3, 10, 0, seed);
    const auto model = std::get<InvariantModel>(build_model(config, 10));
    auto batch = std::make_shared<SetBatch>(SetBatch::from_sets(data.sets));
    auto targets = std::make_shared<std::vector<double>>(data.targets);
    std::vector<Tensor> params;
    for (const Tensor* p : model.parameters()) params.push_back(*p);
    cases.push_back({"default invariant model (mse)",
                     [model, batch, targets, config](Tape& t, std::span<const Var> p) {
                       return task_loss(config, model.forward(t, *batch, p), *batch, *targets);
                     },
                     std::move(params), kKinked});
  }
  {
    const TrainConfig config = TrainConfig::defaults(TaskKind::kOutlier);
    const auto data = gen_outlier_sets(2, 5, 3, 2.0, seed);
    const auto model = std::get<EquivariantStack>(build_model(config, 3));
    auto batch = std::make_shared<SetBatch>(SetBatch::from_sets(data.sets));
    auto targets = std::make_shared<std::vector<double>>(data.targets);
    std::vector<Tensor> params;
    for (const Tensor* p : model.parameters()) params.push_back(*p);
    // The default variant subtracts a max pool, so it is only piecewise smooth.
    cases.push_back({"default equivariant model (set softmax)",
                     [model, batch, targets, config](Tape& t, std::span<const Var> p) {
                       return task_loss(config, model.forward(t, *batch, p), *batch, *targets);
                     },
                     std::move(params), kKinked});
  }

  std::vector<CheckOutcome> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto start = Clock::now();
    const GradCheckResult r = grad_check(cases[i].f, cases[i].params, 1e-5, 16, seed + i);
    out.push_back(outcome("gradients", cases[i].name, r.max_relative_error, cases[i].threshold, start));
  }
  return out;
}

std::vector<CheckOutcome> check_powersum(std::uint64_t seed, int trials) {
  namespace ps = powersum;
  std::vector<CheckOutcome> out;
  auto rng = derived_stream(seed, kPowerSum);

  auto start = Clock::now();
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Index m = uniform_index(2, 8, rng);
    // Redraw until every gap is at least 1e-3.
    ps::Vec<double> v(m);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (true) {
      for (Index i = 0; i < m; ++i) v[i] = u(rng);
      std::sort(v.data(), v.data() + m);
      bool ok = true;
      for (Index i = 1; i < m; ++i) ok = ok && v[i] - v[i - 1] >= 1e-3;
      if (ok) break;
    }
    const auto sample = ps::SortedSample<double>::from_values(v);
    double err = std::numeric_limits<double>::infinity();
    try {
      const auto back = ps::invert(ps::embed(sample));
      err = (back.values() - sample.values()).cwiseAbs().maxCoeff();
    } catch (const ps::ConvergenceError&) {
    }
    worst = std::max(worst, err);
  }
  out.push_back(outcome("powersum", "invert(embed(X)), " + std::to_string(trials) + " samples, M = 2..8", worst, 1e-6,
                        start));

  start = Clock::now();
  {
    std::map<int, unsigned> code;
    for (unsigned k = 0; k < 12; ++k) code[static_cast<int>(k)] = k;
    std::set<double> seen;
    for (unsigned mask = 0; mask < (1U << 12); ++mask) {
      std::vector<int> subset;
      for (int k = 0; k < 12; ++k) {
        if ((mask >> k) & 1U) subset.push_back(k);
      }
      seen.insert(ps::countable_encode(subset, code));
    }
    out.push_back(outcome("powersum", "countable_encode injective on 2^12 subsets",
                          static_cast<double>((1U << 12) - seen.size()), 0.0, start));
  }

  start = Clock::now();
  {
    double exact_err = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
      for (auto [form, m] : {std::pair{ps::ClosedForm::kMean, uniform_index(1, 10, rng)},
                             std::pair{ps::ClosedForm::kPolyX1X2, Index{2}}, std::pair{ps::ClosedForm::kPolySym3, Index{3}}}) {
        ps::Vec<double> x(m);
        for (Index i = 0; i < m; ++i) x[i] = u(rng);
        const auto r = ps::closed_form_eval(form, x);
        exact_err = std::max(exact_err, rel_diff(r.construction, r.reference));
      }
    }
    out.push_back(outcome("powersum", "mean and polynomial closed forms", exact_err, 1e-12, start));
  }

  start = Clock::now();
  {
    // Count of sets where the smooth-max error fails to shrink over alpha = 10, 50, 200.
    double violations = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
      ps::Vec<double> x(uniform_index(2, 8, rng));
      for (Index i = 0; i < x.size(); ++i) x[i] = u(rng);
      double prev = std::numeric_limits<double>::infinity();
      for (double alpha : {10.0, 50.0, 200.0}) {
        const auto r = ps::closed_form_eval(ps::ClosedForm::kMaxSmooth, x, alpha);
        const double err = std::abs(r.construction - r.reference);
        // Once the construction is within a few ulps it cannot shrink further.
        const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(r.reference));
        if (!(err < prev || err <= floor)) violations += 1.0;
        prev = err;
      }
    }
    out.push_back(outcome("powersum", "smooth max error decreasing in alpha", violations, 0.0, start));
  }
  return out;
}

std::vector<CheckOutcome> check_bayes(std::uint64_t seed, int trials) {
  namespace bs = bayes;
  auto rng = derived_stream(seed, kBayes);
  std::uniform_real_distribution<double> prior(0.1, 5.0);
  std::bernoulli_distribution bit(0.4);

  auto random_item = [&](Index d) {
    bs::BitVector b(d);
    for (Index j = 0; j < d; ++j) b[j] = bit(rng) ? 1 : 0;
    return bs::BinaryItem(std::move(b));
  };

  const auto start = Clock::now();
  double item_err = 0.0;
  double set_err = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Index d = uniform_index(1, 12, rng);
    Eigen::ArrayXd bp(d);
    Eigen::ArrayXd bm(d);
    for (Index j = 0; j < d; ++j) {
      bp[j] = prior(rng);
      bm[j] = prior(rng);
    }
    const bs::BetaBinomialModel model(bp, bm);
    std::vector<bs::BinaryItem> set;
    for (Index k = uniform_index(0, 10, rng); k > 0; --k) set.push_back(random_item(d));
    const bs::BinaryItem x = random_item(d);

    item_err = std::max(item_err, std::abs(bs::score_item(model, set, x) - bs::score_item_marginal(model, set, x)));

    // S(X u {x}) telescopes into the sum of each member's score against its predecessors.
    set.push_back(x);
    double telescoped = 0.0;
    for (std::size_t m = 0; m < set.size(); ++m) {
      telescoped += bs::score_item(model, std::span<const bs::BinaryItem>(set.data(), m), set[m]);
    }
    set_err = std::max(set_err, std::abs(bs::score_set(model, set) - telescoped));
  }
  return {outcome("bayes", "count form = log-Gamma form, " + std::to_string(trials) + " triples", item_err, 1e-9, start),
          outcome("bayes", "score_set = telescoped item scores", set_err, 1e-9, start)};
}

std::vector<CheckOutcome> run_check_battery(std::uint64_t seed) {
  std::vector<CheckOutcome> all;
  for (auto suite : {check_invariance(seed), check_equivariance(seed), check_gradients(seed), check_powersum(seed),
                     check_bayes(seed)}) {
    all.insert(all.end(), suite.begin(), suite.end());
  }
  return all;
}

bool all_passed(const std::vector<CheckOutcome>& outcomes) {
  return std::all_of(outcomes.begin(), outcomes.end(), [](const CheckOutcome& o) { return o.passed; });
}

std::string format_check_table(const std::vector<CheckOutcome>& outcomes) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-13s %-52s %-6s %12s %12s %9s\n", "suite", "check", "result", "observed",
                "threshold", "seconds");
  os << line;
  std::size_t passed = 0;
  for (const auto& o : outcomes) {
    std::snprintf(line, sizeof line, "%-13s %-52s %-6s %12.3e %12.3e %9.3f\n", o.suite.c_str(), o.name.c_str(),
                  o.passed ? "PASS" : "FAIL", o.observed, o.threshold, o.seconds);
    os << line;
    passed += o.passed ? 1 : 0;
  }
  os << passed << "/" << outcomes.size() << " checks passed\n";
  return os.str();
}

}  // namespace deepsets
