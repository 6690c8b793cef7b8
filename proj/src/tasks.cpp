#include "deepsets/tasks.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace deepsets {

namespace {

constexpr std::array<std::pair<TaskKind, std::string_view>, 3> kTasks{
    {{TaskKind::kPopulation, "population"}, {TaskKind::kDigitSum, "digit-sum"}, {TaskKind::kOutlier, "outlier"}}};
constexpr std::array<std::pair<GaussianKind, std::string_view>, 4> kGaussianKinds{{
    {GaussianKind::kRotation, "rotation"},
    {GaussianKind::kCorrelation, "correlation"},
    {GaussianKind::kRank1, "rank1"},
    {GaussianKind::kRandom, "random"},
}};

constexpr std::uint64_t kGlobalStream = ~std::uint64_t{0};
constexpr int kMaxRedraws = 100;

double log_det_spd(const Tensor& s) {
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw std::domain_error("covariance is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Index draw_size(const GaussianTaskSpec& spec, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dist(spec.set_size_min, spec.set_size_max);
  return dist(rng);
}

bool is_positive_definite(const Tensor& covariance) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  return eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() >= 1e-6;
}

}  // namespace

std::string_view to_string(TaskKind t) {
  for (const auto& [k, n] : kTasks) {
    if (k == t) return n;
  }
  return "unknown";
}

std::string_view to_string(GaussianKind k) {
  for (const auto& [g, n] : kGaussianKinds) {
    if (g == k) return n;
  }
  return "unknown";
}

TaskKind task_from_string(std::string_view s) {
  for (const auto& [k, n] : kTasks) {
    if (n == s) return k;
  }
  throw std::invalid_argument("unknown task: " + std::string(s));
}

GaussianKind gaussian_kind_from_string(std::string_view s) {
  for (const auto& [k, n] : kGaussianKinds) {
    if (n == s) return k;
  }
  throw std::invalid_argument("unknown population task kind: " + std::string(s));
}

void LabeledSetDataset::validate() const {
  if (sets.size() != targets.size()) throw std::invalid_argument("dataset: one target per set required");
  if (!parameters.empty() && parameters.size() != sets.size()) {
    throw std::invalid_argument("dataset: parameters must be empty or one per set");
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].rows() == 0) throw std::invalid_argument("dataset: set " + std::to_string(i) + " is empty");
    if (sets[i].cols() != sets.front().cols()) throw std::invalid_argument("dataset: member widths differ");
    if (!std::isfinite(targets[i])) throw std::invalid_argument("dataset: non-finite target");
    if (task == TaskKind::kOutlier) {
      const double t = targets[i];
      if (t != std::floor(t) || t < 0 || t >= static_cast<double>(sets[i].rows())) {
        throw std::invalid_argument("dataset: outlier target is not a member index");
      }
    }
  }
}

LabeledSetDataset LabeledSetDataset::subset(std::span<const std::size_t> indices) const {
  LabeledSetDataset out;
  out.task = task;
  out.meta = meta;
  for (std::size_t i : indices) {
    out.sets.push_back(sets.at(i));
    out.targets.push_back(targets.at(i));
    if (!parameters.empty()) out.parameters.push_back(parameters.at(i));
  }
  return out;
}

Index GaussianTaskSpec::dimension() const {
  if (d > 0) return d;
  switch (kind) {
    case GaussianKind::kRotation:
      return 2;
    case GaussianKind::kCorrelation:
      return 16;
    case GaussianKind::kRank1:
    case GaussianKind::kRandom:
      return 32;
  }
  return 2;
}

Index GaussianTaskSpec::element_width() const {
  return kind == GaussianKind::kCorrelation ? 2 * dimension() : dimension();
}

double gaussian_entropy_1d(double variance) {
  if (!(variance > 0.0)) throw std::domain_error("entropy: variance must be positive");
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

double gaussian_mutual_information(const Tensor& covariance, Index split) {
  const Index d = covariance.rows();
  if (covariance.cols() != d || split <= 0 || split >= d) throw std::invalid_argument("mutual information: bad split");
  return 0.5 * (log_det_spd(covariance.topLeftCorner(split, split)) +
                log_det_spd(covariance.bottomRightCorner(d - split, d - split)) - log_det_spd(covariance));
}

double gaussian_total_correlation(const Tensor& covariance) {
  return 0.5 * (covariance.diagonal().array().log().sum() - log_det_spd(covariance));
}

Tensor random_spd(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor a(d, d);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Tensor s = a * a.transpose() / static_cast<double>(d);
  s.diagonal().array() += 1e-3;
  return s;
}

Tensor rotation_2d(double alpha) {
  Tensor r(2, 2);
  r << std::cos(alpha), -std::sin(alpha), std::sin(alpha), std::cos(alpha);
  return r;
}

void require_positive_definite(const Tensor& covariance) {
  if (covariance.rows() != covariance.cols()) throw std::invalid_argument("covariance must be square");
  if (!is_positive_definite(covariance)) {
    throw std::domain_error("covariance is not positive definite (min eigenvalue below 1e-6)");
  }
}

Tensor sample_gaussian(const Tensor& covariance, Index n, std::mt19937_64& rng) {
  const Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw std::domain_error("covariance is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  std::normal_distribution<double> normal;
  Tensor z(n, covariance.rows());
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  return z * lower.transpose();
}

std::mt19937_64 derived_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

LabeledSetDataset gen_population_task(const GaussianTaskSpec& spec) {
  if (spec.set_size_min < 1 || spec.set_size_max < spec.set_size_min) {
    throw std::invalid_argument("population task: bad set size range");
  }
  if (!(spec.correlation_limit > 0.0) || spec.correlation_limit > 1.0) {
    throw std::invalid_argument("population task: correlation limit must lie in (0, 1]");
  }
  const Index d = spec.dimension();
  LabeledSetDataset out;
  out.task = TaskKind::kPopulation;
  out.meta = {{"task", "population"},
              {"kind", std::string(to_string(spec.kind))},
              {"d", d},
              {"seed", spec.seed},
              {"base_seed", spec.base_seed.value_or(spec.seed)},
              {"set_size_min", spec.set_size_min},
              {"set_size_max", spec.set_size_max}};

  auto global = derived_stream(spec.base_seed.value_or(spec.seed), kGlobalStream);
  Tensor base;
  Vector direction;
  switch (spec.kind) {
    case GaussianKind::kRotation:
    case GaussianKind::kCorrelation:
      base = spec.base_covariance ? *spec.base_covariance : random_spd(d, global);
      if (base.rows() != d || base.cols() != d) throw std::invalid_argument("population task: base covariance shape");
      require_positive_definite(base);
      out.meta["target"] = spec.kind == GaussianKind::kRotation ? "entropy of the first marginal"
                                                                : "mutual information between halves";
      break;
    case GaussianKind::kRank1: {
      std::normal_distribution<double> normal;
      direction.resize(d);
      for (Index i = 0; i < d; ++i) direction[i] = normal(global);
      out.meta["target"] = "total correlation";
      break;
    }
    case GaussianKind::kRandom:
      out.meta["target"] = "total correlation";
      break;
  }

  for (std::size_t s = 0; s < spec.num_sets; ++s) {
    auto rng = derived_stream(spec.seed, s);
    const Index n = draw_size(spec, rng);
    Tensor cov;
    double param = std::numeric_limits<double>::quiet_NaN();
    double target = 0.0;

    // Draws that land on a (numerically) singular covariance are redrawn.
    for (int attempt = 0;; ++attempt) {
      switch (spec.kind) {
        case GaussianKind::kRotation: {
          std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
          param = spec.fixed_parameter.value_or(angle(rng));
          const Tensor r = rotation_2d(param);
          cov = r * base * r.transpose();
          break;
        }
        case GaussianKind::kCorrelation: {
          std::uniform_real_distribution<double> corr(-spec.correlation_limit, spec.correlation_limit);
          param = spec.fixed_parameter.value_or(corr(rng));
          cov.resize(2 * d, 2 * d);
          cov << base, param * base, param * base, base;
          break;
        }
        case GaussianKind::kRank1: {
          std::uniform_real_distribution<double> strength(0.0, 1.0);
          param = spec.fixed_parameter.value_or(strength(rng));
          cov = Tensor::Identity(d, d) + param * direction * direction.transpose();
          break;
        }
        case GaussianKind::kRandom:
          cov = random_spd(d, rng);
          break;
      }
      if (is_positive_definite(cov)) break;
      if (spec.fixed_parameter || attempt + 1 >= kMaxRedraws) require_positive_definite(cov);
    }

    switch (spec.kind) {
      case GaussianKind::kRotation:
        target = gaussian_entropy_1d(cov(0, 0));
        break;
      case GaussianKind::kCorrelation:
        target = gaussian_mutual_information(cov, d);
        break;
      case GaussianKind::kRank1:
      case GaussianKind::kRandom:
        target = gaussian_total_correlation(cov);
        break;
    }
    out.sets.push_back(sample_gaussian(cov, n, rng));
    out.targets.push_back(target);
    if (spec.kind != GaussianKind::kRandom) out.parameters.push_back(param);
  }
  return out;
}

LabeledSetDataset gen_digit_sum(std::size_t num_sets, Index max_set_size, Index set_size_at_test,
                                std::uint64_t seed) {
  if (max_set_size < 1 && set_size_at_test < 1) throw std::invalid_argument("digit-sum: set size must be positive");
  LabeledSetDataset out;
  out.task = TaskKind::kDigitSum;
  out.meta = {{"task", "digit-sum"}, {"seed", seed}, {"max_set_size", max_set_size}};
  if (set_size_at_test > 0) out.meta["set_size"] = set_size_at_test;

  std::uniform_int_distribution<int> digit(0, 9);
  for (std::size_t s = 0; s < num_sets; ++s) {
    auto rng = derived_stream(seed, s);
    const Index m = set_size_at_test > 0 ? set_size_at_test : std::uniform_int_distribution<Index>(1, max_set_size)(rng);
    Tensor set = Tensor::Zero(m, 10);
    double sum = 0.0;
    for (Index i = 0; i < m; ++i) {
      const int v = digit(rng);
      set(i, v) = 1.0;
      sum += v;
    }
    out.sets.push_back(std::move(set));
    out.targets.push_back(sum);
  }
  return out;
}

LabeledSetDataset gen_outlier_sets(std::size_t num_sets, Index set_size, Index d, double shift, std::uint64_t seed) {
  if (set_size < 2) throw std::invalid_argument("outlier task: sets need at least two members");
  if (d < 1) throw std::invalid_argument("outlier task: dimension must be positive");
  if (!(shift >= 0.0)) throw std::invalid_argument("outlier task: shift must be non-negative");
  LabeledSetDataset out;
  out.task = TaskKind::kOutlier;
  out.meta = {{"task", "outlier"}, {"seed", seed}, {"set_size", set_size}, {"d", d}, {"shift", shift}};

  std::normal_distribution<double> normal;
  for (std::size_t s = 0; s < num_sets; ++s) {
    auto rng = derived_stream(seed, s);
    Vector mu(d);
    for (Index j = 0; j < d; ++j) mu[j] = normal(rng);
    Vector u(d);
    do {
      for (Index j = 0; j < d; ++j) u[j] = normal(rng);
    } while (u.norm() == 0.0);
    u.normalize();
    const Index position = std::uniform_int_distribution<Index>(0, set_size - 1)(rng);

    Tensor set(set_size, d);
    for (Index i = 0; i < set_size; ++i) {
      for (Index j = 0; j < d; ++j) set(i, j) = mu[j] + normal(rng);
      if (i == position) set.row(i) += shift * u.transpose();
    }
    out.sets.push_back(std::move(set));
    out.targets.push_back(static_cast<double>(position));
  }
  return out;
}

}  // namespace deepsets
