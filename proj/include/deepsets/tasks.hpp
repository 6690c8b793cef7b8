#pragma once

#include "deepsets/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace deepsets {

enum class TaskKind { kPopulation, kDigitSum, kOutlier };
enum class GaussianKind { kRotation, kCorrelation, kRank1, kRandom };

std::string_view to_string(TaskKind t);
std::string_view to_string(GaussianKind k);
TaskKind task_from_string(std::string_view s);
GaussianKind gaussian_kind_from_string(std::string_view s);

/// Sets with one scalar target each. For the outlier task the target is the
/// member index of the outlier (an integer stored as a double).
struct LabeledSetDataset {
  TaskKind task = TaskKind::kPopulation;
  std::vector<Tensor> sets;
  std::vector<double> targets;
  /// Generating parameter per set (rotation angle, correlation, rank-1
  /// strength); empty when the task has none.
  std::vector<double> parameters;
  nlohmann::json meta = nlohmann::json::object();

  [[nodiscard]] std::size_t size() const { return sets.size(); }
  /// Throws std::invalid_argument on inconsistent sizes, empty sets or
  /// non-finite targets.
  void validate() const;
  [[nodiscard]] LabeledSetDataset subset(std::span<const std::size_t> indices) const;
};

struct GaussianTaskSpec {
  GaussianKind kind = GaussianKind::kRotation;
  /// 0 selects the default per kind: 2, 16 (per block, 32 overall), 32, 32.
  Index d = 0;
  Index set_size_min = 300;
  Index set_size_max = 500;
  std::size_t num_sets = 0;
  std::uint64_t seed = 0;
  /// Pins alpha / lambda for every set instead of drawing it.
  std::optional<double> fixed_parameter;
  /// Seed of the draws shared by every set (base covariance, rank-1
  /// direction); defaults to `seed`. Lets independent splits share them.
  std::optional<std::uint64_t> base_seed;
  /// Replaces the randomly drawn base covariance (rotation, correlation).
  std::optional<Tensor> base_covariance;
  /// Correlation draws alpha uniformly from (-limit, limit).
  double correlation_limit = 1.0;

  [[nodiscard]] Index dimension() const;
  [[nodiscard]] Index element_width() const;
};

// Analytic Gaussian quantities.
double gaussian_entropy_1d(double variance);
/// 0.5 (ln det S_AA + ln det S_BB - ln det S) with A = first `split` coordinates.
double gaussian_mutual_information(const Tensor& covariance, Index split);
/// 0.5 (sum_i ln S_ii - ln det S).
double gaussian_total_correlation(const Tensor& covariance);
/// A A^T / d + 1e-3 I with A standard normal.
Tensor random_spd(Index d, std::mt19937_64& rng);
Tensor rotation_2d(double alpha);
/// n x d draws from N(0, covariance) via its Cholesky factor.
Tensor sample_gaussian(const Tensor& covariance, Index n, std::mt19937_64& rng);
/// Throws std::domain_error when the smallest eigenvalue is below 1e-6.
void require_positive_definite(const Tensor& covariance);

/// Deterministic stream for item `index` of a run seeded with `seed`.
std::mt19937_64 derived_stream(std::uint64_t seed, std::uint64_t index);

LabeledSetDataset gen_population_task(const GaussianTaskSpec& spec);

/// One-hot digits (width 10), target = digit sum. Sizes are uniform in
/// [1, max_set_size], or exactly `set_size_at_test` when it is positive.
LabeledSetDataset gen_digit_sum(std::size_t num_sets, Index max_set_size, Index set_size_at_test, std::uint64_t seed);

/// M-1 members from N(mu_s, I) and one from N(mu_s + shift u, I) at a random
/// position; target = that position.
LabeledSetDataset gen_outlier_sets(std::size_t num_sets, Index set_size, Index d, double shift, std::uint64_t seed);

// JSONL, one set per line; a ".gz" suffix selects gzip.
void write_jsonl(const LabeledSetDataset& data, const std::filesystem::path& path);
LabeledSetDataset read_jsonl(const std::filesystem::path& path);
/// Writes/reads whole-file text, transparently gzip-compressed for ".gz".
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace deepsets
