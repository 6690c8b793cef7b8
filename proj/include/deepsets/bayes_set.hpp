#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace deepsets::bayes {

using Eigen::Index;
using BitVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

/// d-dimensional binary feature vector.
class BinaryItem {
 public:
  BinaryItem() = default;
  /// Throws std::invalid_argument unless every entry is 0 or 1.
  explicit BinaryItem(BitVector bits);
  static BinaryItem from_bits(std::span<const int> bits);

  [[nodiscard]] const BitVector& bits() const { return bits_; }
  [[nodiscard]] Index dim() const { return bits_.size(); }
  [[nodiscard]] bool operator[](Index i) const { return bits_[i] != 0; }

 private:
  BitVector bits_;
};

/// Independent Beta-Bernoulli coordinates with pseudo-counts beta+ / beta-.
class BetaBinomialModel {
 public:
  BetaBinomialModel(Eigen::ArrayXd beta_plus, Eigen::ArrayXd beta_minus);
  /// beta+ = beta- = 1 in every coordinate.
  static BetaBinomialModel uniform(Index d);

  [[nodiscard]] Index dim() const { return beta_plus_.size(); }
  [[nodiscard]] const Eigen::ArrayXd& beta_plus() const { return beta_plus_; }
  [[nodiscard]] const Eigen::ArrayXd& beta_minus() const { return beta_minus_; }

 private:
  Eigen::ArrayXd beta_plus_;
  Eigen::ArrayXd beta_minus_;
};

/// Per-coordinate counts of ones over a collection, and its size.
struct SetCounts {
  Eigen::ArrayXi ones;
  int size = 0;
};

SetCounts count(std::span<const BinaryItem> items, Index d);

/// s(x|X) from counts: sum over coordinates of
///   log((b+ + M+)/(b + M)) - log(b+/b)   if x_j = 1
///   log((b- + M-)/(b + M)) - log(b-/b)   otherwise.
double score_item(const BetaBinomialModel& model, std::span<const BinaryItem> set, const BinaryItem& x);
double score_item(const BetaBinomialModel& model, const SetCounts& counts, const BinaryItem& x);

/// log p(X | beta) through log-Gamma, X possibly empty (gives 0).
double log_marginal_likelihood(const BetaBinomialModel& model, std::span<const BinaryItem> set);

/// log p(X u {x}) - log p(X) - log p({x}), evaluated with log-Gamma.
double score_item_marginal(const BetaBinomialModel& model, std::span<const BinaryItem> set, const BinaryItem& x);

/// S(X) = log p(X) - sum_m log p({x_m}). Requires a non-empty set.
double score_set(const BetaBinomialModel& model, std::span<const BinaryItem> set);

struct RankedCandidate {
  std::size_t index = 0;
  double score = 0.0;
};

/// Top-k candidates by s(x|X), descending; ties keep input order.
std::vector<RankedCandidate> expand(const BetaBinomialModel& model, std::span<const BinaryItem> query,
                                    std::span<const BinaryItem> candidates, std::size_t k);

/// max(0, s_neg - s_pos + delta).
double margin_loss(double s_pos, double s_neg, double delta);

}  // namespace deepsets::bayes
