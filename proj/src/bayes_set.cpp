#include "deepsets/bayes_set.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace deepsets::bayes {

namespace {

void require_dim(Index expected, Index got) {
  if (expected != got) {
    throw std::invalid_argument("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                                std::to_string(got));
  }
}

// log p(X) for per-coordinate counts: lnB(b+ + M+, b- + M-) - lnB(b+, b-).
double log_marginal_from_counts(const BetaBinomialModel& model, const SetCounts& counts) {
  double total = 0.0;
  for (Index j = 0; j < model.dim(); ++j) {
    const double bp = model.beta_plus()[j];
    const double bm = model.beta_minus()[j];
    const double ones = counts.ones[j];
    const double zeros = counts.size - counts.ones[j];
    total += std::lgamma(bp + ones) + std::lgamma(bm + zeros) - std::lgamma(bp + bm + counts.size) -
             std::lgamma(bp) - std::lgamma(bm) + std::lgamma(bp + bm);
  }
  return total;
}

}  // namespace

BinaryItem::BinaryItem(BitVector bits) : bits_(std::move(bits)) {
  for (Index i = 0; i < bits_.size(); ++i) {
    if (bits_[i] > 1) throw std::invalid_argument("BinaryItem: entries must be 0 or 1");
  }
}

BinaryItem BinaryItem::from_bits(std::span<const int> bits) {
  BitVector v(static_cast<Index>(bits.size()));
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0 && bits[i] != 1) throw std::invalid_argument("BinaryItem: entries must be 0 or 1");
    v[static_cast<Index>(i)] = static_cast<std::uint8_t>(bits[i]);
  }
  return BinaryItem(std::move(v));
}

BetaBinomialModel::BetaBinomialModel(Eigen::ArrayXd beta_plus, Eigen::ArrayXd beta_minus)
    : beta_plus_(std::move(beta_plus)), beta_minus_(std::move(beta_minus)) {
  require_dim(beta_plus_.size(), beta_minus_.size());
  if (!(beta_plus_ > 0.0).all() || !(beta_minus_ > 0.0).all() || !beta_plus_.allFinite() ||
      !beta_minus_.allFinite()) {
    throw std::invalid_argument("BetaBinomialModel: pseudo-counts must be positive and finite");
  }
}

BetaBinomialModel BetaBinomialModel::uniform(Index d) {
  return {Eigen::ArrayXd::Ones(d), Eigen::ArrayXd::Ones(d)};
}

SetCounts count(std::span<const BinaryItem> items, Index d) {
  SetCounts c{Eigen::ArrayXi::Zero(d), static_cast<int>(items.size())};
  for (const BinaryItem& item : items) {
    require_dim(d, item.dim());
    c.ones += item.bits().cast<int>().array();
  }
  return c;
}

double score_item(const BetaBinomialModel& model, const SetCounts& counts, const BinaryItem& x) {
  require_dim(model.dim(), x.dim());
  require_dim(model.dim(), counts.ones.size());
  double s = 0.0;
  for (Index j = 0; j < model.dim(); ++j) {
    const double bp = model.beta_plus()[j];
    const double bm = model.beta_minus()[j];
    const double b = bp + bm;
    const double total = b + counts.size;
    if (x[j]) {
      s += std::log((bp + counts.ones[j]) / total) - std::log(bp / b);
    } else {
      s += std::log((bm + (counts.size - counts.ones[j])) / total) - std::log(bm / b);
    }
  }
  return s;
}

double score_item(const BetaBinomialModel& model, std::span<const BinaryItem> set, const BinaryItem& x) {
  return score_item(model, count(set, model.dim()), x);
}

double log_marginal_likelihood(const BetaBinomialModel& model, std::span<const BinaryItem> set) {
  return log_marginal_from_counts(model, count(set, model.dim()));
}

double score_item_marginal(const BetaBinomialModel& model, std::span<const BinaryItem> set, const BinaryItem& x) {
  require_dim(model.dim(), x.dim());
  std::vector<BinaryItem> joined(set.begin(), set.end());
  joined.push_back(x);
  const std::array<BinaryItem, 1> single{x};
  return log_marginal_likelihood(model, joined) - log_marginal_likelihood(model, set) -
         log_marginal_likelihood(model, single);
}

double score_set(const BetaBinomialModel& model, std::span<const BinaryItem> set) {
  if (set.empty()) throw std::invalid_argument("score_set: empty set");
  // Singleton marginals are b+/b or b-/b per coordinate, so their sum over X
  // only needs the counts -- which keeps the score exactly order-free.
  const SetCounts counts = count(set, model.dim());
  const Eigen::ArrayXd total = model.beta_plus() + model.beta_minus();
  const Eigen::ArrayXd ones = counts.ones.cast<double>();
  const Eigen::ArrayXd zeros = static_cast<double>(counts.size) - ones;
  const double singles = (ones * (model.beta_plus() / total).log() + zeros * (model.beta_minus() / total).log()).sum();
  return log_marginal_from_counts(model, counts) - singles;
}

std::vector<RankedCandidate> expand(const BetaBinomialModel& model, std::span<const BinaryItem> query,
                                    std::span<const BinaryItem> candidates, std::size_t k) {
  if (candidates.empty()) throw std::invalid_argument("expand: empty candidate pool");
  if (k == 0 || k > candidates.size()) throw std::invalid_argument("expand: k must lie in [1, |candidates|]");
  const SetCounts counts = count(query, model.dim());
  std::vector<RankedCandidate> ranked(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) ranked[i] = {i, score_item(model, counts, candidates[i])};
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.score > b.score; });
  ranked.resize(k);
  return ranked;
}

double margin_loss(double s_pos, double s_neg, double delta) { return std::max(0.0, s_neg - s_pos + delta); }

}  // namespace deepsets::bayes
