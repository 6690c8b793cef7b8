#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepsets {

struct CheckOutcome {
  std::string suite;
  std::string name;
  bool passed = false;
  /// Worst observed error (or count) against the threshold it was held to.
  double observed = 0.0;
  double threshold = 0.0;
  double seconds = 0.0;
};

// Each suite is pure and deterministic in its seed.

/// Random invariant models on random sets of size 1-50: permuting the
/// elements leaves the output unchanged (relative 1e-6).
std::vector<CheckOutcome> check_invariance(std::uint64_t seed, int trials = 100);

/// Random equivariant stacks of depth 1-4 commute with element permutations;
/// lambda I + gamma 11^T commutes with every permutation and the commutant
/// has dimension 2 for M in 2..6.
std::vector<CheckOutcome> check_equivariance(std::uint64_t seed, int trials = 100);

/// Every primitive and both default architectures against central differences.
std::vector<CheckOutcome> check_gradients(std::uint64_t seed);

/// invert(embed(X)) on random separated samples, countable_encode injectivity,
/// and the closed-form constructions.
std::vector<CheckOutcome> check_powersum(std::uint64_t seed, int trials = 200);

/// Count-form scores against the log-Gamma forms.
std::vector<CheckOutcome> check_bayes(std::uint64_t seed, int trials = 1000);

std::vector<CheckOutcome> run_check_battery(std::uint64_t seed);

/// Fixed-width table, one row per outcome, with a closing summary line.
std::string format_check_table(const std::vector<CheckOutcome>& outcomes);

bool all_passed(const std::vector<CheckOutcome>& outcomes);

}  // namespace deepsets
