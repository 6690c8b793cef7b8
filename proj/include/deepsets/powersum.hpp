#pragma once

// Constructive side of sum-decomposition: injective set encodings, the
// sum-of-power embedding, its inverse through Newton-Girard and polynomial
// roots, and closed-form rho(sum phi(x)) constructions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace deepsets::powersum {

using Eigen::Index;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr Index kMaxSetSize = 16;

/// Non-decreasing values in [0, 1].
template <typename Scalar>
class SortedSample {
 public:
  SortedSample() = default;

  /// Sorts `values`; throws std::domain_error when any value leaves [0, 1].
  static SortedSample from_values(Vec<Scalar> values) {
    for (Index i = 0; i < values.size(); ++i) {
      if (!(values[i] >= Scalar(0) && values[i] <= Scalar(1))) {
        throw std::domain_error("SortedSample: values must lie in [0, 1]");
      }
    }
    std::sort(values.data(), values.data() + values.size());
    SortedSample s;
    s.values_ = std::move(values);
    return s;
  }

  [[nodiscard]] const Vec<Scalar>& values() const { return values_; }
  [[nodiscard]] Index size() const { return values_.size(); }
  [[nodiscard]] Scalar operator[](Index i) const { return values_[i]; }

 private:
  Vec<Scalar> values_;
};

/// Z_q = sum_m x_m^q for q = 0..M.
template <typename Scalar>
struct PowerSumVector {
  Vec<Scalar> sums;

  [[nodiscard]] Index set_size() const { return sums.size() - 1; }
  [[nodiscard]] Scalar operator[](Index q) const { return sums[q]; }
};

/// Affine map of values in [lo, hi] onto [0, 1].
template <typename Derived>
auto rescale_to_unit(const Eigen::MatrixBase<Derived>& values, typename Derived::Scalar lo,
                     typename Derived::Scalar hi) {
  using Scalar = typename Derived::Scalar;
  if (!(hi > lo)) throw std::invalid_argument("rescale_to_unit: empty interval");
  Vec<Scalar> out = ((values.array() - lo) / (hi - lo)).matrix();
  for (Index i = 0; i < out.size(); ++i) {
    if (out[i] < Scalar(0) || out[i] > Scalar(1)) throw std::domain_error("rescale_to_unit: value outside [lo, hi]");
  }
  return out;
}

/// sum over x in the set of 4^{-code(x)}. The code must be injective and span
/// at most 26 so that every subset sum is exact in double precision.
template <typename Key>
double countable_encode(const std::vector<Key>& set, const std::map<Key, unsigned>& code) {
  if (code.size() > 20) throw std::invalid_argument("countable_encode: universe larger than 20 elements");
  std::set<unsigned> seen;
  unsigned lo = ~0U;
  unsigned hi = 0;
  for (const auto& [key, c] : code) {
    if (!seen.insert(c).second) throw std::invalid_argument("countable_encode: code map is not injective");
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (!code.empty() && hi - lo > 26) throw std::invalid_argument("countable_encode: code range too wide to be exact");

  std::set<Key> members;
  double total = 0.0;
  for (const Key& x : set) {
    const auto it = code.find(x);
    if (it == code.end()) throw std::invalid_argument("countable_encode: element outside the universe");
    if (!members.insert(x).second) throw std::invalid_argument("countable_encode: repeated element");
    total += std::ldexp(1.0, -2 * static_cast<int>(it->second));
  }
  return total;
}

/// Working precision of embed and invert: long double for the builtin float
/// types, which keeps clustered samples (gaps near 1e-3) recoverable.
template <typename Scalar>
using Wide = std::conditional_t<std::is_floating_point_v<Scalar>, long double, Scalar>;

template <typename Scalar>
PowerSumVector<Scalar> embed(const SortedSample<Scalar>& sample) {
  const Index m = sample.size();
  Vec<Wide<Scalar>> acc = Vec<Wide<Scalar>>::Zero(m + 1);
  for (Index i = 0; i < m; ++i) {
    Wide<Scalar> power(1);
    for (Index q = 1; q <= m; ++q) {
      power *= static_cast<Wide<Scalar>>(sample[i]);
      acc[q] += power;
    }
  }
  PowerSumVector<Scalar> z;
  z.sums = acc.template cast<Scalar>();
  z.sums[0] = static_cast<Scalar>(m);
  return z;
}

/// Elementary symmetric polynomials e_1..e_M from power sums p_1..p_M via
/// k e_k = sum_{i=1..k} (-1)^{i-1} e_{k-i} p_i.
template <typename Derived>
auto elementary_from_power_sums(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  const Index m = p.size();
  Vec<Scalar> e(m + 1);
  e[0] = Scalar(1);
  for (Index k = 1; k <= m; ++k) {
    Scalar acc(0);
    Scalar sign(1);
    for (Index i = 1; i <= k; ++i) {
      acc += sign * e[k - i] * p[i - 1];
      sign = -sign;
    }
    e[k] = acc / static_cast<Scalar>(k);
  }
  return Vec<Scalar>(e.tail(m));
}

template <typename Scalar>
Vec<Scalar> newton_girard(const PowerSumVector<Scalar>& z) {
  const Scalar z0 = z.sums.size() > 0 ? z.sums[0] : Scalar(0);
  if (z0 < Scalar(1) || z0 != std::round(z0) || static_cast<Index>(z0) != z.set_size()) {
    throw std::invalid_argument("newton_girard: Z_0 must be the set size, an integer >= 1");
  }
  return elementary_from_power_sums(z.sums.tail(z.set_size()));
}

/// Coefficients [1, c_1, ..., c_M] (descending powers) of prod (x - x_m)
/// given e_1..e_M: c_j = (-1)^j e_j.
template <typename Derived>
auto monic_from_elementary(const Eigen::MatrixBase<Derived>& e) {
  using Scalar = typename Derived::Scalar;
  Vec<Scalar> c(e.size() + 1);
  c[0] = Scalar(1);
  Scalar sign(-1);
  for (Index j = 0; j < e.size(); ++j) {
    c[j + 1] = sign * e[j];
    sign = -sign;
  }
  return c;
}

struct RootOptions {
  int max_iterations = 200;
  double tolerance = 1e-13;
  double imaginary_cutoff = 1e-8;
};

/// All roots of a monic polynomial with real coefficients (descending powers,
/// leading 1) by Aberth-Ehrlich simultaneous iteration.
template <typename Derived>
auto aberth_roots(const Eigen::MatrixBase<Derived>& coeffs, const RootOptions& opt = {}) {
  using Scalar = typename Derived::Scalar;
  using Complex = std::complex<Scalar>;
  const Index degree = coeffs.size() - 1;
  if (degree < 1) throw std::invalid_argument("aberth_roots: degree must be at least 1");
  if (coeffs[0] != Scalar(1)) throw std::invalid_argument("aberth_roots: polynomial must be monic");

  // p(z), p'(z) and the running sum of |c_j||z|^j for the backward-error test.
  auto horner = [&](Complex z, Complex& p, Complex& dp, Scalar& magnitude) {
    p = Complex(coeffs[0]);
    dp = Complex(0);
    magnitude = std::abs(coeffs[0]);
    const Scalar az = std::abs(z);
    for (Index j = 1; j <= degree; ++j) {
      dp = dp * z + p;
      p = p * z + coeffs[j];
      magnitude = magnitude * az + std::abs(coeffs[j]);
    }
  };

  // Fujiwara bound on root moduli; the start circle encloses it and [0, 1].
  Scalar bound(0);
  for (Index j = 1; j <= degree; ++j) {
    bound = std::max(bound, std::pow(std::abs(coeffs[j]), Scalar(1) / static_cast<Scalar>(j)));
  }
  bound *= Scalar(2);
  const Scalar radius = Scalar(0.5) + std::max(bound, Scalar(0.5));
  std::vector<Complex> z(static_cast<std::size_t>(degree));
  for (Index k = 0; k < degree; ++k) {
    const Scalar angle = Scalar(2) * std::numbers::pi_v<Scalar> * static_cast<Scalar>(k) / static_cast<Scalar>(degree) +
                         Scalar(0.7);
    z[static_cast<std::size_t>(k)] = Complex(Scalar(0.5), Scalar(0)) + std::polar(radius, angle);
  }

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  bool converged = false;
  for (int iter = 0; iter < opt.max_iterations && !converged; ++iter) {
    Scalar largest_step(0);
    bool all_exact = true;
    for (std::size_t k = 0; k < z.size(); ++k) {
      Complex p;
      Complex dp;
      Scalar magnitude;
      horner(z[k], p, dp, magnitude);
      if (std::abs(p) <= Scalar(4) * eps * magnitude) continue;
      all_exact = false;
      Complex repulsion(0);
      for (std::size_t j = 0; j < z.size(); ++j) {
        if (j != k) repulsion += Complex(1) / (z[k] - z[j]);
      }
      const Complex ratio = p / dp;
      const Complex step = ratio / (Complex(1) - ratio * repulsion);
      z[k] -= step;
      largest_step = std::max(largest_step, std::abs(step) / std::max(Scalar(1), std::abs(z[k])));
    }
    converged = all_exact || largest_step <= static_cast<Scalar>(opt.tolerance);
  }
  if (!converged) {
    throw ConvergenceError("aberth_roots: no convergence within " + std::to_string(opt.max_iterations) +
                           " iterations");
  }
  return z;
}

/// Sorted real roots of prod (x - x_m) from its elementary symmetric
/// coefficients e_1..e_M. Multiplicities are preserved. Iterates in the wide
/// type: a double root only resolves to ~sqrt(eps), which is 1e-8 in double.
template <typename Derived>
auto poly_roots(const Eigen::MatrixBase<Derived>& e, const RootOptions& opt = {}) {
  using Scalar = typename Derived::Scalar;
  using W = Wide<Scalar>;
  if (e.size() < 1 || e.size() > kMaxSetSize) throw std::invalid_argument("poly_roots: degree must lie in [1, 16]");
  const Vec<W> wide = e.template cast<W>();
  const auto z = aberth_roots(monic_from_elementary(wide), opt);
  Vec<Scalar> roots(static_cast<Index>(z.size()));
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (std::abs(z[k].imag()) > static_cast<W>(opt.imaginary_cutoff) * std::max(W(1), std::abs(z[k]))) {
      throw ConvergenceError("poly_roots: complex root with imaginary part " +
                             std::to_string(static_cast<double>(z[k].imag())));
    }
    roots[static_cast<Index>(k)] = static_cast<Scalar>(z[k].real());
  }
  std::sort(roots.data(), roots.data() + roots.size());
  return roots;
}

/// Recovers the sorted sample from its power sums. Roots within 1e-6 outside
/// [0, 1] are clamped; farther excursions mean Z is not in the image of embed.
template <typename Scalar>
SortedSample<Scalar> invert(const PowerSumVector<Scalar>& z, const RootOptions& opt = {}) {
  PowerSumVector<Wide<Scalar>> wide{z.sums.template cast<Wide<Scalar>>()};
  // Newton-Girard in the wide type too; poly_roots keeps that precision.
  Vec<Scalar> roots = poly_roots(newton_girard(wide), opt).template cast<Scalar>();
  for (Index i = 0; i < roots.size(); ++i) {
    if (roots[i] < Scalar(-1e-6) || roots[i] > Scalar(1) + Scalar(1e-6)) {
      throw std::domain_error("invert: recovered value outside [0, 1]");
    }
    roots[i] = std::clamp(roots[i], Scalar(0), Scalar(1));
  }
  return SortedSample<Scalar>::from_values(std::move(roots));
}

enum class ClosedForm {
  kMean,
  kMaxSmooth,
  kSecondLargestSmooth,
  kSecondLargestVerbatim,
  kPolyX1X2,
  kPolySym3,
};

ClosedForm closed_form_from_name(std::string_view name);
std::string_view to_string(ClosedForm form);
bool requires_alpha(ClosedForm form);

struct ClosedFormValue {
  /// rho applied to sum_x phi(x).
  double construction = 0.0;
  /// The target computed directly from the sample.
  double reference = 0.0;
};

/// Evaluates the sum-decomposition of a symmetric function:
///   mean                  phi = [1, x],                rho = v/u
///   max_smooth            phi = [e^{ax}, x e^{ax}],    rho = v/u
///   second_largest_smooth phi = [e^{ax}, e^{2ax}],     rho = (ln((u^2 - w)/2) - ln(w)/2)/a
///   second_largest_verbatim  phi = [e^{ax}, x e^{ax}],    rho = (v - (v/u)e^{av/u})/(u - e^{av/u})
///   poly_x1x2             phi = [x, x^2, x^3],         rho = uv - w + 3(u^2 - v)/2
///   poly_sym3             phi = [x, x^2, x^3],         rho = (u^3 + 2w - 3uv)/6 + u
/// second_largest_verbatim tends to the maximum, not the second largest, as a
/// grows; it is kept to make that behaviour checkable.
ClosedFormValue closed_form_eval(ClosedForm form, const Vec<double>& x, double alpha = 0.0);
ClosedFormValue closed_form_eval(std::string_view name, const Vec<double>& x, double alpha = 0.0);

}  // namespace deepsets::powersum
