#include "deepsets/powersum.hpp"

#include <array>
#include <functional>

namespace deepsets::powersum {

namespace {

constexpr std::array<std::pair<ClosedForm, std::string_view>, 6> kForms{{
    {ClosedForm::kMean, "mean"},
    {ClosedForm::kMaxSmooth, "max_smooth"},
    {ClosedForm::kSecondLargestSmooth, "second_largest_smooth"},
    {ClosedForm::kSecondLargestVerbatim, "second_largest_verbatim"},
    {ClosedForm::kPolyX1X2, "poly_x1x2"},
    {ClosedForm::kPolySym3, "poly_sym3"},
}};

// Column sums of phi over the sample.
template <std::size_t N>
std::array<double, N> pooled(const Vec<double>& x, const std::function<std::array<double, N>(double)>& phi) {
  std::array<double, N> acc{};
  for (Index i = 0; i < x.size(); ++i) {
    const auto f = phi(x[i]);
    for (std::size_t k = 0; k < N; ++k) acc[k] += f[k];
  }
  return acc;
}

double second_largest(const Vec<double>& x) {
  Vec<double> sorted = x;
  std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
  return sorted[1];
}

}  // namespace

ClosedForm closed_form_from_name(std::string_view name) {
  for (const auto& [form, n] : kForms) {
    if (n == name) return form;
  }
  throw std::invalid_argument("unknown closed-form example: " + std::string(name));
}

std::string_view to_string(ClosedForm form) {
  for (const auto& [f, n] : kForms) {
    if (f == form) return n;
  }
  return "unknown";
}

bool requires_alpha(ClosedForm form) {
  return form == ClosedForm::kMaxSmooth || form == ClosedForm::kSecondLargestSmooth ||
         form == ClosedForm::kSecondLargestVerbatim;
}

ClosedFormValue closed_form_eval(ClosedForm form, const Vec<double>& x, double alpha) {
  if (x.size() < 1) throw std::invalid_argument("closed_form_eval: empty sample");
  if (requires_alpha(form) && !(alpha > 0.0)) {
    throw std::invalid_argument("closed_form_eval: a positive alpha is required for " + std::string(to_string(form)));
  }
  ClosedFormValue out;
  switch (form) {
    case ClosedForm::kMean: {
      const auto [u, v] = pooled<2>(x, [](double t) { return std::array<double, 2>{1.0, t}; });
      out.construction = v / u;
      out.reference = x.mean();
      break;
    }
    case ClosedForm::kMaxSmooth: {
      const auto [u, v] = pooled<2>(x, [alpha](double t) {
        const double w = std::exp(alpha * t);
        return std::array<double, 2>{w, t * w};
      });
      out.construction = v / u;
      out.reference = x.maxCoeff();
      break;
    }
    case ClosedForm::kSecondLargestSmooth: {
      if (x.size() < 2) throw std::invalid_argument("closed_form_eval: second largest needs two values");
      const auto [u, w] = pooled<2>(x, [alpha](double t) {
        const double e = std::exp(alpha * t);
        return std::array<double, 2>{e, e * e};
      });
      out.construction = (std::log((u * u - w) / 2.0) - 0.5 * std::log(w)) / alpha;
      out.reference = second_largest(x);
      break;
    }
    case ClosedForm::kSecondLargestVerbatim: {
      if (x.size() < 2) throw std::invalid_argument("closed_form_eval: second largest needs two values");
      const auto [u, v] = pooled<2>(x, [alpha](double t) {
        const double e = std::exp(alpha * t);
        return std::array<double, 2>{e, t * e};
      });
      const double ratio = v / u;
      const double e = std::exp(alpha * ratio);
      out.construction = (v - ratio * e) / (u - e);
      out.reference = second_largest(x);
      break;
    }
    case ClosedForm::kPolyX1X2: {
      if (x.size() != 2) throw std::invalid_argument("closed_form_eval: poly_x1x2 takes exactly two values");
      const auto [u, v, w] = pooled<3>(x, [](double t) { return std::array<double, 3>{t, t * t, t * t * t}; });
      out.construction = u * v - w + 3.0 * (u * u - v) / 2.0;
      out.reference = x[0] * x[1] * (x[0] + x[1] + 3.0);
      break;
    }
    case ClosedForm::kPolySym3: {
      if (x.size() != 3) throw std::invalid_argument("closed_form_eval: poly_sym3 takes exactly three values");
      const auto [u, v, w] = pooled<3>(x, [](double t) { return std::array<double, 3>{t, t * t, t * t * t}; });
      out.construction = (u * u * u + 2.0 * w - 3.0 * u * v) / 6.0 + u;
      out.reference = x[0] * x[1] * x[2] + x[0] + x[1] + x[2];
      break;
    }
  }
  return out;
}

ClosedFormValue closed_form_eval(std::string_view name, const Vec<double>& x, double alpha) {
  return closed_form_eval(closed_form_from_name(name), x, alpha);
}

}  // namespace deepsets::powersum
