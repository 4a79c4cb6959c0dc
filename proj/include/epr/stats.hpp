#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace epr {

namespace detail {

// Lower regularized incomplete gamma P(a, x) by power series; valid x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a, x) by modified Lentz continued
// fraction; valid x >= a + 1.
inline double gamma_q_cf(double a, double x) {
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
inline double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a) || !std::isfinite(x)) {
    throw std::domain_error("regularized_gamma_q: requires a > 0 and x >= 0");
  }
  if (x == 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - detail::gamma_p_series(a, x) : detail::gamma_q_cf(a, x);
}

/// Survival function of the chi-squared distribution: P(X > statistic) with
/// the given degrees of freedom.
inline double chi_squared_tail(double statistic, std::int64_t dof) {
  if (dof < 1) throw std::domain_error("chi_squared_tail: dof must be >= 1");
  if (statistic <= 0.0) return 1.0;
  return regularized_gamma_q(static_cast<double>(dof) / 2.0, statistic / 2.0);
}

/// Standard error of a binomial proportion estimate at the observed n.
inline double binomial_sigma(double p, std::int64_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace epr
