#include "rateaudit/special_functions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rateaudit {

namespace {

constexpr double kLogSqrtPi = 0.57236494292470008707171367567653;
constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 100000;

// x^a e^-x / Gamma(a), evaluated in logs.
double gamma_prefactor(double a, double x) {
  return std::exp(a * std::log(x) - x - log_gamma_half_integer(a));
}

double series_p(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxTerms; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * gamma_prefactor(a, x);
}

double continued_fraction_q(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h * gamma_prefactor(a, x);
}

void check_args(double a, double x) {
  if (!(a > 0.0) || std::floor(2.0 * a) != 2.0 * a) {
    throw std::domain_error("incomplete gamma: shape must be a positive half-integer");
  }
  if (std::isnan(x) || x < 0.0) throw std::domain_error("incomplete gamma: x must be >= 0");
}

}  // namespace

double log_gamma_half_integer(double a) {
  if (!(a > 0.0) || std::floor(2.0 * a) != 2.0 * a) {
    throw std::domain_error("log_gamma_half_integer: argument must be a positive half-integer");
  }
  // Gamma(1) = 1, Gamma(1/2) = sqrt(pi); Gamma(z + 1) = z Gamma(z).
  double z = std::floor(a) == a ? 1.0 : 0.5;
  double acc = z == 1.0 ? 0.0 : kLogSqrtPi;
  for (; z < a; z += 1.0) acc += std::log(z);
  return acc;
}

double regularized_gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? series_p(a, x) : 1.0 - continued_fraction_q(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - series_p(a, x) : continued_fraction_q(a, x);
}

double normal_sf(double x) {
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  // 1 - Phi(x) = erfc(x / sqrt 2) / 2 and erfc(z) = Q(1/2, z^2) for z >= 0.
  const double half_q = 0.5 * regularized_gamma_q(0.5, 0.5 * x * x);
  return x >= 0.0 ? half_q : 1.0 - half_q;
}

double normal_cdf(double x) { return normal_sf(-x); }

double chi2_sf(double x, int df) {
  if (df < 0) throw std::domain_error("chi2_sf: negative degrees of freedom");
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  if (df == 0) return x > 0.0 ? 0.0 : 1.0;
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace rateaudit
