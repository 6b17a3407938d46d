#include "tlc/special.hpp"

#include <cmath>
#include <numbers>

#include "tlc/error.hpp"

// Each function shifts its argument above kCutoff with the upward recurrence
// and then sums a truncated asymptotic series. At x >= 10 the first omitted
// term is below 1e-16 relative.

namespace tlc::special {
namespace {

constexpr double kCutoff = 10.0;

void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw InvalidArgument(std::string(fn) + ": argument must be finite and > 0");
}

// Stirling series for log Gamma, x >= kCutoff.
double lgamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * (1.0 / 12.0 +
             inv2 * (-1.0 / 360.0 +
                     inv2 * (1.0 / 1260.0 +
                             inv2 * (-1.0 / 1680.0 +
                                     inv2 * (1.0 / 1188.0 +
                                             inv2 * (-691.0 / 360360.0 + inv2 * (1.0 / 156.0)))))));
  return (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * std::numbers::pi) + series;
}

double digamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
  return std::log(x) - 0.5 * inv - series;
}

double trigamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * (1.0 / 6.0 -
             inv2 * (1.0 / 30.0 -
                     inv2 * (1.0 / 42.0 -
                             inv2 * (1.0 / 30.0 -
                                     inv2 * (5.0 / 66.0 -
                                             inv2 * (691.0 / 2730.0 - inv2 * (7.0 / 6.0)))))));
  return inv + 0.5 * inv2 + inv2 * series;
}

}  // namespace

double lgamma(double x) {
  require_positive(x, "lgamma");
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x >= kCutoff) return lgamma_asymptotic(x);
  // Gamma(x) = Gamma(x + n) / (x (x+1) ... (x+n-1))
  double product = 1.0;
  while (x < kCutoff) {
    product *= x;
    x += 1.0;
  }
  return lgamma_asymptotic(x) - std::log(product);
}

double digamma(double x) {
  require_positive(x, "digamma");
  double shift = 0.0;
  while (x < kCutoff) {
    shift += 1.0 / x;
    x += 1.0;
  }
  return digamma_asymptotic(x) - shift;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  double shift = 0.0;
  while (x < kCutoff) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  return trigamma_asymptotic(x) + shift;
}

}  // namespace tlc::special
