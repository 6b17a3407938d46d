#pragma once

namespace tlc::special {

/// log Gamma(x) for x > 0.
double lgamma(double x);

/// psi(x) = d/dx log Gamma(x) for x > 0.
double digamma(double x);

/// psi'(x) for x > 0. Used by the analytic KL gradient.
double trigamma(double x);

}  // namespace tlc::special
