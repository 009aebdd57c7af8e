#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "mvcage/errors.hpp"

namespace mvcage {
namespace detail {

// Temme's series for K_mu(x) and K_{mu+1}(x), |mu| <= 1/2, 0 < x <= 2.
inline std::pair<double, double> bessel_k_temme(double mu, double x) {
  double gam1, gam2;
  if (std::fabs(mu) < 1e-9) {
    gam1 = -0.57721566490153286060651209008240243;  // -Euler-Mascheroni
    gam2 = 1.0;
  } else {
    const double gm = 1.0 / std::tgamma(1.0 - mu);
    const double gp = 1.0 / std::tgamma(1.0 + mu);
    gam1 = (gm - gp) / (2.0 * mu);
    gam2 = (gm + gp) / 2.0;
  }
  const double pimu = M_PI * mu;
  const double fact = (std::fabs(pimu) < 1e-15) ? 1.0 : pimu / std::sin(pimu);
  const double d = -std::log(0.5 * x);
  const double sig = mu * d;
  const double fact2 = (std::fabs(sig) < 1e-15) ? 1.0 : std::sinh(sig) / sig;
  double f = fact * (gam1 * std::cosh(sig) + gam2 * fact2 * d);
  double p = 0.5 * std::exp(sig) * std::tgamma(1.0 + mu);
  double q = 0.5 * std::exp(-sig) * std::tgamma(1.0 - mu);
  double c = 1.0;
  const double h = 0.25 * x * x;
  double sum = f;
  double sum1 = p;
  for (int k = 1; k <= 500; ++k) {
    f = (k * f + p + q) / (k * k - mu * mu);
    p /= (k - mu);
    q /= (k + mu);
    c *= h / k;
    const double del = c * f;
    sum += del;
    sum1 += c * (p - k * f);
    if (std::fabs(del) < std::fabs(sum) * 1e-17) break;
  }
  return {sum, sum1 * 2.0 / x};
}

// K_nu(x) for x > ~2 by trapezoidal quadrature of the integral
// representation K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt.
// The integrand is even and entire, so the trapezoid rule converges
// to machine precision at step 0.1 on this range.
inline double bessel_k_integral(double nu, double x) {
  const double h = 0.1;
  double upper = 1.0;
  while (x * std::cosh(upper) - nu * upper - x < 72.0 && upper < 60.0) upper += 0.5;
  double sum = 0.5 * std::exp(-x);
  for (double t = h; t <= upper; t += h)
    sum += std::exp(-x * std::cosh(t)) * std::cosh(nu * t);
  return sum * h;
}

inline bool is_half_integer(double nu) {
  return std::fabs(nu - (std::floor(nu) + 0.5)) < 1e-13;
}

}  // namespace detail

// Modified Bessel function of the second kind, real order nu >= 0, x >= 0.
// Half-integer orders take the closed-form e^{-x} path; otherwise Temme's
// series (x <= 2) or quadrature of the integral representation (x > 2),
// with the upward recurrence K_{v+1} = K_{v-1} + (2v/x) K_v lifting the
// order when needed.
inline double bessel_k(double nu, double x) {
  if (std::isnan(nu) || std::isnan(x) || nu < 0.0 || x < 0.0)
    throw InvalidArgumentError("bessel_k: requires nu >= 0 and x >= 0");
  if (x == 0.0) return std::numeric_limits<double>::infinity();
  if (x > 705.0) return 0.0;  // exp(-x) underflows

  if (detail::is_half_integer(nu)) {
    const double k_half = std::sqrt(M_PI / (2.0 * x)) * std::exp(-x);
    const int steps = static_cast<int>(std::floor(nu));
    if (steps == 0) return k_half;
    double km = k_half;                                  // K_{1/2}
    double kc = k_half * (1.0 + 1.0 / x);                // K_{3/2}
    for (int m = 1; m < steps; ++m) {
      const double kn = km + (2.0 * (m + 0.5) / x) * kc;
      km = kc;
      kc = kn;
    }
    return kc;
  }

  const int lift = static_cast<int>(std::floor(nu + 0.5));
  const double mu = nu - lift;  // |mu| <= 1/2
  double km, kc;
  if (x <= 2.0) {
    auto [k0, k1] = detail::bessel_k_temme(mu, x);
    km = k0;
    kc = k1;
  } else {
    km = detail::bessel_k_integral(mu, x);
    kc = detail::bessel_k_integral(mu + 1.0, x);
  }
  if (lift == 0) return km;
  for (int m = 1; m < lift; ++m) {
    const double kn = km + (2.0 * (mu + m) / x) * kc;
    km = kc;
    kc = kn;
  }
  return kc;
}

}  // namespace mvcage
