#include "metab/phi.hpp"

#include <cmath>
#include <stdexcept>

namespace metab {

double phi(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) {
    // x/3 - x^3/45; next term 2x^5/945 is below 1 ulp at the switch point
    return x / 3.0 - x * x * x / 45.0;
  }
  // coth(ax) = 1 + 2/(e^{2ax}-1); expm1 overflows to +inf for large ax and
  // the correction term cleanly underflows to 0
  const double v = 1.0 + 2.0 / std::expm1(2.0 * ax) - 1.0 / ax;
  return x < 0 ? -v : v;
}

double phi_prime(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) return 1.0 / 3.0 - ax * ax / 15.0;
  if (ax > 350.0) return 1.0 / (ax * ax);
  const double s = std::sinh(ax);
  return 1.0 / (ax * ax) - 1.0 / (s * s);
}

double phi_inv(double u) {
  if (!(std::abs(u) < 1.0)) {
    throw std::domain_error("phi_inv: argument must lie in (-1, 1)");
  }
  if (u == 0.0) return 0.0;
  const double a = std::abs(u);

  // Bracket [lo, hi] with phi(lo) < a <= phi(hi). phi(x) ~ x/3 near 0 and
  // ~ 1 - 1/x at infinity, so these starts bracket after few doublings.
  double lo = 0.0;
  double hi = (a < 0.5) ? 4.0 * a : 2.0 / (1.0 - a);
  for (int i = 0; i < 200 && phi(hi) < a; ++i) hi *= 2.0;

  double x = (a < 0.5) ? 3.0 * a : 1.0 / (1.0 - a);
  if (!(x > lo && x < hi)) x = 0.5 * hi;

  for (int it = 0; it < 200; ++it) {
    const double r = phi(x) - a;
    if (r > 0.0) {
      hi = x;
    } else if (r < 0.0) {
      lo = x;
    }
    if (std::abs(r) <= 1e-15) break;
    const double d = phi_prime(x);
    double xn = (d > 0.0) ? x - r / d : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (xn == x) break;
    x = xn;
  }
  return u < 0 ? -x : x;
}

}  // namespace metab
