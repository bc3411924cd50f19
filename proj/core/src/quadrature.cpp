#include "metab/quadrature.hpp"

#include "metab/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <mutex>

namespace metab {

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  double l1 = 0.0;
  const double v =
      gauss_kronrod<double, 15>::integrate(f, a, b, 15, tol, &err, &l1);
  if (!std::isfinite(v) || (err > tol * std::max(1.0, std::abs(v)) * 10.0)) {
    throw ValidationError("integrate: quadrature did not converge");
  }
  return v;
}

const GaussLegendre64& gauss_legendre_64() {
  static GaussLegendre64 rule = [] {
    GaussLegendre64 r{};
    constexpr int n = 64;
    for (int i = 0; i < n / 2; ++i) {
      // Chebyshev-like start, then Newton on P_n via the three-term recurrence
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      r.x[i] = -x;
      r.x[n - 1 - i] = x;
      r.w[i] = w;
      r.w[n - 1 - i] = w;
    }
    return r;
  }();
  return rule;
}

}  // namespace metab
