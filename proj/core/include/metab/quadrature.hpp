#pragma once

#include <array>
#include <functional>

namespace metab {

// Adaptive Gauss-Kronrod integral of f over [a, b]; b may be +infinity.
// Throws ValidationError when the error estimate cannot reach tol.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-10);

struct GaussLegendre64 {
  std::array<double, 64> x;  // nodes on (-1, 1)
  std::array<double, 64> w;
};

// Nodes and weights computed once by Newton iteration on P_64.
const GaussLegendre64& gauss_legendre_64();

// Fixed-order 64-point Gauss-Legendre rule on [a, b].
template <typename F>
double gl64(F&& f, double a, double b) {
  const auto& rule = gauss_legendre_64();
  const double mid = 0.5 * (a + b);
  const double hal = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < 64; ++i) acc += rule.w[i] * f(mid + hal * rule.x[i]);
  return acc * hal;
}

}  // namespace metab
