#pragma once

#include "metab/mecore.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace metab {

// Result of minimizing J* over the interior thresholds. The bottom
// threshold stays fixed; the admissible box for t_k is (y_{k+1}, y_k).
struct SmoothedFit {
  std::vector<double> t_star;   // full K-vector, bottom entry = t_K_fix
  MEDensity density;            // refit at t_star, provenance = smoothed
  double grad_inf_norm = 0.0;   // at t_star, original units
  std::size_t iterations = 0;
  std::vector<double> j_star_trajectory;  // J* per accepted iterate
  bool converged = false;
};

// Total dual value J*(t) = sum q_k (J_k(lambda_k(t)) + log q_k) with the
// multipliers re-solved at the given thresholds. Returns +inf when some
// bin mean is not strictly interior (J* blows up on the boundary of the
// admissible set).
double jstar_value(const BinMoments& m, const std::vector<double>& thresholds);

// dJ*/dt_k for k = 1..K-1. By the envelope theorem each component equals
// the density jump f(t_k+) - f(t_k-):
//   q_k l_k/(e^{l_k (t_{k-1}-t_k)} - 1) - q_{k+1} l_{k+1}/(1 - e^{l_{k+1}(t_{k+1}-t_k)})
// with e^{l_1 t_0} = 0 on the unbounded top bin. Zero-mass bins contribute
// zero density on their side.
std::vector<double> jstar_gradient(const BinMoments& m,
                                   const std::vector<double>& thresholds);

// Symmetric tridiagonal Hessian of J* in t: diagonal c_k + c_{k+1},
// off-diagonal -c_{k+1}, with
//   c_k = q_k l_k^2 e^{l_k w_k} / (e^{l_k w_k} - 1)^2,  w_k = t_{k-1} - t_k,
// and the analytic limit c_k = q_k / w_k^2 at l_k = 0.
struct TridiagMatrix {
  std::vector<double> diag;
  std::vector<double> off;  // one shorter than diag
};
TridiagMatrix jstar_hessian(const BinMoments& m,
                            const std::vector<double>& thresholds);

// Damped Newton minimization of J* over the admissible box, backtracking
// on J* and capping steps to stay strictly interior. Stops when the
// gradient inf-norm (scale-adjusted) drops below grad_tol or after
// max_iter iterations; past the cap, a relaxed tolerance of 1e-6 still
// counts as usable, anything worse throws ConvergenceError.
SmoothedFit smooth_thresholds(const BinMoments& m, double t_K_fix,
                              double grad_tol = 1e-10,
                              std::size_t max_iter = 500);

// SmoothedFit JSON: the density serialization plus t_star, grad_inf_norm,
// iterations, j_star_trajectory.
std::string smoothed_fit_to_json(const SmoothedFit& f);

}  // namespace metab
