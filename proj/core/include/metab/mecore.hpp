#pragma once

#include "metab/tabio.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace metab {

// One fitted bin [lower, upper) of a piecewise-exponential density.
// lambda = 0 encodes the uniform branch; q = 0 encodes an empty bin
// (zero density, y and j are NaN).
struct MEBin {
  double lower = 0.0;
  double upper = 0.0;  // +inf on the top bin
  double q = 0.0;
  double y = 0.0;
  double lambda = 0.0;
  double j = 0.0;  // dual value J_k(lambda)
};

// Piecewise-exponential maximum-entropy density. Bins are stored top bin
// first and partition [lower_bound, inf).
struct MEDensity {
  std::vector<MEBin> bins;
  double lower_bound = 0.0;
  double j_star = 0.0;
  Provenance provenance = Provenance::empirical;

  std::size_t size() const { return bins.size(); }
  double total_mass() const;
  // index of the bin containing y under the [lower, upper) convention;
  // size() when y lies outside the support
  std::size_t bin_index(double y) const;
};

struct LambdaSolution {
  double lambda;
  double j;
};

// Unique maximizer of the strictly concave per-bin dual
//   J(l) = y l - log((e^{l b} - e^{l a})/l)
// For a bounded bin the closed form is l = (2/d) phi_inv(2(y-c)/d) with
// c = (a+b)/2, d = b-a; for upper = +inf, l = -1/(y-a) and
// J = -1 - log(y-a). Internally the bin is rescaled so all coordinates are
// O(1) and the dual value is mapped back by +log s. Throws
// InfeasibleBinError when y is not strictly interior (or so close to an
// edge that |2(y-c)/d| > 1 - 1e-12).
LambdaSolution solve_lambda(double lower, double upper, double y);

// Dual objective J(lambda) for one bin; the lambda = 0 branch is
// -log(upper - lower). Stable for |lambda|*(upper-lower) up to ~1e300.
double bin_dual_value(double lower, double upper, double y, double lambda);

// Mean of the tilted density on a bin: c + (d/2) phi(lambda d/2) for a
// bounded bin, lower - 1/lambda for the top bin, the midpoint at lambda=0.
double bin_tilted_mean(double lower, double upper, double lambda);

// Fit the ME density to bin moments: per-bin dual solve, zero density on
// zero-mass bins, J* = sum q_k (J_k + log q_k). Throws InfeasibleBinError
// with the 1-based bin index.
MEDensity fit_me_density(const BinMoments& moments);

// Pointwise density; 0 outside [lower_bound, inf), exponential or uniform
// branch inside the containing bin.
double density_eval(const MEDensity& d, double y);

// Canonical JSON: bins [{lower, upper (null = inf), q, y, lambda}],
// lower_bound, j_star, provenance. Round trips bit-exactly.
std::string density_to_json(const MEDensity& d);
MEDensity density_from_json(const std::string& text);

}  // namespace metab
