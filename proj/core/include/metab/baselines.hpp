#pragma once

#include "metab/tabio.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace metab {

// --- Blower-Kelsall binned Gaussian-CDF kernel estimator ---------------
//
// f_BK(y) = sum_{k>=2} (q_k/(t_{k-1}-t_k)) (Phi((t_{k-1}-y)/h) - Phi((t_k-y)/h))
// Only bounded bins enter the sum; the unbounded top bin carries no mass
// beyond kernel leakage.

double bk_density(const BinMoments& m, double h, double y);

// Grouped standard deviation: Sheppard-style second moment assuming uniform
// spread within bounded bins (the unbounded top bin contributes only its
// between-bin term).
double grouped_sigma(const BinMoments& m);

// Rule-of-thumb bandwidth h = c sigma n^{-1/5} with the grouped sigma.
double bk_bandwidth(const BinMoments& m, double c, double n);
// Same rule with an externally supplied sigma (e.g. the infeasible
// individual-sample value inside simulations).
double bk_bandwidth_with_sigma(double c, double sigma, double n);

// Closed-form tail integrals of the BK density (antiderivatives of Phi),
// plus quantile/top-share built on them. Coverage is sum_{k>=2} q_k.
double bk_ccdf(const BinMoments& m, double h, double y);
double bk_tail_expectation(const BinMoments& m, double h, double y);
double bk_quantile(const BinMoments& m, double h, double tau);
double bk_top_share(const BinMoments& m, double h, double p);

// --- Piketty Pareto interpolation ---------------------------------------

// Usable rows of a tabulated summary: fractiles p_k = n_k/n, thresholds
// t_k > 0, top averages s_k = S_{n_k}/n_k with inverted coefficient
// b_k = s_k/t_k > 1 and local exponent alpha_k = 1/(1 - t_k/s_k).
struct ParetoInterp {
  std::vector<double> p;
  std::vector<double> t;
  std::vector<double> s;

  static ParetoInterp from_summary(const TabulatedSummary& summary);

  struct RowPick {
    std::size_t index;
    bool tie;  // equidistant rows; broken toward the larger fractile
  };
  RowPick select_row(double fractile) const;

  double local_coefficient(std::size_t i) const { return s[i] / t[i]; }
  double local_exponent(std::size_t i) const { return 1.0 / (1.0 - t[i] / s[i]); }
};

// Top-p income share via S(p) = n s_k p_k^{1/alpha_k} p^{1-1/alpha_k} at the
// nearest observed fractile, divided by S(1) (or by n*external_mean when
// external totals are supplied).
double piketty_top_share(const ParetoInterp& interp, double p,
                         std::optional<double> external_mean = {});

// --- Double Pareto closed forms ------------------------------------------

struct DoubleParetoParams {
  double alpha;  // upper tail exponent, > 1 for a finite mean
  double beta;   // lower tail exponent, > 0
  double m;      // scale (branch point), > 0

  void validate() const;
  double mean() const;  // m*alpha*beta/((alpha-1)(beta+1))
};

double dpareto_pdf(const DoubleParetoParams& p, double y);
double dpareto_cdf(const DoubleParetoParams& p, double y);
double dpareto_quantile(const DoubleParetoParams& p, double prob);
// Lorenz curve; scale-free, branch point at x = alpha/(alpha+beta).
double dpareto_lorenz(const DoubleParetoParams& p, double x);
double dpareto_top_share(const DoubleParetoParams& p, double frac);
// Y = m u1^{-1/alpha} u2^{1/beta}; open-interval uniforms required.
double dpareto_sample(const DoubleParetoParams& p, double u1, double u2);

}  // namespace metab
