#pragma once

#include "metab/mecore.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace metab {

struct LorenzPoint {
  double x;  // population fractile in [0, 1]
  double l;  // cumulative income share in [0, 1]
};

// Closed-form tail probability int_y^inf f; equals total mass at the lower
// support edge and 0 at +inf. Monotone nonincreasing.
double ccdf(const MEDensity& d, double y);

// Closed-form tail expectation int_y^inf s f(s) ds; equals the fitted mean
// at the lower support edge.
double tail_expectation(const MEDensity& d, double y);

// Q(tau) = inf{y : tau <= F(y)} by per-bin analytic inversion;
// F(quantile(tau)) = tau to machine accuracy. Requires 0 < tau < total mass.
double quantile(const MEDensity& d, double tau);

// Income share of the top p fractile of the covered population:
// tail_expectation(Q(total-p)) / mean. With external_mean the denominator
// is replaced by a supplied per-capita total (external totals adjustment);
// no silent renormalization happens either way.
double top_share(const MEDensity& d, double p,
                 std::optional<double> external_mean = {});

// L(x) = 1 - top_share((1-x) * total mass); endpoints exact.
std::vector<LorenzPoint> lorenz_curve(const MEDensity& d,
                                      const std::vector<double>& grid);

// G = 1 - 2 int_0^1 L, by 64-node Gauss-Legendre on each bin-induced
// segment of the fractile axis. Requires total mass 1 and a positive mean.
double gini(const MEDensity& d);

// Plot-ready CSV emitters (fixed headers).
void write_pdf_cdf_csv(std::ostream& out, const MEDensity& d,
                       const std::vector<double>& ys);       // y,pdf,cdf
void write_log_pdf_csv(std::ostream& out, const MEDensity& d,
                       const std::vector<double>& xs);       // x,pdf_log
void write_top_share_csv(std::ostream& out,
                         const std::vector<double>& p,
                         const std::vector<double>& share);  // p,top_share
void write_lorenz_csv(std::ostream& out,
                      const std::vector<LorenzPoint>& pts);  // x,lorenz

}  // namespace metab
