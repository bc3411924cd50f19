#pragma once

namespace metab {

// Standard normal pdf/cdf/quantile. norm_cdf is erfc-based and good to
// ~1e-16 relative in the body and far tails; norm_quantile inverts it to
// full double precision.
double norm_pdf(double x);
double norm_cdf(double x);
double norm_quantile(double p);

}  // namespace metab
