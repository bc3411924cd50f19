#include "metab/baselines.hpp"

#include "metab/errors.hpp"
#include "metab/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// int_{-inf}^x Phi(t) dt = x Phi(x) + pdf(x)
inline double phi_antideriv(double x) {
  return x * norm_cdf(x) + norm_pdf(x);
}

// int_{-inf}^x t Phi(t) dt = ((x^2-1) Phi(x) + x pdf(x)) / 2
inline double phi_antideriv2(double x) {
  return 0.5 * ((x * x - 1.0) * norm_cdf(x) + x * norm_pdf(x));
}
}  // namespace

double bk_density(const BinMoments& m, double h, double y) {
  if (!(h > 0.0)) throw ValidationError("bk_density: bandwidth must be > 0");
  double f = 0.0;
  for (std::size_t i = 1; i < m.bins(); ++i) {
    if (m.q[i] <= 0.0) continue;
    const double a = m.lower_edge(i);
    const double b = m.upper_edge(i);
    f += m.q[i] / (b - a) * (norm_cdf((b - y) / h) - norm_cdf((a - y) / h));
  }
  return f;
}

double grouped_sigma(const BinMoments& m) {
  double mass = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < m.bins(); ++i) {
    if (m.q[i] <= 0.0) continue;
    mass += m.q[i];
    mean += m.q[i] * m.y[i];
  }
  if (!(mass > 0.0)) throw ValidationError("grouped_sigma: no mass");
  mean /= mass;
  double var = 0.0;
  for (std::size_t i = 0; i < m.bins(); ++i) {
    if (m.q[i] <= 0.0) continue;
    const double b = m.upper_edge(i);
    const double within =
        std::isinf(b) ? 0.0 : (b - m.lower_edge(i)) * (b - m.lower_edge(i)) / 12.0;
    var += m.q[i] * (within + (m.y[i] - mean) * (m.y[i] - mean));
  }
  var /= mass;
  if (!(var > 0.0)) throw ValidationError("grouped_sigma: degenerate table");
  return std::sqrt(var);
}

double bk_bandwidth_with_sigma(double c, double sigma, double n) {
  if (!(c > 0.0)) throw ValidationError("bk_bandwidth: c must be > 0");
  if (!(sigma > 0.0)) throw ValidationError("bk_bandwidth: sigma must be > 0");
  return c * sigma * std::pow(n, -0.2);
}

double bk_bandwidth(const BinMoments& m, double c, double n) {
  return bk_bandwidth_with_sigma(c, grouped_sigma(m), n);
}

double bk_ccdf(const BinMoments& m, double h, double y) {
  if (!(h > 0.0)) throw ValidationError("bk_ccdf: bandwidth must be > 0");
  double tail = 0.0;
  for (std::size_t i = 1; i < m.bins(); ++i) {
    if (m.q[i] <= 0.0) continue;
    const double a = m.lower_edge(i);
    const double b = m.upper_edge(i);
    tail += m.q[i] / (b - a) * h *
            (phi_antideriv((b - y) / h) - phi_antideriv((a - y) / h));
  }
  return tail;
}

double bk_tail_expectation(const BinMoments& m, double h, double y) {
  if (!(h > 0.0)) throw ValidationError("bk_tail_expectation: bandwidth");
  // int_y^inf s Phi((e-s)/h) ds = h [ e G(x) - h H(x) ] at x = (e-y)/h,
  // with G, H the first/second antiderivatives of Phi
  double acc = 0.0;
  for (std::size_t i = 1; i < m.bins(); ++i) {
    if (m.q[i] <= 0.0) continue;
    const double a = m.lower_edge(i);
    const double b = m.upper_edge(i);
    const double xb = (b - y) / h;
    const double xa = (a - y) / h;
    const double term = h * (b * phi_antideriv(xb) - a * phi_antideriv(xa)) -
                        h * h * (phi_antideriv2(xb) - phi_antideriv2(xa));
    acc += m.q[i] / (b - a) * term;
  }
  return acc;
}

// Each Phi-difference integrates to exactly b-a, so the covered mass and
// mean of the BK density have closed forms.
static double bk_total_mass(const BinMoments& m) {
  double t = 0.0;
  for (std::size_t i = 1; i < m.bins(); ++i) t += m.q[i];
  return t;
}

static double bk_total_mean(const BinMoments& m) {
  double t = 0.0;
  for (std::size_t i = 1; i < m.bins(); ++i) {
    if (m.q[i] <= 0.0) continue;
    t += m.q[i] * 0.5 * (m.lower_edge(i) + m.upper_edge(i));
  }
  return t;
}

double bk_quantile(const BinMoments& m, double h, double tau) {
  const double total = bk_total_mass(m);
  if (!(tau > 0.0 && tau < total)) {
    throw ValidationError("bk_quantile: tau outside covered mass");
  }
  // bracket: kernel mass concentrates within a few h of the bin range
  double lo = m.lower_bound, hi = m.thresholds.front();
  lo -= 10.0 * h;
  hi += 10.0 * h;
  while (total - bk_ccdf(m, h, lo) > tau) lo -= 10.0 * h;
  while (total - bk_ccdf(m, h, hi) < tau) hi += 10.0 * h;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (total - bk_ccdf(m, h, mid) < tau) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo <= 1e-14 * std::max(1.0, std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

double bk_top_share(const BinMoments& m, double h, double p) {
  const double total = bk_total_mass(m);
  const double mean = bk_total_mean(m);
  if (!(p > 0.0)) throw ValidationError("bk_top_share: p must be > 0");
  if (p >= total) return 1.0;
  const double yp = bk_quantile(m, h, total - p);
  return bk_tail_expectation(m, h, yp) / mean;
}

ParetoInterp ParetoInterp::from_summary(const TabulatedSummary& summary) {
  summary.validate();
  ParetoInterp pi;
  for (std::size_t i = 0; i < summary.bins(); ++i) {
    const double t = summary.thresholds[i];
    const double nk = summary.cum_counts[i];
    if (!(t > 0.0) || !(nk > 0.0)) continue;
    const double s = summary.cum_sums[i] / nk;
    if (!(s / t > 1.0)) continue;  // b_k must exceed 1
    pi.p.push_back(nk / summary.n);
    pi.t.push_back(t);
    pi.s.push_back(s);
  }
  return pi;
}

ParetoInterp::RowPick ParetoInterp::select_row(double fractile) const {
  if (p.empty()) throw ValidationError("pareto interpolation: no usable row");
  std::size_t best = 0;
  bool tie = false;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double di = std::abs(p[i] - fractile);
    const double db = std::abs(p[best] - fractile);
    if (di < db) {
      best = i;
      tie = false;
    } else if (di == db && p[i] != p[best]) {
      tie = true;
      if (p[i] > p[best]) best = i;  // ties break toward the larger fractile
    }
  }
  return {best, tie};
}

double piketty_top_share(const ParetoInterp& interp, double p,
                         std::optional<double> external_mean) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("piketty_top_share: p must lie in (0, 1]");
  }
  if (interp.p.empty()) {
    throw ValidationError("pareto interpolation: no usable row");
  }
  const double coverage = *std::max_element(interp.p.begin(), interp.p.end());
  if (p > coverage * (1.0 + 1e-12) && !external_mean) {
    throw ValidationError("piketty_top_share: p exceeds table coverage");
  }
  const auto pick = [&](double frac) {
    const auto row = interp.select_row(frac);
    const double alpha = interp.local_exponent(row.index);
    // S(p)/n = s_k p_k^{1/alpha} p^{1-1/alpha}
    return interp.s[row.index] *
           std::pow(interp.p[row.index], 1.0 / alpha) *
           std::pow(frac, 1.0 - 1.0 / alpha);
  };
  const double numer = pick(p);
  const double denom = external_mean ? *external_mean : pick(1.0);
  return numer / denom;
}

void DoubleParetoParams::validate() const {
  if (!(alpha > 1.0)) {
    throw ValidationError("double pareto: alpha must exceed 1");
  }
  if (!(beta > 0.0) || !(m > 0.0)) {
    throw ValidationError("double pareto: beta and m must be positive");
  }
}

double DoubleParetoParams::mean() const {
  return m * alpha * beta / ((alpha - 1.0) * (beta + 1.0));
}

double dpareto_pdf(const DoubleParetoParams& p, double y) {
  if (y <= 0.0) return 0.0;
  const double c = p.alpha * p.beta / ((p.alpha + p.beta) * p.m);
  const double z = y / p.m;
  return y <= p.m ? c * std::pow(z, p.beta - 1.0)
                  : c * std::pow(z, -p.alpha - 1.0);
}

double dpareto_cdf(const DoubleParetoParams& p, double y) {
  if (y <= 0.0) return 0.0;
  const double z = y / p.m;
  if (y <= p.m) {
    return p.alpha / (p.alpha + p.beta) * std::pow(z, p.beta);
  }
  return 1.0 - p.beta / (p.alpha + p.beta) * std::pow(z, -p.alpha);
}

double dpareto_quantile(const DoubleParetoParams& p, double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw ValidationError("dpareto_quantile: prob must lie in (0, 1)");
  }
  const double split = p.alpha / (p.alpha + p.beta);
  if (prob <= split) {
    return p.m * std::pow(prob / split, 1.0 / p.beta);
  }
  return p.m *
         std::pow((p.alpha + p.beta) * (1.0 - prob) / p.beta, -1.0 / p.alpha);
}

double dpareto_lorenz(const DoubleParetoParams& p, double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ValidationError("dpareto_lorenz: x must lie in [0, 1]");
  }
  const double a = p.alpha, b = p.beta;
  const double split = a / (a + b);
  if (x <= split) {
    return (a - 1.0) * std::pow(a + b, 1.0 / b) * std::pow(a, -1.0 - 1.0 / b) *
           std::pow(x, 1.0 + 1.0 / b);
  }
  return 1.0 - (b + 1.0) * std::pow(a + b, -1.0 / a) *
                   std::pow(b, -1.0 + 1.0 / a) *
                   std::pow(1.0 - x, 1.0 - 1.0 / a);
}

double dpareto_top_share(const DoubleParetoParams& p, double frac) {
  if (!(frac >= 0.0 && frac <= 1.0)) {
    throw ValidationError("dpareto_top_share: p must lie in [0, 1]");
  }
  return 1.0 - dpareto_lorenz(p, 1.0 - frac);
}

double dpareto_sample(const DoubleParetoParams& p, double u1, double u2) {
  if (!(u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0)) {
    throw ValidationError("dpareto_sample: uniforms must lie strictly in (0,1)");
  }
  return p.m * std::pow(u1, -1.0 / p.alpha) * std::pow(u2, 1.0 / p.beta);
}

}  // namespace metab
