#include "metab/functionals.hpp"

#include "metab/errors.hpp"
#include "metab/quadrature.hpp"
#include "metab/strfmt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace metab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// (e^z - 1)/z - 1, accurate near 0
double expm1_over_x_minus_1(double z) {
  if (std::abs(z) < 0.5) {
    double term = 0.5 * z;
    double acc = term;
    for (int k = 3; k < 40; ++k) {
      term *= z / k;
      acc += term;
      if (std::abs(term) < 1e-18 * std::abs(acc)) break;
    }
    return acc;
  }
  return (std::expm1(z) - z) / z;
}

// Tail mass of one bin from y (y inside [lower, upper)).
double bin_tail_mass(const MEBin& b, double y) {
  if (b.q == 0.0) return 0.0;
  if (std::isinf(b.upper)) {
    return b.q * std::exp(b.lambda * (y - b.lower));
  }
  if (b.lambda == 0.0) {
    return b.q * (b.upper - y) / (b.upper - b.lower);
  }
  const double zb = b.lambda * (b.upper - y);
  if (zb > 500.0) {
    // mass piles up at the upper edge; reference it to avoid overflow
    return b.q * (-std::expm1(b.lambda * (y - b.upper))) /
           (-std::expm1(-b.lambda * (b.upper - b.lower)));
  }
  const double p = std::expm1(zb);
  const double qq = std::expm1(b.lambda * (b.lower - y));
  return b.q * p / (p - qq);
}

// Tail expectation of one bin from y.
double bin_tail_expect(const MEBin& b, double y) {
  if (b.q == 0.0) return 0.0;
  if (std::isinf(b.upper)) {
    return b.q * (y - 1.0 / b.lambda) * std::exp(b.lambda * (y - b.lower));
  }
  const double w = b.upper - b.lower;
  if (b.lambda == 0.0) {
    return 0.5 * b.q * (b.upper - y) * (b.upper + y) / w;
  }
  const double zb = b.lambda * (b.upper - y);
  if (zb > 500.0) {
    return b.q *
           ((b.upper - 1.0 / b.lambda) -
            (y - 1.0 / b.lambda) * std::exp(b.lambda * (y - b.upper))) /
           (-std::expm1(-b.lambda * w));
  }
  // referenced at y:   q [P (b_up - 1/l) + (b_up - y) - P/l] / (P - Q)
  // with the cancellation (b_up-y) - P/l = -(b_up-y)((e^z-1)/z - 1)
  const double p = std::expm1(zb);
  const double qq = std::expm1(b.lambda * (b.lower - y));
  const double numer =
      p * b.upper - (b.upper - y) * expm1_over_x_minus_1(zb);
  return b.q * numer / (p - qq);
}

// Analytic inverse of the within-bin mass from the lower edge.
double bin_invert_mass(const MEBin& b, double r) {
  if (r <= 0.0) return b.lower;
  if (std::isinf(b.upper)) {
    if (r >= b.q) return kInf;
    return b.lower + std::log1p(-r / b.q) / b.lambda;
  }
  const double w = b.upper - b.lower;
  if (r >= b.q) return b.upper;
  if (b.lambda == 0.0) return b.lower + (r / b.q) * w;
  const double lw = b.lambda * w;
  if (lw > 500.0) {
    const double e = std::exp(-lw);
    return b.upper + std::log(e + (1.0 - e) * (r / b.q)) / b.lambda;
  }
  return b.lower + std::log1p((r / b.q) * std::expm1(lw)) / b.lambda;
}

}  // namespace

double ccdf(const MEDensity& d, double y) {
  if (!(y > d.lower_bound)) return d.total_mass();
  double acc = 0.0;
  for (const auto& b : d.bins) {
    if (y <= b.lower) {
      acc += b.q;  // bin entirely above y
    } else if (y < b.upper) {
      acc += bin_tail_mass(b, y);
    } else {
      break;  // all remaining bins lie below y
    }
  }
  return acc;
}

double tail_expectation(const MEDensity& d, double y) {
  double acc = 0.0;
  for (const auto& b : d.bins) {
    if (b.q == 0.0) continue;
    if (y <= b.lower) {
      acc += b.q * bin_tilted_mean(b.lower, b.upper, b.lambda);
    } else if (y < b.upper) {
      acc += bin_tail_expect(b, y);
    } else {
      break;
    }
  }
  return acc;
}

double quantile(const MEDensity& d, double tau) {
  const double total = d.total_mass();
  if (!(tau > 0.0 && tau < total)) {
    throw ValidationError("quantile: tau must lie in (0, total mass)");
  }
  double below = 0.0;
  for (std::size_t i = d.size(); i-- > 0;) {
    const MEBin& b = d.bins[i];
    if (below + b.q >= tau) {
      return bin_invert_mass(b, tau - below);
    }
    below += b.q;
  }
  return d.bins.front().upper;  // unreachable for tau < total
}

double top_share(const MEDensity& d, double p,
                 std::optional<double> external_mean) {
  const double total = d.total_mass();
  if (!(p > 0.0 && p <= total * (1.0 + 1e-12))) {
    throw ValidationError("top_share: p must lie in (0, total mass]");
  }
  const double mean = external_mean ? *external_mean
                                    : tail_expectation(d, d.lower_bound);
  if (!(mean > 0.0)) throw ValidationError("top_share: nonpositive mean");
  if (p >= total) return tail_expectation(d, d.lower_bound) / mean;
  const double yp = quantile(d, total - p);
  return tail_expectation(d, yp) / mean;
}

std::vector<LorenzPoint> lorenz_curve(const MEDensity& d,
                                      const std::vector<double>& grid) {
  const double total = d.total_mass();
  std::vector<LorenzPoint> out;
  out.reserve(grid.size());
  for (double x : grid) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw ValidationError("lorenz_curve: grid point outside [0, 1]");
    }
    double l;
    if (x <= 0.0) {
      l = 0.0;
    } else if (x >= 1.0) {
      l = 1.0;
    } else {
      l = 1.0 - top_share(d, (1.0 - x) * total);
    }
    out.push_back({x, l});
  }
  return out;
}

double gini(const MEDensity& d) {
  const double total = d.total_mass();
  if (!(std::abs(total - 1.0) <= 1e-9)) {
    throw ValidationError("gini: total mass must be 1");
  }
  const double mean = tail_expectation(d, d.lower_bound);
  if (!(mean > 0.0)) throw ValidationError("gini: mean must be positive");

  // segment the fractile axis at the bin-boundary fractiles
  std::vector<double> cuts;
  cuts.push_back(0.0);
  double below = 0.0;
  for (std::size_t i = d.size(); i-- > 1;) {
    below += d.bins[i].q;
    if (below > 0.0 && below < 1.0) cuts.push_back(below);
  }
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto lorenz_at = [&](double x) {
    return 1.0 - tail_expectation(d, quantile(d, x)) / mean;
  };
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    integral += gl64(lorenz_at, cuts[i], cuts[i + 1]);
  }
  return 1.0 - 2.0 * integral;
}

void write_pdf_cdf_csv(std::ostream& out, const MEDensity& d,
                       const std::vector<double>& ys) {
  const double total = d.total_mass();
  out << "y,pdf,cdf\n";
  for (double y : ys) {
    out << dtos(y) << ',' << dtos(density_eval(d, y)) << ','
        << dtos(total - ccdf(d, y)) << "\n";
  }
}

void write_log_pdf_csv(std::ostream& out, const MEDensity& d,
                       const std::vector<double>& xs) {
  out << "x,pdf_log\n";
  for (double x : xs) {
    const double ey = std::exp(x);
    out << dtos(x) << ',' << dtos(density_eval(d, ey) * ey) << "\n";
  }
}

void write_top_share_csv(std::ostream& out, const std::vector<double>& p,
                         const std::vector<double>& share) {
  out << "p,top_share\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << dtos(p[i]) << ',' << dtos(share[i]) << "\n";
  }
}

void write_lorenz_csv(std::ostream& out, const std::vector<LorenzPoint>& pts) {
  out << "x,lorenz\n";
  for (const auto& pt : pts) {
    out << dtos(pt.x) << ',' << dtos(pt.l) << "\n";
  }
}

}  // namespace metab
