#include "metab/mecore.hpp"

#include "metab/errors.hpp"
#include "metab/phi.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace metab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// log((e^u - 1)/u), the scale-free piece of the dual's log term
double log_expm1_over_x(double u) {
  const double au = std::abs(u);
  if (au < 1e-4) return 0.5 * u + u * u / 24.0;  // next term u^4/2880
  if (au > 120.0) return (u > 0.0 ? u : 0.0) - std::log(au);
  return 0.5 * u + std::log(std::sinh(0.5 * u) / (0.5 * u));
}

}  // namespace

double bin_dual_value(double lower, double upper, double y, double lambda) {
  if (std::isinf(upper)) {
    if (!(lambda < 0.0)) return -kInf;  // J_1 = -inf for lambda >= 0
    return y * lambda - lambda * lower + std::log(-lambda);
  }
  const double d = upper - lower;
  if (lambda == 0.0) return -std::log(d);
  return lambda * (y - lower) - std::log(d) - log_expm1_over_x(lambda * d);
}

double bin_tilted_mean(double lower, double upper, double lambda) {
  if (std::isinf(upper)) return lower - 1.0 / lambda;
  if (lambda == 0.0) return 0.5 * (lower + upper);
  const double d = upper - lower;
  return 0.5 * (lower + upper) + 0.5 * d * phi(0.5 * lambda * d);
}

LambdaSolution solve_lambda(double lower, double upper, double y) {
  if (std::isinf(upper)) {
    if (!(y > lower)) {
      throw InfeasibleBinError("top bin mean does not exceed its threshold");
    }
    return {-1.0 / (y - lower), -1.0 - std::log(y - lower)};
  }
  if (!(lower < upper)) {
    throw ValidationError("solve_lambda: bin has non-positive width");
  }
  if (!(lower < y && y < upper)) {
    throw InfeasibleBinError("bin mean not strictly interior to the bin");
  }
  // work on s*(lower, y, upper) so coordinates are O(1)
  const double s =
      1.0 / std::max({std::abs(lower), std::abs(upper), std::abs(y)});
  const double a = s * lower, b = s * upper, ys = s * y;
  const double c = 0.5 * (a + b);
  const double d = b - a;
  const double u = 2.0 * (ys - c) / d;
  if (!(std::abs(u) < 1.0 - 1e-12)) {
    // |lambda| d diverges here; the bin degenerates toward a point mass
    throw InfeasibleBinError("bin mean too close to a bin edge");
  }
  if (u == 0.0) {
    return {0.0, -std::log(upper - lower)};
  }
  const double lam_scaled = 2.0 * phi_inv(u) / d;
  const double j_scaled = bin_dual_value(a, b, ys, lam_scaled);
  return {lam_scaled * s, j_scaled + std::log(s)};
}

double MEDensity::total_mass() const {
  double t = 0.0;
  for (const auto& b : bins) t += b.q;
  return t;
}

std::size_t MEDensity::bin_index(double y) const {
  if (!(y >= lower_bound)) return size();
  // bins descend by lower edge; the first one with lower <= y contains y,
  // which puts an interior edge value into the bin above it ([lower, upper))
  std::size_t lo = 0, hi = size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (bins[mid].lower <= y) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

MEDensity fit_me_density(const BinMoments& moments) {
  moments.validate();
  MEDensity d;
  d.lower_bound = moments.lower_bound;
  d.provenance = moments.provenance;
  d.j_star = 0.0;
  const std::size_t k = moments.bins();
  d.bins.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    MEBin& b = d.bins[i];
    b.lower = moments.lower_edge(i);
    b.upper = moments.upper_edge(i);
    b.q = moments.q[i];
    b.y = moments.y[i];
    if (b.q == 0.0) {
      b.y = kNaN;
      b.lambda = 0.0;
      b.j = kNaN;
      continue;
    }
    try {
      const auto sol = solve_lambda(b.lower, b.upper, b.y);
      b.lambda = sol.lambda;
      b.j = sol.j;
    } catch (const InfeasibleBinError& e) {
      throw InfeasibleBinError(std::string(e.what()) + " (bin " +
                                   std::to_string(i + 1) + ")",
                               i + 1);
    }
    d.j_star += b.q * (b.j + std::log(b.q));
  }
  return d;
}

double density_eval(const MEDensity& d, double y) {
  const std::size_t i = d.bin_index(y);
  if (i >= d.size()) return 0.0;
  const MEBin& b = d.bins[i];
  if (b.q == 0.0) return 0.0;
  if (std::isinf(b.upper)) {
    return b.q * (-b.lambda) * std::exp(b.lambda * (y - b.lower));
  }
  const double w = b.upper - b.lower;
  if (b.lambda == 0.0) return b.q / w;
  if (b.lambda < 0.0) {
    // reference the lower edge so exponents stay non-positive
    return b.q * b.lambda * std::exp(b.lambda * (y - b.lower)) /
           std::expm1(b.lambda * w);
  }
  return -b.q * b.lambda * std::exp(b.lambda * (y - b.upper)) /
         std::expm1(-b.lambda * w);
}

std::string density_to_json(const MEDensity& d) {
  nlohmann::json j;
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : d.bins) {
    nlohmann::json jb;
    jb["lower"] = b.lower;
    if (std::isinf(b.upper)) {
      jb["upper"] = nullptr;
    } else {
      jb["upper"] = b.upper;
    }
    jb["q"] = b.q;
    if (std::isnan(b.y)) {
      jb["y"] = nullptr;
    } else {
      jb["y"] = b.y;
    }
    jb["lambda"] = b.lambda;
    bins.push_back(std::move(jb));
  }
  j["bins"] = std::move(bins);
  j["lower_bound"] = d.lower_bound;
  j["j_star"] = d.j_star;
  j["provenance"] = to_string(d.provenance);
  return j.dump();
}

MEDensity density_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MEDensity d;
  d.lower_bound = j.at("lower_bound").get<double>();
  d.j_star = j.at("j_star").get<double>();
  d.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  for (const auto& jb : j.at("bins")) {
    MEBin b;
    b.lower = jb.at("lower").get<double>();
    b.upper = jb.at("upper").is_null() ? kInf : jb.at("upper").get<double>();
    b.q = jb.at("q").get<double>();
    b.y = jb.at("y").is_null() ? kNaN : jb.at("y").get<double>();
    b.lambda = jb.at("lambda").get<double>();
    b.j = b.q > 0.0 ? bin_dual_value(b.lower, b.upper, b.y, b.lambda) : kNaN;
    d.bins.push_back(b);
  }
  return d;
}

}  // namespace metab
