#include "metab/smoothing.hpp"

#include "metab/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace metab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// density of bin (q, lambda) at its own lower edge: q l / (e^{l w} - 1);
// w = +inf gives -q l (top bin), l = 0 gives q/w
double dens_at_lower(double q, double lambda, double w) {
  if (q == 0.0) return 0.0;
  if (lambda == 0.0) return q / w;
  return q * lambda / std::expm1(lambda * w);  // expm1(-inf) = -1 handles w=inf
}

// density at its own upper edge: q l / (1 - e^{-l w})
double dens_at_upper(double q, double lambda, double w) {
  if (q == 0.0) return 0.0;
  if (lambda == 0.0) return q / w;
  return -q * lambda / std::expm1(-lambda * w);
}

// Hessian coefficient c = q l^2 e^{lw}/(e^{lw}-1)^2 = q l^2 / (4 sinh^2(lw/2))
double hessian_coef(double q, double lambda, double w) {
  if (q == 0.0) return 0.0;
  if (std::isinf(w)) return 0.0;  // top bin: e^{l t_0} = 0
  if (lambda == 0.0) return q / (w * w);
  const double u = lambda * w;
  if (std::abs(u) > 500.0) {
    return q * lambda * lambda * std::exp(-std::abs(u));
  }
  const double sh = std::sinh(0.5 * u);
  return q * lambda * lambda / (4.0 * sh * sh);
}

struct BinFit {
  double lambda;
  double j;
  bool feasible;
};

// solve all bins at thresholds t (length K, bottom fixed); infeasible bins
// flag the whole point as boundary
bool solve_all(const BinMoments& m, const std::vector<double>& t,
               std::vector<BinFit>* out) {
  const std::size_t k = m.bins();
  out->resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto& bf = (*out)[i];
    if (m.q[i] == 0.0) {
      bf = {0.0, 0.0, true};
      continue;
    }
    const double lo = t[i];
    const double hi = i ? t[i - 1] : kInf;
    try {
      const auto sol = solve_lambda(lo, hi, m.y[i]);
      bf = {sol.lambda, sol.j, true};
    } catch (const InfeasibleBinError&) {
      bf = {0.0, 0.0, false};
      return false;
    }
  }
  return true;
}

double jstar_from_fits(const BinMoments& m, const std::vector<BinFit>& fits) {
  double j = 0.0;
  for (std::size_t i = 0; i < m.bins(); ++i) {
    if (m.q[i] > 0.0) j += m.q[i] * (fits[i].j + std::log(m.q[i]));
  }
  return j;
}

// solve H x = -g for symmetric tridiagonal H by LDL^T (no pivoting needed
// for a positive definite system); returns false on a nonpositive pivot
bool solve_newton_step(const TridiagMatrix& h, const std::vector<double>& g,
                       std::vector<double>* step) {
  const std::size_t n = h.diag.size();
  std::vector<double> d(n), l(n > 1 ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    double di = h.diag[i];
    if (i > 0) di -= l[i - 1] * l[i - 1] * d[i - 1];
    if (!(di > 0.0) || !std::isfinite(di)) return false;
    d[i] = di;
    if (i + 1 < n) l[i] = h.off[i] / di;
  }
  std::vector<double>& x = *step;
  x.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = -g[i] - (i > 0 ? l[i - 1] * x[i - 1] : 0.0);  // L y = -g
  }
  for (std::size_t i = 0; i < n; ++i) x[i] /= d[i];      // D w = y
  for (std::size_t i = n - 1; i-- > 0;) x[i] -= l[i] * x[i + 1];  // L^T x = w
  return true;
}

}  // namespace

double jstar_value(const BinMoments& m, const std::vector<double>& thresholds) {
  std::vector<BinFit> fits;
  if (!solve_all(m, thresholds, &fits)) return kInf;
  return jstar_from_fits(m, fits);
}

std::vector<double> jstar_gradient(const BinMoments& m,
                                   const std::vector<double>& thresholds) {
  std::vector<BinFit> fits;
  if (!solve_all(m, thresholds, &fits)) {
    throw InfeasibleBinError("jstar_gradient: thresholds leave a bin mean "
                             "outside its bin");
  }
  const std::size_t k = m.bins();
  std::vector<double> g(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const double w_above = (i ? thresholds[i - 1] : kInf) - thresholds[i];
    const double w_below = thresholds[i] - thresholds[i + 1];
    const double above = dens_at_lower(m.q[i], fits[i].lambda, w_above);
    const double below = dens_at_upper(m.q[i + 1], fits[i + 1].lambda, w_below);
    g[i] = above - below;
  }
  return g;
}

TridiagMatrix jstar_hessian(const BinMoments& m,
                            const std::vector<double>& thresholds) {
  std::vector<BinFit> fits;
  if (!solve_all(m, thresholds, &fits)) {
    throw InfeasibleBinError("jstar_hessian: thresholds leave a bin mean "
                             "outside its bin");
  }
  const std::size_t k = m.bins();
  std::vector<double> c(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double w = (i ? thresholds[i - 1] : kInf) - thresholds[i];
    c[i] = hessian_coef(m.q[i], fits[i].lambda, w);
  }
  TridiagMatrix h;
  h.diag.resize(k - 1);
  h.off.resize(k >= 2 ? k - 2 : 0);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    h.diag[i] = c[i] + c[i + 1];
    if (i + 2 < k) h.off[i] = -c[i + 1];
  }
  return h;
}

SmoothedFit smooth_thresholds(const BinMoments& m, double t_K_fix,
                              double grad_tol, std::size_t max_iter) {
  m.validate();
  const std::size_t k = m.bins();
  if (k < 2) throw ValidationError("smoothing needs at least 2 bins");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(m.q[i] > 0.0)) {
      throw ValidationError(
          "smoothing requires positive mass in every bin (bin " +
          std::to_string(i + 1) + ")");
    }
    if (i > 0 && !(m.y[i] < m.y[i - 1])) {
      throw ValidationError(
          "smoothing requires strictly decreasing bin means: admissible "
          "threshold box is empty at bin " + std::to_string(i + 1));
    }
  }
  if (!(t_K_fix < m.y[k - 1])) {
    throw ValidationError("t_K_fix must lie strictly below the bottom bin mean");
  }

  // work on scaled coordinates so gradients are O(1) regardless of units
  const double scale =
      std::max(std::abs(m.y.front()), std::abs(t_K_fix));
  const double s = scale > 0.0 ? 1.0 / scale : 1.0;

  BinMoments ms = m;
  for (auto& v : ms.thresholds) v *= s;
  for (auto& v : ms.y) v *= s;
  ms.lower_bound *= s;

  std::vector<double> t = ms.thresholds;
  t[k - 1] = t_K_fix * s;
  ms.thresholds[k - 1] = t[k - 1];
  ms.lower_bound = t[k - 1];

  // box margins: stay 1e-9 of the gap away from each (y_{k+1}, y_k) edge
  std::vector<double> box_lo(k - 1), box_hi(k - 1), margin(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    box_hi[i] = ms.y[i];
    box_lo[i] = ms.y[i + 1];
    margin[i] = 1e-9 * (box_hi[i] - box_lo[i]);
  }

  const double tol_scaled = std::min(1e-12, grad_tol / s);

  SmoothedFit fit;
  double j_cur = jstar_value(ms, t);
  if (!std::isfinite(j_cur)) {
    throw InfeasibleBinError("initial thresholds are not admissible");
  }
  const double mass = ms.total_mass();
  const double log_s = std::log(s);
  fit.j_star_trajectory.push_back(j_cur - mass * log_s);

  std::vector<double> g = jstar_gradient(ms, t);
  auto inf_norm = [](const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n = std::max(n, std::abs(x));
    return n;
  };

  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    if (inf_norm(g) <= tol_scaled) break;

    const TridiagMatrix h = jstar_hessian(ms, t);
    std::vector<double> step;
    if (!solve_newton_step(h, g, &step)) {
      // nonpositive pivot can only appear at lambda ~ 0 degeneracies;
      // fall back to a gradient step scaled to the box
      step.resize(k - 1);
      double gn = inf_norm(g);
      for (std::size_t i = 0; i + 1 < k; ++i) {
        step[i] = -g[i] / gn * 0.1 * (box_hi[i] - box_lo[i]);
      }
    }

    // cap the step so every coordinate stays strictly inside its box
    double cap = 1.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      const double lo = box_lo[i] + margin[i];
      const double hi = box_hi[i] - margin[i];
      if (step[i] > 0.0 && t[i] + cap * step[i] > hi) {
        cap = std::min(cap, (hi - t[i]) / step[i]);
      } else if (step[i] < 0.0 && t[i] + cap * step[i] < lo) {
        cap = std::min(cap, (lo - t[i]) / step[i]);
      }
    }
    cap = std::max(cap, 0.0);

    double slope = 0.0;  // directional derivative along the step
    for (std::size_t i = 0; i + 1 < k; ++i) slope += g[i] * step[i];

    double rho = cap;
    std::vector<double> t_new(k);
    double j_new = kInf;
    bool accepted = false;
    for (int bt = 0; bt < 60 && rho > 0.0; ++bt) {
      t_new = t;
      for (std::size_t i = 0; i + 1 < k; ++i) t_new[i] = t[i] + rho * step[i];
      j_new = jstar_value(ms, t_new);
      // Armijo on J*; the right-hand side rounds to j_cur near the optimum,
      // so accepted iterates are nonincreasing in computed values
      if (std::isfinite(j_new) && j_new <= j_cur + 1e-4 * rho * slope) {
        accepted = true;
        break;
      }
      rho *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable

    t = t_new;
    j_cur = j_new;
    fit.j_star_trajectory.push_back(j_cur - mass * log_s);
    g = jstar_gradient(ms, t);
  }

  const double gnorm_scaled = inf_norm(g);
  fit.iterations = it;
  fit.grad_inf_norm = gnorm_scaled * s;
  fit.converged = gnorm_scaled <= tol_scaled;
  if (!fit.converged && !(gnorm_scaled <= 1e-6)) {
    throw ConvergenceError(
        "threshold smoothing did not converge: gradient inf-norm " +
        std::to_string(gnorm_scaled) + " after " + std::to_string(it) +
        " iterations");
  }

  // map back to original units and refit
  fit.t_star.resize(k);
  for (std::size_t i = 0; i < k; ++i) fit.t_star[i] = t[i] / s;
  fit.t_star[k - 1] = t_K_fix;

  BinMoments mf = m;
  mf.thresholds = fit.t_star;
  mf.lower_bound = t_K_fix;
  mf.provenance = Provenance::smoothed;
  fit.density = fit_me_density(mf);
  return fit;
}

std::string smoothed_fit_to_json(const SmoothedFit& f) {
  auto j = nlohmann::json::parse(density_to_json(f.density));
  j["t_star"] = f.t_star;
  j["grad_inf_norm"] = f.grad_inf_norm;
  j["iterations"] = f.iterations;
  j["j_star_trajectory"] = f.j_star_trajectory;
  return j.dump();
}

}  // namespace metab
