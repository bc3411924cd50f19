#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metab/errors.hpp"
#include "metab/functionals.hpp"
#include "metab/mecore.hpp"
#include "metab/models.hpp"
#include "metab/rng.hpp"
#include "metab/smoothing.hpp"
#include "metab/tabio.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

using namespace metab;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Random table with strictly decreasing means, suitable for smoothing.
BinMoments random_smoothable(RngStream& rng, std::size_t k, double scale) {
  BinMoments m;
  std::vector<double> edges(k);
  double t = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    t += scale * (0.2 + rng.uniform_open01());
    edges[i] = t;
  }
  m.thresholds.resize(k);
  m.q.resize(k);
  m.y.resize(k);
  double qsum = 0.0;
  std::vector<double> w(k);
  for (auto& v : w) {
    v = 0.1 + rng.uniform_open01();
    qsum += v;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t lo = k - 1 - i;
    m.thresholds[i] = edges[lo];
    m.q[i] = w[i] / qsum;
    if (i == 0) {
      m.y[i] = edges[k - 1] + scale * (0.2 + rng.uniform_open01());
    } else {
      const double frac = 0.25 + 0.5 * rng.uniform_open01();
      m.y[i] = edges[lo] + frac * (edges[lo + 1] - edges[lo]);
    }
  }
  m.lower_bound = m.thresholds.back();
  m.validate();
  // means are strictly decreasing by construction (disjoint bins)
  return m;
}

// tridiagonal determinant minors via the generic three-term recurrence
std::vector<double> leading_minors(const TridiagMatrix& h) {
  const std::size_t n = h.diag.size();
  std::vector<double> dd(n + 1);
  dd[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double off2 = i > 0 ? h.off[i - 1] * h.off[i - 1] : 0.0;
    dd[i + 1] = h.diag[i] * dd[i] - off2 * (i > 0 ? dd[i - 1] : 0.0);
  }
  return {dd.begin() + 1, dd.end()};
}

}  // namespace

TEST_CASE("gradient matches central finite differences of J*") {
  RngStream rng(404);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t k = 3 + (rng.next_u64() % 10);
    const auto m = random_smoothable(rng, k, 1.0);
    std::vector<double> t = m.thresholds;
    const auto g = jstar_gradient(m, t);
    for (std::size_t i = 0; i + 1 < k; ++i) {
      const double gap =
          (i == 0 ? m.y[0] : m.y[i]) - m.y[i + 1];
      const double h = 1e-6 * gap;
      std::vector<double> tp = t, tm = t;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (jstar_value(m, tp) - jstar_value(m, tm)) / (2.0 * h);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("gradient equals the density jump at each threshold") {
  RngStream rng(99);
  const auto m = random_smoothable(rng, 6, 2.0);
  const auto g = jstar_gradient(m, m.thresholds);
  const auto fit = fit_me_density(m);
  for (std::size_t i = 0; i + 1 < m.bins(); ++i) {
    const double t = m.thresholds[i];
    const double above = density_eval(fit, t);  // bin above owns the edge
    const double below = density_eval(fit, std::nextafter(t, -1.0)) /
                         1.0;  // just below the edge
    CHECK(g[i] == doctest::Approx(above - below).epsilon(1e-9));
  }
}

TEST_CASE("symmetric two-bin toy: zero gradient at the interior threshold") {
  // bounded symmetric configuration expressed with an empty top bin
  BinMoments m;
  m.thresholds = {2.0, 1.0, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.0, 0.5, 0.5};
  m.y = {kNaN, 1.5, 0.5};
  const auto g = jstar_gradient(m, m.thresholds);
  REQUIRE(g.size() == 2);
  // at t = 2 the empty top bin has zero density, the bin below is uniform 0.5
  CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
  // at t = 1 both means sit at their midpoints: uniform on both sides
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("hessian: K=2 is the 1x1 matrix [c1 + c2]") {
  BinMoments m;
  m.thresholds = {1.0, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.4, 0.6};
  m.y = {1.8, 0.45};
  const auto h = jstar_hessian(m, m.thresholds);
  REQUIRE(h.diag.size() == 1);
  CHECK(h.off.empty());
  // c1 = 0 on the unbounded top bin, so the entry is just c2
  const auto sol = solve_lambda(0.0, 1.0, 0.45);
  const double u = sol.lambda;
  const double c2 = m.q[1] * u * u * std::exp(u) / (std::expm1(u) * std::expm1(u));
  CHECK(h.diag[0] == doctest::Approx(c2).epsilon(1e-10));
}

TEST_CASE("hessian at all-uniform fits uses the lambda->0 limit") {
  BinMoments m;
  m.thresholds = {3.0, 2.0, 0.5, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.0, 0.25, 0.5, 0.25};
  m.y = {kNaN, 2.5, 1.25, 0.25};
  const auto h = jstar_hessian(m, m.thresholds);
  // c_k = q_k / width^2 for uniform bins; top bin contributes 0
  const double c2 = 0.25 / 1.0;
  const double c3 = 0.5 / (1.5 * 1.5);
  const double c4 = 0.25 / (0.5 * 0.5);
  REQUIRE(h.diag.size() == 3);
  CHECK(h.diag[0] == doctest::Approx(0.0 + c2).epsilon(1e-12));
  CHECK(h.diag[1] == doctest::Approx(c2 + c3).epsilon(1e-12));
  CHECK(h.diag[2] == doctest::Approx(c3 + c4).epsilon(1e-12));
  CHECK(h.off[0] == doctest::Approx(-c2).epsilon(1e-12));
  CHECK(h.off[1] == doctest::Approx(-c3).epsilon(1e-12));
  const auto minors = leading_minors(h);
  for (double d : minors) CHECK(d > 0.0);
}

TEST_CASE("hessian minors positive and satisfy the product recurrence") {
  RngStream rng(5150);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 3 + (rng.next_u64() % 12);
    const auto m = random_smoothable(rng, k, 1.0);
    const auto h = jstar_hessian(m, m.thresholds);
    const auto minors = leading_minors(h);
    for (double d : minors) CHECK(d > 0.0);

    // reconstruct c from the matrix and check D_n = c_{n+1} D_{n-1} + prod c
    std::vector<double> c(k);
    c[0] = 0.0;  // unbounded top bin
    for (std::size_t i = 0; i + 1 < k; ++i) c[i + 1] = h.diag[i] - c[i];
    double prod = c[0];
    for (std::size_t n = 0; n < minors.size(); ++n) {
      if (n == 0) {
        prod = c[0];
      }
      prod *= (n == 0) ? 1.0 : c[n];
      const double prev = n == 0 ? 1.0 : minors[n - 1];
      CHECK(minors[n] ==
            doctest::Approx(c[n + 1] * prev + prod).epsilon(1e-8));
    }
  }
}

TEST_CASE("exponential population moments: the start is already optimal") {
  const Exponential dist(1.0);
  std::vector<double> thresholds = {2.5, 1.7, 1.0, 0.4, 0.0};
  const auto m = population_moments(dist, thresholds);
  const auto fit = smooth_thresholds(m, 0.0);
  CHECK(fit.iterations <= 2);
  CHECK(fit.grad_inf_norm <= 1e-10);
  // the smoothed density is still e^-y and continuous
  for (double y : {0.1, 0.4, 1.0, 1.7, 2.5, 4.0}) {
    CHECK(density_eval(fit.density, y) ==
          doctest::Approx(std::exp(-y)).epsilon(1e-7));
  }
  for (std::size_t i = 0; i + 1 < fit.t_star.size(); ++i) {
    const double t = fit.t_star[i];
    const double jump = density_eval(fit.density, t) -
                        density_eval(fit.density, std::nextafter(t, 0.0));
    CHECK(std::abs(jump) <= 1e-8);
  }
  CHECK(fit.density.provenance == Provenance::smoothed);
}

TEST_CASE("symmetric toy: the optimum keeps the threshold at 1") {
  BinMoments m;
  m.thresholds = {1.2, 0.0};  // start off the symmetric point
  m.lower_bound = 0.0;
  m.q = {0.5, 0.5};
  m.y = {1.5, 0.5};
  // t_1 free in (y_2, y_1) = (0.5, 1.5); t_2 fixed at 0. The top bin is
  // unbounded here, so the optimum balances the exponential tail against
  // the bottom bin; with symmetric means the continuity point is t* where
  // densities match.
  const auto fit = smooth_thresholds(m, 0.0);
  CHECK(fit.converged);
  const double t = fit.t_star[0];
  const double above = density_eval(fit.density, t);
  const double below = density_eval(fit.density, std::nextafter(t, 0.0));
  CHECK(above == doctest::Approx(below).epsilon(1e-9));
}

TEST_CASE("randomized smoothing: convergence, descent, continuity") {
  RngStream rng(860);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 3 + (rng.next_u64() % 8);
    const double scale = std::exp((rng.uniform_open01() - 0.5) * 4.0);
    const auto m = random_smoothable(rng, k, scale);
    const double tk = m.lower_bound;  // keep the published bottom edge
    const auto fit = smooth_thresholds(m, tk);
    CHECK(fit.converged);
    // descent
    for (std::size_t i = 1; i < fit.j_star_trajectory.size(); ++i) {
      CHECK(fit.j_star_trajectory[i] <= fit.j_star_trajectory[i - 1]);
    }
    CHECK(fit.j_star_trajectory.back() <= fit.j_star_trajectory.front());
    // box membership and continuity of the refit
    double supf = 0.0;
    for (std::size_t i = 0; i < fit.density.size(); ++i) {
      supf = std::max(supf, density_eval(fit.density,
                                         fit.t_star[i] * (1 + 1e-12)));
    }
    for (std::size_t i = 0; i + 1 < k; ++i) {
      CHECK(fit.t_star[i] < m.y[i]);
      CHECK(fit.t_star[i] > m.y[i + 1]);
      const double t = fit.t_star[i];
      const double jump =
          density_eval(fit.density, t) -
          density_eval(fit.density, std::nextafter(t, fit.t_star[k - 1]));
      CHECK(std::abs(jump) <= 1e-8 * std::max(1.0, supf));
    }
  }
}

TEST_CASE("convexity probe along random segments") {
  RngStream rng(31337);
  const auto m = random_smoothable(rng, 6, 1.0);
  const std::size_t k = m.bins();
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> t1(k), t2(k);
    t1[k - 1] = t2[k - 1] = m.lower_bound;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      const double lo = m.y[i + 1], hi = m.y[i];
      t1[i] = lo + (0.05 + 0.9 * rng.uniform_open01()) * (hi - lo);
      t2[i] = lo + (0.05 + 0.9 * rng.uniform_open01()) * (hi - lo);
    }
    const double theta = rng.uniform_open01();
    std::vector<double> tm(k);
    for (std::size_t i = 0; i < k; ++i) {
      tm[i] = theta * t1[i] + (1.0 - theta) * t2[i];
    }
    const double lhs = jstar_value(m, tm);
    const double rhs =
        theta * jstar_value(m, t1) + (1.0 - theta) * jstar_value(m, t2);
    CHECK(lhs <= rhs + 1e-10);
  }
}

TEST_CASE("preconditions: empty box, zero-mass bin, bad t_K") {
  BinMoments m;
  m.thresholds = {2.0, 1.0, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.3, 0.3, 0.4};
  m.y = {2.5, 1.2, 0.5};

  BinMoments bad = m;
  bad.y[1] = 0.4;  // not strictly decreasing -> empty box
  CHECK_THROWS_AS((void)smooth_thresholds(bad, 0.0), ValidationError);

  BinMoments zero = m;
  zero.q[1] = 0.0;
  zero.y[1] = kNaN;
  CHECK_THROWS_AS((void)smooth_thresholds(zero, 0.0), ValidationError);

  CHECK_THROWS_AS((void)smooth_thresholds(m, 0.6), ValidationError);
}

TEST_CASE("smoothing the 2019 IRS table yields a continuous density") {
  std::ifstream fmt(std::string(METAB_TEST_DATA_DIR) + "/irs2019.format");
  const FormatDescriptor fd = parse_format_descriptor(fmt);
  std::ifstream csv(std::string(METAB_TEST_DATA_DIR) + "/irs2019.csv");
  const auto s = parse_summary(csv, fd);
  const auto m = to_bin_moments(s);

  const double j_init = jstar_value(m, m.thresholds);
  const auto fit = smooth_thresholds(m, m.lower_bound);
  CHECK(fit.converged);
  CHECK(fit.j_star_trajectory.back() < j_init);

  double supf = 0.0;
  for (double t : fit.t_star) {
    supf = std::max(supf, density_eval(fit.density, t));
  }
  for (std::size_t i = 0; i + 1 < fit.t_star.size(); ++i) {
    const double t = fit.t_star[i];
    const double jump = density_eval(fit.density, t) -
                        density_eval(fit.density, std::nextafter(t, 0.0));
    CHECK(std::abs(jump) <= 1e-8 * supf);
  }
  const std::string js = smoothed_fit_to_json(fit);
  CHECK(js.find("t_star") != std::string::npos);
  CHECK(js.find("j_star_trajectory") != std::string::npos);
}
