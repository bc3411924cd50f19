#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metab/errors.hpp"
#include "metab/mecore.hpp"
#include "metab/models.hpp"
#include "metab/quadrature.hpp"
#include "metab/rng.hpp"
#include "metab/tabio.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

using namespace metab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Independent oracle: maximize the bin dual directly by golden-section
// search on [-span, span], no phi_inv involved.
double maximize_dual_direct(double lower, double upper, double y,
                            double span = 50.0) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = -span, b = span;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  for (int it = 0; it < 300; ++it) {
    if (bin_dual_value(lower, upper, y, c) < bin_dual_value(lower, upper, y, d)) {
      a = c;
    } else {
      b = d;
    }
    c = b - gr * (b - a);
    d = a + gr * (b - a);
    if (b - a < 1e-12) break;
  }
  return 0.5 * (a + b);
}

// Closed-form full-bin integrals of the fitted exponential piece, written
// directly from the tail formulas (independent of the solver's phi route).
void bin_integrals(const MEBin& b, double* mass, double* first_moment) {
  if (b.lambda == 0.0) {
    *mass = b.q;
    *first_moment = b.q * 0.5 * (b.lower + b.upper);
    return;
  }
  if (std::isinf(b.upper)) {
    *mass = b.q;
    *first_moment = b.q * (b.lower - 1.0 / b.lambda);
    return;
  }
  const double l = b.lambda;
  // exponents shifted by e^{l a} so the ratio never overflows
  const double ed = std::exp(l * (b.upper - b.lower));
  *mass = b.q;  // forced by the density normalization
  *first_moment = b.q *
                  ((b.upper - 1.0 / l) * ed - (b.lower - 1.0 / l)) /
                  (ed - 1.0);
}

BinMoments random_feasible_moments(RngStream& rng, std::size_t k,
                                   double scale) {
  BinMoments m;
  m.provenance = Provenance::population;
  std::vector<double> edges(k + 1);
  double t = 0.1 * scale;
  for (std::size_t i = 0; i <= k; ++i) {
    edges[i] = t;
    t += scale * (0.1 + rng.uniform_open01());
  }
  // descending thresholds; top bin unbounded
  m.thresholds.resize(k);
  m.q.resize(k);
  m.y.resize(k);
  double qsum = 0.0;
  std::vector<double> w(k);
  for (auto& v : w) {
    v = 0.05 + rng.uniform_open01();
    qsum += v;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t lo_idx = k - 1 - i;  // bin i spans edges[lo] .. edges[lo+1]
    m.thresholds[i] = edges[lo_idx];
    m.q[i] = w[i] / qsum;
    if (i == 0) {
      m.y[i] = edges[k] + (0.05 + rng.uniform_open01()) * scale;
    } else {
      const double frac = 0.02 + 0.96 * rng.uniform_open01();
      m.y[i] = edges[lo_idx] + frac * (edges[lo_idx + 1] - edges[lo_idx]);
    }
  }
  m.lower_bound = m.thresholds.back();
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("solve_lambda: top bin closed form") {
  const auto sol = solve_lambda(1.0, kInf, 3.0);
  CHECK(sol.lambda == doctest::Approx(-0.5).epsilon(1e-15));
  // J_1 = -1 - log(y - t)
  CHECK(sol.j == doctest::Approx(-1.0 - std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS((void)solve_lambda(1.0, kInf, 1.0), InfeasibleBinError);
}

TEST_CASE("solve_lambda: midpoint means the uniform branch") {
  const auto sol = solve_lambda(0.0, 1.0, 0.5);
  CHECK(sol.lambda == 0.0);
  CHECK(sol.j == doctest::Approx(-std::log(1.0)).epsilon(1e-15));
}

TEST_CASE("solve_lambda: truncated Exp(1) moments force lambda = -1") {
  const double y = (1.0 - 2.0 * std::exp(-1.0)) / (1.0 - std::exp(-1.0));
  const auto sol = solve_lambda(0.0, 1.0, y);
  CHECK(sol.lambda == doctest::Approx(-1.0).epsilon(1e-8));
  // independent route: direct maximization of the dual
  const double direct = maximize_dual_direct(0.0, 1.0, y);
  CHECK(sol.lambda == doctest::Approx(direct).epsilon(1e-7));
}

TEST_CASE("solve_lambda agrees with direct dual maximization") {
  RngStream rng(101);
  for (int i = 0; i < 200; ++i) {
    const double a = (rng.uniform_open01() - 0.3) * 10.0;
    const double d = 0.1 + rng.uniform_open01() * 5.0;
    const double frac = 0.05 + 0.9 * rng.uniform_open01();
    const double y = a + frac * d;
    const auto sol = solve_lambda(a, a + d, y);
    const double direct = maximize_dual_direct(a, a + d, y, 400.0 / d);
    CHECK(sol.lambda == doctest::Approx(direct).epsilon(1e-6));
    // local maximality of the dual at the solution
    const double j0 = bin_dual_value(a, a + d, y, sol.lambda);
    for (double eps : {1e-3, 1e-2}) {
      CHECK(bin_dual_value(a, a + d, y, sol.lambda + eps) < j0);
      CHECK(bin_dual_value(a, a + d, y, sol.lambda - eps) < j0);
    }
  }
}

TEST_CASE("sign rule: lambda tracks the mean-midpoint offset") {
  RngStream rng(7);
  for (int i = 0; i < 300; ++i) {
    const double a = rng.uniform_open01() * 4.0;
    const double d = 0.2 + rng.uniform_open01() * 3.0;
    const double y = a + (0.02 + 0.96 * rng.uniform_open01()) * d;
    const double mid = a + 0.5 * d;
    const auto sol = solve_lambda(a, a + d, y);
    if (y < mid) CHECK(sol.lambda < 0.0);
    if (y > mid) CHECK(sol.lambda > 0.0);
  }
}

TEST_CASE("near-boundary means raise infeasible errors") {
  CHECK_THROWS_AS((void)solve_lambda(0.0, 1.0, 1.0 - 1e-14), InfeasibleBinError);
  CHECK_THROWS_AS((void)solve_lambda(0.0, 1.0, 0.0), InfeasibleBinError);
  CHECK_THROWS_AS((void)solve_lambda(0.0, 1.0, 1.2), InfeasibleBinError);
  // close but inside the guard still solves
  const auto sol = solve_lambda(0.0, 1.0, 1.0 - 1e-9);
  CHECK(std::isfinite(sol.lambda));
  CHECK(sol.lambda > 0.0);
}

TEST_CASE("scale equivariance of the dual solve") {
  RngStream rng(23);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform_open01() * 2.0;
    const double d = 0.3 + rng.uniform_open01();
    const double y = a + (0.1 + 0.8 * rng.uniform_open01()) * d;
    const double s = std::exp((rng.uniform_open01() - 0.5) * 12.0);
    const auto base = solve_lambda(a, a + d, y);
    const auto scaled = solve_lambda(s * a, s * (a + d), s * y);
    CHECK(scaled.lambda == doctest::Approx(base.lambda / s).epsilon(1e-10));
    CHECK(scaled.j == doctest::Approx(base.j + std::log(s)).epsilon(1e-9));
  }
}

TEST_CASE("Exp(1) population moments refit to the exponential itself") {
  const Exponential dist(1.0);
  const auto moments = population_moments(dist, {2.0, 1.0, 0.0});
  const auto fit = fit_me_density(moments);
  for (const auto& b : fit.bins) {
    CHECK(b.lambda == doctest::Approx(-1.0).epsilon(1e-8));
  }
  for (double y : {0.05, 0.3, 0.7, 0.99, 1.5, 2.4, 5.0}) {
    CHECK(density_eval(fit, y) ==
          doctest::Approx(std::exp(-y)).epsilon(1e-7));
  }
  CHECK(density_eval(fit, 0.7) == doctest::Approx(0.496585).epsilon(1e-5));
}

TEST_CASE("single uniform bin") {
  BinMoments m;
  m.thresholds = {1.0, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.0, 1.0};
  m.y = {std::numeric_limits<double>::quiet_NaN(), 0.5};
  const auto fit = fit_me_density(m);
  CHECK(density_eval(fit, 0.25) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(density_eval(fit, -0.1) == 0.0);
  CHECK(density_eval(fit, 1.5) == 0.0);  // empty top bin
  CHECK(fit.total_mass() == 1.0);
}

TEST_CASE("moment reproduction on random tables") {
  RngStream rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 3 + (rng.next_u64() % 20);
    const double scale = std::exp((rng.uniform_open01() - 0.5) * 8.0);
    const auto m = random_feasible_moments(rng, k, scale);
    const auto fit = fit_me_density(m);
    for (const auto& b : fit.bins) {
      if (b.q == 0.0) continue;
      double mass = 0.0, fm = 0.0;
      bin_integrals(b, &mass, &fm);
      CHECK(std::abs(fm - b.q * b.y) <= 1e-10 * std::abs(b.q * b.y));
      // the stable tilted-mean route agrees
      CHECK(bin_tilted_mean(b.lower, b.upper, b.lambda) ==
            doctest::Approx(b.y).epsilon(1e-10));
    }
  }
}

TEST_CASE("moment reproduction via quadrature on a few random bins") {
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_feasible_moments(rng, 5, 1.0);
    const auto fit = fit_me_density(m);
    for (std::size_t i = 1; i < fit.size(); i += 2) {
      const auto& b = fit.bins[i];
      if (b.q == 0.0) continue;
      const double mass =
          integrate([&](double y) { return density_eval(fit, y); }, b.lower,
                    b.upper, 1e-12);
      const double fm =
          integrate([&](double y) { return y * density_eval(fit, y); },
                    b.lower, b.upper, 1e-12);
      CHECK(mass == doctest::Approx(b.q).epsilon(1e-9));
      CHECK(fm == doctest::Approx(b.q * b.y).epsilon(1e-9));
    }
  }
}

TEST_CASE("fit on the 2019 IRS table reproduces all 18 means") {
  std::ifstream fmt(std::string(METAB_TEST_DATA_DIR) + "/irs2019.format");
  const FormatDescriptor fd = parse_format_descriptor(fmt);
  std::ifstream csv(std::string(METAB_TEST_DATA_DIR) + "/irs2019.csv");
  const auto s = parse_summary(csv, fd);
  const auto m = to_bin_moments(s);
  const auto fit = fit_me_density(m);
  CHECK(fit.size() == 18);
  double total = 0.0;
  for (const auto& b : fit.bins) {
    total += b.q;
    double mass = 0.0, fm = 0.0;
    bin_integrals(b, &mass, &fm);
    CHECK(std::abs(fm - b.q * b.y) <= 1e-10 * b.q * b.y);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.bins[0].lambda < 0.0);  // Pareto-like upper tail
}

TEST_CASE("infeasible top bin reports index 1") {
  BinMoments m;
  m.thresholds = {10.0, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.5, 0.5};
  m.y = {9.0, 5.0};  // top mean below its threshold
  try {
    (void)fit_me_density(m);
    FAIL("expected infeasible bin");
  } catch (const InfeasibleBinError& e) {
    CHECK(e.bin() == 1);
  }
}

TEST_CASE("density JSON round trips bit-exactly") {
  RngStream rng(77);
  const auto m = random_feasible_moments(rng, 7, 3.0);
  const auto fit = fit_me_density(m);
  const std::string text = density_to_json(fit);
  const auto back = density_from_json(text);
  REQUIRE(back.size() == fit.size());
  for (std::size_t i = 0; i < fit.size(); ++i) {
    CHECK(back.bins[i].lower == fit.bins[i].lower);
    CHECK(back.bins[i].upper == fit.bins[i].upper);
    CHECK(back.bins[i].q == fit.bins[i].q);
    CHECK(back.bins[i].lambda == fit.bins[i].lambda);
  }
  CHECK(back.j_star == fit.j_star);
  CHECK(density_to_json(back) == text);
}

TEST_CASE("bin lookup follows the left-closed convention") {
  BinMoments m;
  m.thresholds = {2.0, 1.0, 0.0};
  m.lower_bound = 0.0;
  m.q = {0.2, 0.5, 0.3};
  m.y = {3.0, 1.4, 0.6};
  const auto fit = fit_me_density(m);
  CHECK(fit.bin_index(0.0) == 2);
  CHECK(fit.bin_index(1.0) == 1);  // edge belongs to the bin above
  CHECK(fit.bin_index(2.0) == 0);
  CHECK(fit.bin_index(100.0) == 0);
  CHECK(fit.bin_index(-0.5) == fit.size());
}
