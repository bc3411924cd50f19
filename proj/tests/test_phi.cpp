#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metab/phi.hpp"
#include "metab/rng.hpp"

#include <cmath>

using metab::phi;
using metab::phi_inv;
using metab::phi_prime;

TEST_CASE("phi at zero and oddness") {
  CHECK(phi(0.0) == 0.0);
  metab::RngStream rng(11);
  for (int i = 0; i < 200; ++i) {
    const double x = (rng.uniform_open01() - 0.5) * 40.0;
    CHECK(phi(-x) == doctest::Approx(-phi(x)).epsilon(1e-15));
  }
}

TEST_CASE("phi(1) equals coth(1) - 1") {
  const double expected = std::cosh(1.0) / std::sinh(1.0) - 1.0;
  CHECK(phi(1.0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(phi(1.0) == doctest::Approx(0.3130352854993313).epsilon(1e-13));
}

TEST_CASE("phi limits: 1 at infinity, slope 1/3 at zero") {
  CHECK(phi(800.0) == doctest::Approx(1.0 - 1.0 / 800.0).epsilon(1e-14));
  CHECK(1.0 - phi(1e6) < 2e-6);
  // finite-difference check of phi'(0+)
  const double h = 1e-6;
  const double fd = (phi(h) - phi(-h)) / (2.0 * h);
  CHECK(fd == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(phi_prime(1e-9) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("phi is strictly increasing and bounded by 1") {
  double prev = -1.0;
  for (int i = -60; i <= 60; ++i) {
    const double x = i * 0.5;
    const double v = phi(x);
    CHECK(std::abs(v) < 1.0);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("series/analytic branches agree at the switch point") {
  for (double x : {9.999e-5, 1.0001e-4, 5e-5, 2e-4}) {
    const double series = x / 3.0 - x * x * x / 45.0;
    const double analytic = 1.0 + 2.0 / std::expm1(2.0 * x) - 1.0 / x;
    CHECK(series == doctest::Approx(analytic).epsilon(1e-12));
    CHECK(phi(x) == doctest::Approx(series).epsilon(1e-12));
  }
}

TEST_CASE("phi_inv round trips") {
  CHECK(phi_inv(0.0) == 0.0);
  CHECK(phi_inv(phi(2.5)) == doctest::Approx(2.5).epsilon(1e-10));
  metab::RngStream rng(5);
  for (int i = 0; i < 500; ++i) {
    const double u = (rng.uniform_open01() * 2.0 - 1.0) * 0.999999;
    const double x = phi_inv(u);
    CHECK(std::abs(phi(x) - u) <= 1e-12);
    CHECK((u > 0) == (x > 0));
  }
}

TEST_CASE("phi_inv(0.9) residual and location") {
  const double x = phi_inv(0.9);
  CHECK(std::abs(phi(x) - 0.9) <= 1e-13);
  // coth(x) - 1/x = 0.9 solves just below 10
  CHECK(x > 9.999);
  CHECK(x < 10.0);
}

TEST_CASE("phi_inv handles extreme arguments") {
  for (double u : {0.999999999, 1e-12, 1e-300, -0.99999999999}) {
    const double x = phi_inv(u);
    CHECK(std::isfinite(x));
    CHECK(std::abs(phi(x) - u) <= 1e-12);
  }
  CHECK_THROWS_AS((void)phi_inv(1.0), std::domain_error);
  CHECK_THROWS_AS((void)phi_inv(-1.0), std::domain_error);
  CHECK_THROWS_AS((void)phi_inv(1.5), std::domain_error);
}

TEST_CASE("phi_prime matches central differences") {
  metab::RngStream rng(17);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform_open01() * 20.0 + 1e-3;
    const double h = 1e-6 * std::max(1.0, x);
    const double fd = (phi(x + h) - phi(x - h)) / (2.0 * h);
    CHECK(phi_prime(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}
