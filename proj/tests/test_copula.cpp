#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracle.hpp"
#include "qrs/copula.hpp"
#include "qrs/error.hpp"

using namespace qrs;

TEST_CASE("total mass and independence") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(bvn_cdf(inf, inf, 0.3) == 1.0);
  CHECK(bvn_cdf(-inf, 0.2, 0.3) == 0.0);
  CHECK(bvn_cdf(1.1, inf, -0.4) == doctest::Approx(norm_cdf(1.1)).epsilon(1e-15));
  CHECK(std::abs(bvn_cdf(-1.0, 1.0, 0.0) - norm_cdf(-1.0) * norm_cdf(1.0)) < 1e-15);
}

TEST_CASE("orthant probability against the arcsine form and quadrature") {
  CHECK(std::abs(bvn_cdf(0, 0, 0.5) - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(oracle::bvn_quadrature(0, 0, 0.5) - 1.0 / 3.0) < 1e-12);
  for (double r = -0.95; r < 0.96; r += 0.05) {
    CHECK(std::abs(bvn_cdf(0, 0, r) - oracle::bvn_orthant_closed_form(r)) < 1e-10);
  }
}

TEST_CASE("reference values computed in extended precision") {
  struct Ref {
    double a, b, r, p;
  };
  const Ref refs[] = {
      {-1.0, 0.5, 0.3, 0.13325613544995110718},  {1.2, -0.7, -0.8, 0.14657056580706267822},
      {2.0, 2.0, 0.95, 0.97052421980790811391},  {-3.0, -2.5, 0.99, 0.0013498337273006304431},
      {0.1, -0.2, -0.999, 7.7780018077765857642e-05}, {-0.4, 1.3, 0.6, 0.34077706039886056011},
      {0.7, 0.2, -0.35, 0.39706621606813674505},
  };
  for (const auto& ref : refs) {
    CAPTURE(ref.a);
    CAPTURE(ref.b);
    CAPTURE(ref.r);
    CHECK(std::abs(bvn_cdf(ref.a, ref.b, ref.r) - ref.p) < 1e-12);
  }
}

TEST_CASE("agreement with adaptive quadrature over a random design") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ab(-4.0, 4.0);
  std::uniform_real_distribution<double> rr(-0.995, 0.995);
  double worst = 0.0;
  for (int i = 0; i < 400; ++i) {
    const double a = ab(rng), b = ab(rng), r = rr(rng);
    worst = std::max(worst, std::abs(bvn_cdf(a, b, r) - oracle::bvn_quadrature(a, b, r)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("kernel matches the free function") {
  for (double r : {-0.93, -0.4, 0.0, 0.2, 0.926, 0.99}) {
    const BvnKernel k(r);
    for (double a : {-2.0, -0.3, 0.0, 1.7}) {
      for (double b : {-1.1, 0.4, 2.5}) CHECK(k.cdf(a, b) == bvn_cdf(a, b, r));
    }
  }
}

TEST_CASE("correlation outside the open interval") {
  CHECK_THROWS_AS(bvn_cdf(0, 0, 1.0), ValidationError);
  CHECK_THROWS_AS(bvn_cdf(0, 0, -1.2), ValidationError);
  CHECK_THROWS_AS(CopulaModel::gaussian(1.0), ValidationError);
  CHECK(CopulaModel::admissible(CopulaFamily::Gaussian, 0.99));
  CHECK_FALSE(CopulaModel::admissible(CopulaFamily::Gaussian, -1.0));
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1 - 1e-9}) {
    CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(norm_quantile(0.5) == 0.0);
  CHECK(std::isinf(norm_quantile(0.0)));
  CHECK(std::isinf(norm_quantile(1.0)));
}

TEST_CASE("copula values") {
  CHECK(copula_cdf(0.3, 0.7, 0.0) == doctest::Approx(0.21).epsilon(1e-15));
  CHECK(std::abs(copula_cdf(0.5, 0.5, 0.5) - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(copula_cdf(0.4, 1 - 1e-12, 0.7) - 0.4) < 1e-9);
  CHECK(std::abs(copula_cdf(0.3, 0.7, 0.5) - 0.2669038488673630805) < 1e-12);
  CHECK(std::abs(copula_cdf(0.05, 0.2, -0.6) - 0.00028937274947229955463) < 1e-12);
  CHECK(copula_cdf(0.3, 1.0, 0.4) == 0.3);
  CHECK(copula_cdf(1.0, 0.6, 0.4) == 0.6);
  CHECK(copula_cdf(0.0, 0.6, 0.4) == 0.0);
  CHECK(copula_cdf(0.3, 0.0, 0.4) == 0.0);
  CHECK_THROWS_AS(copula_cdf(1.2, 0.5, 0.1), ValidationError);
  CHECK_THROWS_AS(copula_cdf(0.2, -0.1, 0.1), ValidationError);
}

TEST_CASE("conditional copula values") {
  CHECK(conditional_copula(0.25, 0.6, 0.0) == 0.25);
  CHECK(conditional_copula(0.5, 1.0, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(conditional_copula(0.5, 0.5, 0.5) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(conditional_copula(0.3, 0.7, 0.5) - 0.38129121266766156776) < 1e-12);
  CHECK(std::abs(conditional_copula(0.9, 0.4, 0.85) - 0.99962974303050911695) < 1e-12);
  CHECK_THROWS_AS(conditional_copula(0.5, 0.0, 0.3), ValidationError);
  const ConditionalCopula g(0.3, 0.5);
  CHECK(g(0.7, norm_quantile(0.7)) == doctest::Approx(conditional_copula(0.3, 0.7, 0.5)).epsilon(1e-14));
}

TEST_CASE("2-increasing on random rectangles") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(1e-6, 1 - 1e-6);
  std::uniform_real_distribution<double> rho(-0.99, 0.99);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u1 = unit(rng), u2 = unit(rng), v1 = unit(rng), v2 = unit(rng);
    if (u1 > u2) std::swap(u1, u2);
    if (v1 > v2) std::swap(v1, v2);
    const double t = rho(rng);
    const double vol = copula_cdf(u2, v2, t) - copula_cdf(u1, v2, t) - copula_cdf(u2, v1, t) + copula_cdf(u1, v1, t);
    worst = std::min(worst, vol);
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("Frechet bounds") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(1e-9, 1 - 1e-9);
  std::uniform_real_distribution<double> rho(-0.999, 0.999);
  for (int i = 0; i < 20000; ++i) {
    const double u = unit(rng), v = unit(rng), t = rho(rng);
    const double c = copula_cdf(u, v, t);
    REQUIRE(c >= std::max(u + v - 1.0, 0.0));
    REQUIRE(c <= std::min(u, v));
  }
}

TEST_CASE("conditional copula increases in u and reduces to u at zero") {
  for (double v : {0.3, 0.81, 1.0}) {
    for (double t : {-0.9, -0.3, 0.45, 0.9}) {
      double prev = -1.0;
      for (int i = 1; i <= 99; ++i) {
        const double g = conditional_copula(i / 100.0, v, t);
        CHECK(g > prev);
        CHECK(g > 0.0);
        CHECK(g < 1.0);
        prev = g;
      }
    }
    for (int i = 1; i <= 99; ++i) {
      const double u = i / 100.0;
      CHECK(std::abs(conditional_copula(u, v, 0.0) - u) <= 1e-12);
      CHECK(std::abs(copula_cdf(u, v, 0.0) - u * v) <= 1e-12);
    }
  }
}
