#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qtp/error.hpp"
#include "qtp/geometry.hpp"
#include "qtp/quadrature.hpp"

using namespace qtp;
using std::numbers::pi;

TEST_CASE("minkowski dot follows the mostly-minus signature") {
  CHECK(minkowski_dot({1, 0, 0, 0}, {1, 0, 0, 0}) == 1.0);
  CHECK(minkowski_dot({0, 1, 0, 0}, {0, 1, 0, 0}) == -1.0);
  CHECK(minkowski_dot({1, 1, 0, 0}, {1, 1, 0, 0}) == 0.0);
  CHECK_THROWS_AS(minkowski_dot(FourVector(1.0, 0.0), FourVector(1.0, 0.0, 0.0, 0.0)), InvalidInput);
}

TEST_CASE("minkowski dot is symmetric and bilinear") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int n = 0; n < 200; ++n) {
    FourVector a(u(rng), u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng), u(rng));
    const double s = u(rng);
    CHECK(minkowski_dot(a, b) == doctest::Approx(minkowski_dot(b, a)).epsilon(1e-14));
    CHECK(minkowski_dot(a + s * b, c) ==
          doctest::Approx(minkowski_dot(a, c) + s * minkowski_dot(b, c)).epsilon(1e-12));
  }
}

TEST_CASE("worldline velocity must be unit timelike") {
  CHECK_NOTHROW(Worldline::at_rest(FourVector(0.0, 1.0)));
  CHECK_THROWS_AS(Worldline(FourVector(0.0, 0.0), FourVector(1.0, 0.5)), InvalidInput);
  const double v = 0.6, g = 1.0 / std::sqrt(1 - v * v);
  Worldline w(FourVector(0.0, 0.0), FourVector(g, g * v));
  CHECK(w.at(2.0)[1] == doctest::Approx(2.0 * g * v));
}

TEST_CASE("sampling function values") {
  SamplingFunction f(2.0, 3.0, FourVector(1.0, 1.0, 0.0, 0.0));
  CHECK(sampling_value(f, f.center) == 1.0);
  CHECK(sampling_value(f, FourVector(3.0, 1.0, 0.0, 0.0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK_THROWS_AS(SamplingFunction(0.0, 1.0, FourVector(2)), InvalidInput);
  CHECK_THROWS_AS(SamplingFunction(1.0, -1.0, FourVector(2)), InvalidInput);
}

TEST_CASE("spacetime volume") {
  CHECK(spacetime_volume(SamplingFunction(1, 1, FourVector(4))) == doctest::Approx(pi * pi));
  CHECK(spacetime_volume(SamplingFunction(2, 1, FourVector(4))) == doctest::Approx(2 * pi * pi));
  const SamplingFunction f2(1, 1, FourVector(2));
  CHECK(spacetime_volume(f2) == doctest::Approx(pi));
  // integral of f^2 in closed form: sqrt(pi) dt * sqrt(pi) dx
  CHECK(spacetime_volume(SamplingFunction(1.7, 0.4, FourVector(2))) ==
        doctest::Approx(std::sqrt(pi) * 1.7 * std::sqrt(pi) * 0.4).epsilon(1e-14));
}

TEST_CASE("smearing density peak and normalization") {
  const SamplingFunction f(1, 1, FourVector(4));
  CHECK(smearing_density(f, f.center) == doctest::Approx(1.0 / (pi * pi)));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(0.3, 3.0);
  for (int n = 0; n < 5; ++n) {
    const SamplingFunction g(w(rng), w(rng), FourVector(0.5, -0.2));
    IntegrationRequest req;
    req.integrand = [&](std::span<const double> y) { return cplx(smearing_density(g, FourVector(y[0], y[1]))); };
    req.lower = {0.5 - 8 * g.delta_t, -0.2 - 8 * g.delta_x};
    req.upper = {0.5 + 8 * g.delta_t, -0.2 + 8 * g.delta_x};
    CHECK(std::abs(integrate(req).value.real() - 1.0) < 1e-8);
  }
  const SamplingFunction g4(1.3, 0.7, FourVector(4));
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> y) {
    return cplx(smearing_density(g4, FourVector(y[0], y[1], y[2], y[3])));
  };
  req.lower = {-7 * 1.3, -7 * 0.7, -7 * 0.7, -7 * 0.7};
  req.upper = {7 * 1.3, 7 * 0.7, 7 * 0.7, 7 * 0.7};
  req.rel_tol = 1e-10;
  req.max_subdivisions = 200000;
  CHECK(std::abs(integrate(req).value.real() - 1.0) < 1e-8);
}

TEST_CASE("smearing density is nonnegative") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20, 20);
  const SamplingFunction f(0.5, 2.0, FourVector(4));
  for (int n = 0; n < 1000; ++n) CHECK(smearing_density(f, FourVector(u(rng), u(rng), u(rng), u(rng))) >= 0.0);
}

TEST_CASE("Gaussian factorization identity") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-4, 4);
  const SamplingFunction f(1.3, 0.8, FourVector(4));
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    FourVector a(u(rng), u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng), u(rng));
    const double lhs = sampling_value(f, a) * sampling_value(f, b);
    const FourVector mid = 0.5 * (a + b);
    const double fm = sampling_value(f, mid);
    const double rhs = fm * fm * sqrt_sampling_value(f, a - b);
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
  }
  CHECK(worst < 1e-12);
}
