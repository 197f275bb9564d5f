#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qtp/error.hpp"
#include "qtp/quadrature.hpp"

using namespace qtp;
using std::numbers::pi;

TEST_CASE("2D Gaussian over five widths") {
  const double s = 0.7;
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> x) {
    return cplx(std::exp(-(x[0] * x[0] + x[1] * x[1]) / (2 * s * s)) / (2 * pi * s * s));
  };
  req.lower = {-5 * s, -5 * s};
  req.upper = {5 * s, 5 * s};
  const auto r = integrate(req);
  const double exact = std::pow(std::erf(5.0 / std::numbers::sqrt2), 2);
  CHECK(r.converged);
  CHECK(std::abs(r.value.real() - exact) < 1e-10);
}

TEST_CASE("orthogonality of a full period") {
  IntegrationRequest req;
  req.integrand = [](std::span<const double> t) { return std::polar(1.0, 7 * t[0]); };
  req.lower = {0.0};
  req.upper = {2 * pi};
  req.oscillation_hint = 7;
  CHECK(std::abs(integrate(req).value) < 1e-10);
}

TEST_CASE("oscillatory Gaussian") {
  const double w = 10;
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> t) { return std::polar(std::exp(-t[0] * t[0] / 2), w * t[0]); };
  req.lower = {-12.0};
  req.upper = {12.0};
  req.oscillation_hint = w;
  const auto r = integrate(req);
  CHECK(std::abs(r.value - std::sqrt(2 * pi) * std::exp(-w * w / 2)) < 1e-8);
}

TEST_CASE("malformed requests are rejected") {
  IntegrationRequest req;
  req.integrand = [](std::span<const double>) { return cplx(1.0); };
  req.lower = {0.0};
  req.upper = {1.0, 2.0};
  CHECK_THROWS_AS(integrate(req), InvalidInput);
  req.upper = {1.0};
  req.rel_tol = -1;
  CHECK_THROWS_AS(integrate(req), InvalidInput);
}

TEST_CASE("budget exhaustion is flagged") {
  IntegrationRequest req;
  req.integrand = [](std::span<const double> t) { return cplx(1.0 / std::sqrt(std::abs(t[0]) + 1e-14)); };
  req.lower = {-1.0};
  req.upper = {1.0};
  req.max_subdivisions = 5;
  req.rel_tol = 1e-14;
  const auto r = integrate(req);
  CHECK_FALSE(r.converged);
}

TEST_CASE("error estimates bound the observed error on random smooth integrands") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2, 2.0), c(-1, 1);
  int honest = 0, total = 0;
  for (int n = 0; n < 60; ++n) {
    const int d = 1 + n % 3;
    std::vector<double> a(d), mu(d);
    for (int k = 0; k < d; ++k) {
      a[k] = u(rng);
      mu[k] = c(rng);
    }
    IntegrationRequest req;
    req.integrand = [&](std::span<const double> x) {
      double e = 0;
      for (int k = 0; k < d; ++k) e += a[k] * (x[k] - mu[k]) * (x[k] - mu[k]);
      return cplx(std::exp(-e));
    };
    req.lower.assign(d, -3.0);
    req.upper.assign(d, 3.0);
    req.rel_tol = 1e-7;
    double exact = 1.0;
    for (int k = 0; k < d; ++k) {
      const double s = std::sqrt(a[k]);
      exact *= std::sqrt(pi) / (2 * s) * (std::erf(s * (3 - mu[k])) + std::erf(s * (3 + mu[k])));
    }
    const auto r = integrate(req);
    ++total;
    if (std::abs(r.value.real() - exact) <= r.error_estimate) ++honest;
  }
  CHECK(honest >= 0.95 * total);
}

TEST_CASE("composite rules converge at their nominal order") {
  auto f = [](double x) { return cplx(std::exp(std::sin(x))); };
  auto order = [&](auto rule, std::size_t n) {
    // reference from a fine Simpson rule
    const cplx ref = composite_simpson(f, 0.0, 1.5, 1 << 14);
    const double e1 = std::abs(rule(f, 0.0, 1.5, n) - ref);
    const double e2 = std::abs(rule(f, 0.0, 1.5, 2 * n) - ref);
    return std::log2(e1 / e2);
  };
  CHECK(std::abs(order(composite_trapezoid, 32) - 2.0) < 0.4);
  CHECK(std::abs(order(composite_simpson, 16) - 4.0) < 0.8);
}

namespace {

ComplexGrid random_grid(std::mt19937_64& rng, std::vector<Axis> axes) {
  std::normal_distribution<double> g;
  ComplexGrid out(std::move(axes));
  for (auto& v : out.values) v = cplx(g(rng), g(rng));
  return out;
}

double max_rel(const ComplexGrid& a, const ComplexGrid& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a.values[i] - b.values[i]));
    den = std::max(den, std::abs(b.values[i]));
  }
  return num / den;
}

}  // namespace

TEST_CASE("FFT convolution matches the direct sum on random grids") {
  std::mt19937_64 rng(9);
  for (std::size_t rank : {1u, 2u, 4u}) {
    std::vector<Axis> ax(rank, Axis{0.0, 0.5, rank == 4 ? 16u : 32u});
    std::vector<Axis> kx(rank, Axis{-2.0, 0.5, 9});
    auto a = random_grid(rng, ax);
    auto k = random_grid(rng, kx);
    const auto fast = fft_convolve(a, k);
    const auto slow = direct_convolve(a, k);
    CHECK(max_rel(fast, slow) < 1e-10);
  }
}

TEST_CASE("convolution with a discrete delta is the identity") {
  std::mt19937_64 rng(1);
  auto a = random_grid(rng, {Axis{0, 1.0, 16}, Axis{0, 1.0, 16}});
  ComplexGrid k({Axis{-1, 1.0, 3}, Axis{-1, 1.0, 3}});
  k.values[4] = 1.0;
  const auto c = fft_convolve(a, k);
  CHECK(max_rel(c, a) < 1e-13);
}

TEST_CASE("Gaussian convolved with Gaussian") {
  const double s1 = 0.8, s2 = 0.6, h = 0.05;
  const std::size_t n = 512;
  RealGrid a({Axis{-12.8, h, n}});
  RealGrid k({Axis{-6.4, h, 257}});
  auto gauss = [](double x, double s) { return std::exp(-x * x / (2 * s * s)) / (std::sqrt(2 * pi) * s); };
  for (std::size_t i = 0; i < n; ++i) a.values[i] = gauss(a.axes[0].at(i), s1);
  for (std::size_t i = 0; i < 257; ++i) k.values[i] = gauss(k.axes[0].at(i), s2);
  const auto c = fft_convolve(a, k, 2.0);
  const double s = std::hypot(s1, s2);
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(c.values[i] - gauss(a.axes[0].at(i), s)));
  CHECK(worst < 1e-8);
}

TEST_CASE("insufficient padding is detected") {
  RealGrid a({Axis{0, 1.0, 8}});
  RealGrid k({Axis{-16, 1.0, 33}});
  for (auto& v : a.values) v = 1.0;
  for (auto& v : k.values) v = 1.0;
  CHECK_THROWS_AS(fft_convolve(a, k, 2.0), NumericalError);
}

TEST_CASE("Wigner transform of Gaussians") {
  const std::size_t n = 64;
  const double h = 0.25;
  ComplexGrid g({Axis{-h * n / 2, h, n}, Axis{-h * n / 2, h, n}});
  const double k0 = 1.5, k1 = -0.75;
  for (std::size_t f = 0; f < g.size(); ++f) {
    const auto idx = g.unravel(f);
    const double y0 = g.axes[0].at(idx[0]), y1 = g.axes[1].at(idx[1]);
    // modulation by exp(-i k.y) shifts the transform to xi = k
    g.values[f] = std::exp(-(y0 * y0 + y1 * y1) / 2) * std::polar(1.0, -(k0 * y0 - k1 * y1));
  }
  const auto w = wigner_transform(g);
  double worst = 0;
  for (std::size_t f = 0; f < w.size(); ++f) {
    const auto idx = w.unravel(f);
    const double x0 = w.axes[0].at(idx[0]) - k0, x1 = w.axes[1].at(idx[1]) - k1;
    worst = std::max(worst, std::abs(w.values[f] - 2 * pi * std::exp(-(x0 * x0 + x1 * x1) / 2)));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("Hermitian input gives a real transform, and FFT matches the direct sum") {
  std::mt19937_64 rng(4);
  const std::size_t n = 16;
  const double h = 0.5;
  ComplexGrid g({Axis{-h * n / 2, h, n}, Axis{-h * n / 2, h, n}});
  std::normal_distribution<double> nd;
  for (std::size_t f = 0; f < g.size(); ++f) {
    const auto idx = g.unravel(f);
    const double y0 = g.axes[0].at(idx[0]), y1 = g.axes[1].at(idx[1]);
    g.values[f] = std::exp(-2 * (y0 * y0 + y1 * y1)) * cplx(1.0 + 0.1 * y0 * y0, 0.3 * y1 - 0.2 * y0);
  }
  const auto w = wigner_transform(g);
  double imag = 0;
  for (const auto& v : w.values) imag = std::max(imag, std::abs(v.imag()));
  CHECK(imag < 1e-10);

  auto r = random_grid(rng, g.axes);
  for (std::size_t f = 0; f < r.size(); ++f) {
    const auto idx = r.unravel(f);
    if (idx[0] == 0 || idx[1] == 0 || idx[0] == n - 1 || idx[1] == n - 1) r.values[f] = 0.0;
  }
  CHECK(max_rel(wigner_transform(r), direct_wigner_transform(r)) < 1e-10);
}

TEST_CASE("Wigner transform rejects functions that do not decay") {
  ComplexGrid g({Axis{-4, 0.5, 16}});
  for (auto& v : g.values) v = 1.0;
  CHECK_THROWS_AS(wigner_transform(g), NumericalError);
}
