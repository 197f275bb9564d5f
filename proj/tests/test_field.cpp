#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qtp/error.hpp"
#include "qtp/field.hpp"
#include "qtp/quadrature.hpp"

using namespace qtp;
using std::numbers::pi;

TEST_CASE("dispersion relation") {
  const double k2[] = {2.0};
  CHECK(omega(FieldSpec(4, 0.0), std::vector<double>{2.0, 0.0, 0.0}) == 2.0);
  CHECK(omega(FieldSpec(4, 3.0), std::vector<double>{4.0, 0.0, 0.0}) == 5.0);
  CHECK(omega(FieldSpec(2, 1.0), std::vector<double>{0.0}) == 1.0);
  CHECK(omega(FieldSpec(2, 1.0), k2) == doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(FieldSpec(2, 0.0), InvalidInput);
  CHECK_THROWS_AS(FieldSpec(3, 1.0), InvalidInput);
}

TEST_CASE("Gaussian packets are normalized against the invariant measure") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {0.7}, 0.15);
  CHECK(std::abs(psi.norm() - 1.0) < 1e-12);
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> k) {
    const double w = std::sqrt(k[0] * k[0] + 1.0);
    return cplx(std::norm(psi.value(k)) / (4 * pi * w));
  };
  req.lower = {0.7 - 12 * 0.15};
  req.upper = {0.7 + 12 * 0.15};
  CHECK(std::abs(integrate(req).value.real() - 1.0) < 1e-8);

  const FieldSpec spec4(4, 0.5);
  const auto p4 = WavePacket::gaussian(spec4, {0.4, 0.0, -0.3}, 0.3, 40, 7.0);
  IntegrationRequest r4;
  r4.integrand = [&](std::span<const double> k) {
    const double w = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + 0.25);
    return cplx(std::norm(p4.value(k)) / (std::pow(2 * pi, 3) * 2 * w));
  };
  r4.lower = {0.4 - 8 * 0.3, -8 * 0.3, -0.3 - 8 * 0.3};
  r4.upper = {0.4 + 8 * 0.3, 8 * 0.3, -0.3 + 8 * 0.3};
  r4.rel_tol = 1e-10;
  r4.max_subdivisions = 100000;
  CHECK(std::abs(integrate(r4).value.real() - 1.0) < 1e-8);
}

TEST_CASE("mode function of a narrow packet at the origin") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {1.0}, 0.02);
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> k) {
    return psi.value(k) / (4 * pi * std::sqrt(k[0] * k[0] + 1.0));
  };
  req.lower = {1.0 - 12 * 0.02};
  req.upper = {1.0 + 12 * 0.02};
  const cplx u0 = mode_function(psi, FourVector(0.0, 0.0));
  CHECK(std::abs(u0 - integrate(req).value) < 1e-9 * std::abs(u0));
}

TEST_CASE("mode function peak moves at the group velocity") {
  const FieldSpec spec(2, 1.0);
  const double k0 = 1.0, T = 20.0, h = 0.1;
  const auto psi = WavePacket::gaussian(spec, {k0}, 0.05);
  auto argmax = [&](double t) {
    double best = -1, where = 0;
    for (double x = -10; x <= 30; x += h) {
      const double v = std::norm(mode_function(psi, FourVector(t, x)));
      if (v > best) {
        best = v;
        where = x;
      }
    }
    return where;
  };
  const double shift = argmax(T) - argmax(0.0);
  CHECK(std::abs(shift - k0 / std::sqrt(2.0) * T) <= h + 1e-9);
}

TEST_CASE("conjugate mode function") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {0.3}, 0.2).scaled(cplx(0.6, 0.8));
  const FourVector x(1.3, -0.4);
  CHECK(std::abs(std::conj(mode_function(psi, x)) - mode_function(psi.conjugated(), -x)) < 1e-13);
  const std::vector<double> k{0.45};
  CHECK(std::abs(std::conj(psi.value(k)) - psi.conjugated().value(k)) < 1e-15);
}

TEST_CASE("mode functions solve the Klein-Gordon equation to second order") {
  const FieldSpec spec(2, 1.3);
  const auto psi = WavePacket::gaussian(spec, {0.5}, 0.3);
  const FourVector x(0.7, 0.2);
  auto residual = [&](double h) {
    auto u = [&](double dt, double dx) { return mode_function(psi, FourVector(x.t() + dt, x[1] + dx)); };
    const cplx utt = (u(h, 0) - 2.0 * u(0, 0) + u(-h, 0)) / (h * h);
    const cplx uxx = (u(0, h) - 2.0 * u(0, 0) + u(0, -h)) / (h * h);
    return std::abs(utt - uxx + 1.3 * 1.3 * u(0, 0));
  };
  const double r1 = residual(0.1), r2 = residual(0.05), r3 = residual(0.025);
  CHECK(std::log2(r1 / r2) >= 1.8);
  CHECK(std::log2(r2 / r3) >= 1.8);
}

namespace {

// Regulated radial mode integrals: the i-epsilon limit of integral dmu exp(-ik.x) exp(-eps omega).
double massless4_equal_time(double r, double eps) {
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> k) { return cplx(std::sin(k[0] * r) * std::exp(-eps * k[0])); };
  req.lower = {0.0};
  req.upper = {40.0 / eps};
  req.oscillation_hint = r;
  req.max_subdivisions = 400000;
  return integrate(req).value.real() / (4 * pi * pi * r);
}

cplx massive2(double m, double dt, double r, double eps) {
  // k = m sinh(eta): dmu = d eta / (4 pi)
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> e) {
    const double w = m * std::cosh(e[0]), k = m * std::sinh(e[0]);
    return std::polar(std::exp(-eps * w), -(w * dt - k * r));
  };
  req.lower = {-14.0};
  req.upper = {14.0};
  req.rel_tol = 1e-11;
  req.max_subdivisions = 400000;
  return integrate(req).value / (4 * pi);
}

}  // namespace

TEST_CASE("massless D = 4 Wightman function matches the regulated mode integral") {
  const FieldSpec spec(4, 0.0, 1e-8);
  const cplx g = wightman_vacuum(spec, FourVector(0, 0, 0, 0), FourVector(0, 1, 0, 0));
  CHECK(std::abs(g - 1.0 / (4 * pi * pi)) < 1e-10);
  const double e1 = std::abs(massless4_equal_time(1.0, 0.1) - g.real());
  const double e2 = std::abs(massless4_equal_time(1.0, 0.01) - g.real());
  CHECK(e2 < e1);
  CHECK(e2 < 2e-4 * g.real());
}

TEST_CASE("massive Wightman closed forms match regulated mode integrals") {
  const double m = 1.2;
  const FieldSpec spec(2, m);
  for (auto [dt, r] : {std::pair{0.0, 0.8}, std::pair{0.5, 1.5}, std::pair{1.7, 0.4}, std::pair{-2.1, 0.3}}) {
    const cplx closed = wightman_vacuum(spec, FourVector(dt, r), FourVector(0.0, 0.0));
    // linear extrapolation of the regulator to zero
    const cplx quad = 2.0 * massive2(m, dt, r, 1e-3) - massive2(m, dt, r, 2e-3);
    CHECK(std::abs(closed - quad) < 1e-5 * std::abs(closed));
  }
  const FieldSpec spec4(4, m);
  // spacelike, equal time: (1 / (4 pi^2 r)) integral k sin(kr) / omega
  const double r = 0.9;
  IntegrationRequest req;
  req.integrand = [&](std::span<const double> k) {
    const double w = std::sqrt(k[0] * k[0] + m * m);
    return cplx(k[0] * std::sin(k[0] * r) / w * std::exp(-1e-3 * w));
  };
  req.lower = {0.0};
  req.upper = {4e4};
  req.oscillation_hint = r;
  req.max_subdivisions = 400000;
  const double quad = integrate(req).value.real() / (4 * pi * pi * r);
  const double closed = wightman_vacuum(spec4, FourVector(0, r, 0, 0), FourVector(0, 0, 0, 0)).real();
  CHECK(std::abs(closed - quad) < 2e-3 * closed);
}

TEST_CASE("Wightman function is Hermitian") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3, 3);
  const FieldSpec specs[] = {FieldSpec(2, 0.7), FieldSpec(4, 0.0), FieldSpec(4, 1.1)};
  for (const auto& s : specs) {
    for (int n = 0; n < 100; ++n) {
      FourVector a(s.dim), b(s.dim);
      for (int i = 0; i < s.dim; ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
      }
      const cplx g1 = wightman_vacuum(s, a, b), g2 = wightman_vacuum(s, b, a);
      CHECK(std::abs(std::conj(g1) - g2) <= 1e-10 * std::max(1.0, std::abs(g1)));
    }
  }
}

TEST_CASE("imaginary part vanishes at spacelike separation as the regulator is removed") {
  double prev = 1.0;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const FieldSpec s(4, 0.0, eps);
    const double im = std::abs(wightman_vacuum(s, FourVector(0.5, 1, 0.3, 0), FourVector(0, 0, 0, 0)).imag());
    CHECK(im < prev);
    prev = im;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("singular configurations are rejected") {
  const FieldSpec s(2, 1.0);
  CHECK_THROWS_AS(wightman_vacuum(s, FourVector(1.0, 1.0), FourVector(1.0, 1.0)), InvalidInput);
  CHECK_THROWS_AS(wightman_vacuum(s, FourVector(1.0, 1.0), FourVector(0.0, 0.0)), NumericalError);
}

TEST_CASE("lattice Wightman function is the direct mode sum") {
  const std::vector<int> n{-1, 0, 1, 2};
  const double L = 8.0;
  const FieldSpec s = FieldSpec::on_lattice(make_lattice_spectrum(1.0, L, n), 1.0);
  const FourVector x(0.3, 1.1), y(-0.2, 0.4);
  cplx sum = 0;
  for (int j : n) {
    const double k = 2 * pi * j / L, w = std::sqrt(k * k + 1);
    sum += std::polar(1.0, -(w * 0.5 - k * 0.7)) / (2 * w * L);
  }
  CHECK(std::abs(wightman_vacuum(s, x, y) - sum) < 1e-14);
}

TEST_CASE("state two-point functions") {
  const FieldSpec spec(2, 1.0);
  const FourVector x(0.4, -0.3), y(1.1, 0.9);
  CHECK(state_two_point(FieldState::vacuum(), spec, x, y) == wightman_vacuum(spec, x, y));

  const auto psi = WavePacket::gaussian(spec, {0.5}, 0.2);
  const auto one = FieldState::particles({psi});
  const cplx expect = wightman_vacuum(spec, x, y) + std::conj(mode_function(psi, x)) * mode_function(psi, y) +
                      std::conj(mode_function(psi, y)) * mode_function(psi, x);
  CHECK(std::abs(state_two_point(one, spec, x, y) - expect) < 1e-13);

  for (double alpha : {0.1, 1.0, 3.0}) {
    const Coherent c{psi.scaled(alpha)};
    const auto coh = FieldState::coherent(c.profile);
    const cplx connected = state_two_point(coh, spec, x, y) - classical_field(c, x) * classical_field(c, y);
    CHECK(std::abs(connected - wightman_vacuum(spec, x, y)) < 1e-12);
  }

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  const auto psi2 = WavePacket::gaussian(spec, {-0.4}, 0.3);
  const FieldState states[] = {one, FieldState::particles({psi, psi2}), FieldState::coherent(psi.scaled(0.5)),
                               FieldState::particles({psi, psi, psi2})};
  for (const auto& st : states)
    for (int n = 0; n < 20; ++n) {
      const FourVector a(u(rng), u(rng)), b(u(rng), u(rng));
      CHECK(std::abs(std::conj(state_two_point(st, spec, a, b)) - state_two_point(st, spec, b, a)) < 1e-10);
    }
  CHECK_THROWS_AS(FieldState::particles({psi, psi, psi, psi, psi}), InvalidInput);
}

TEST_CASE("permanent") {
  const std::vector<cplx> m{1, 2, 3, 4};
  CHECK(permanent(m, 2) == cplx(10.0));
  const std::vector<cplx> id{1, 0, 0, 0, 1, 0, 0, 0, 1};
  CHECK(permanent(id, 3) == cplx(1.0));
  const std::vector<cplx> ones(9, 1.0);
  CHECK(permanent(ones, 3) == cplx(6.0));
}
