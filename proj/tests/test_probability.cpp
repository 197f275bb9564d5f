#include <cmath>
#include <numbers>

#include "doctest.h"
#include "qtp/error.hpp"
#include "qtp/fock.hpp"
#include "qtp/probability.hpp"

using namespace qtp;

namespace {

DetectorModel detector(double gap, double se = 0.6, double sp = 0.8) {
  DetectorModel d;
  d.dim = 2;
  d.gap = gap;
  d.sigma_e = se;
  d.sigma_p = sp;
  d.coupling = 0.1;
  d.sampling = SamplingFunction(4.0, 4.0, FourVector(2));
  return d;
}

LatticeModel oracle_lattice(int cutoff = 3) {
  LatticeModel lat;
  lat.mode_numbers = {2, 3, 4, 5};
  lat.cutoff = cutoff;
  lat.mass = 1.0;
  lat.box_length = 20.0;
  return lat;
}

Window line(double t, double x0, double x1, std::size_t n) {
  Window w;
  w.lower = FourVector(t, x0);
  w.upper = FourVector(t, x1);
  w.points = {1, n};
  return w;
}

}  // namespace

TEST_CASE("window geometry") {
  Window w;
  w.lower = FourVector(-1.0, 0.0);
  w.upper = FourVector(1.0, 3.0);
  w.points = {5, 4};
  w.validate();
  CHECK(w.size() == 20);
  CHECK(w.cell_volume() == doctest::Approx(0.5));
  CHECK(w.point(7) == FourVector(-0.5, 3.0));
  CHECK(line(2.0, -1.0, 1.0, 3).cell_volume() == doctest::Approx(1.0));
  w.points = {0, 4};
  CHECK_THROWS_AS(w.validate(), InvalidInput);
  w.points = {5};
  CHECK_THROWS_AS(w.validate(), InvalidInput);
}

TEST_CASE("spectral, Wigner and direct routes agree") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {0.8}, 0.3, 96);
  const FieldState st = FieldState::particles({psi});
  const DetectorModel d = detector(std::sqrt(1.64));
  const FourVector x(2.0, 1.0);
  DensityOptions o;
  const double p = single_density(spec, d, st, x, 0, o);
  const double pe = exact_sampled_density(spec, d, st, x, 0, o);
  for (auto r : {DensityRoute::Wigner, DensityRoute::Direct}) {
    o.route = r;
    CHECK(single_density(spec, d, st, x, 0, o) == doctest::Approx(p).epsilon(1e-6));
    CHECK(exact_sampled_density(spec, d, st, x, 0, o) == doctest::Approx(pe).epsilon(1e-6));
  }
  o.route = DensityRoute::Wigner;
  CHECK_THROWS_AS(smeared_density(spec, d, st, x, 0, o), InvalidInput);
}

TEST_CASE("sampled probability matches the Fock-space detector") {
  const LatticeModel lat = oracle_lattice();
  const FieldSpec spec = lat.field();
  const DetectorModel d = detector(1.4, 0.3, 1.0);
  const auto psi = WavePacket::on_lattice(spec, {0.5, 0.6, 0.5, 0.37});
  const auto weak = WavePacket::on_lattice(spec, {0.02, cplx(0.03, 0.01), 0.025, -0.01});
  for (auto x : {FourVector(0.0, 0.0), FourVector(3.0, -2.0)}) {
    const double one = sampled_probability(spec, d, FieldState::particles({psi}), x);
    CHECK(one == doctest::Approx(oracle_detection_probability(lat, d, FieldState::particles({psi}), x)).epsilon(1e-8));
    const double vac = sampled_probability(spec, d, FieldState::vacuum(), x);
    CHECK(std::abs(vac - oracle_detection_probability(lat, d, FieldState::vacuum(), x)) < 1e-10 * one);
    const double coh = sampled_probability(spec, d, FieldState::coherent(weak), x);
    CHECK(coh == doctest::Approx(oracle_detection_probability(oracle_lattice(4), d, FieldState::coherent(weak), x))
                     .epsilon(1e-7));
  }
}

TEST_CASE("vacuum detections are suppressed for a resonant detector") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {0.8}, 0.2, 96);
  const DetectorModel d = detector(std::sqrt(1.64), 0.3, 0.8);
  Window w;
  w.lower = FourVector(-4.0, -4.0);
  w.upper = FourVector(4.0, 4.0);
  w.points = {9, 9};
  const double one = density_grid(spec, d, FieldState::particles({psi}), w).total();
  const double vac = density_grid(spec, d, FieldState::vacuum(), w).total();
  CHECK(one > 0.0);
  CHECK(std::abs(vac) <= 1e-6 * one);
}

TEST_CASE("densities scale with the coupling") {
  const FieldSpec spec(2, 1.0);
  const FieldState st = FieldState::particles({WavePacket::gaussian(spec, {0.5}, 0.3, 64)});
  DetectorModel a = detector(1.2), b = detector(1.1);
  const DetectionEvent ev[2] = {{FourVector(0.0, 0.0), 0}, {FourVector(1.0, 2.0), 0}};
  const DetectorModel base[2] = {a, b};
  const double p1 = single_density(spec, a, st, ev[0].x);
  const double p2 = joint_density(spec, base, st, ev);
  for (double c : {0.5, 3.0}) {
    a.coupling = 0.1 * c;
    b.coupling = 0.1 * c;
    const DetectorModel scaled[2] = {a, b};
    CHECK(single_density(spec, a, st, ev[0].x) / p1 == doctest::Approx(c * c).epsilon(1e-10));
    CHECK(joint_density(spec, scaled, st, ev) / p2 == doctest::Approx(std::pow(c, 4)).epsilon(1e-10));
  }
}

TEST_CASE("joint density is symmetric under relabeling") {
  const FieldSpec spec(2, 1.0);
  const auto a = WavePacket::gaussian(spec, {0.6}, 0.3, 48);
  const auto b = WavePacket::gaussian(spec, {-0.4}, 0.25, 48);
  const DetectorModel d1 = detector(1.2, 0.5, 0.7), d2 = detector(1.5, 0.4, 0.9);
  for (const FieldState& st : {FieldState::particles({a, b}), FieldState::coherent(a.scaled(0.7))}) {
    for (double dt : {2.0, 0.5, -1.5}) {
      const DetectionEvent e1{FourVector(0.0, 0.5), 0}, e2{FourVector(dt, -1.0), 0};
      const DetectorModel fwd[2] = {d1, d2}, rev[2] = {d2, d1};
      const DetectionEvent ef[2] = {e1, e2}, er[2] = {e2, e1};
      const double p = joint_density(spec, fwd, st, ef);
      CHECK(p > 0.0);
      CHECK(joint_density(spec, rev, st, er) == doctest::Approx(p).epsilon(1e-11));
    }
  }
}

TEST_CASE("distant detections of separated particles factorize") {
  const FieldSpec spec(2, 1.0);
  const auto right = WavePacket::gaussian(spec, {1.0}, 0.3, 64);
  const auto left = WavePacket::gaussian(spec, {-1.0}, 0.3, 64);
  const FieldState st = FieldState::particles({right, left});
  const DetectorModel d = detector(std::sqrt(2.0), 0.5, 1.0);
  const double t = 8.0, x = t / std::sqrt(2.0);
  const DetectorModel both[2] = {d, d};
  double peak = 0.0, worst = 0.0;
  for (double s1 : {-1.0, 0.0, 1.0})
    for (double s2 : {-1.0, 0.0, 1.0}) {
      const DetectionEvent ev[2] = {{FourVector(t, x + s1), 0}, {FourVector(t + 0.5, -x - 0.5 * s2), 0}};
      const double prod = single_density(spec, d, st, ev[0].x) * single_density(spec, d, st, ev[1].x);
      peak = std::max(peak, prod);
      worst = std::max(worst, std::abs(joint_density(spec, both, st, ev) - prod));
    }
  CHECK(worst <= 0.02 * peak);
}

TEST_CASE("density peak follows the classical trajectory") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {0.8}, 0.15, 96);
  DetectorModel d = detector(std::sqrt(1.64), 0.6, 0.8);
  d.pointer.bin_edges = {0.3, 1.3};
  const double v = 0.8 / std::sqrt(1.64);
  for (double t : {0.0, 6.0, 12.0}) {
    const ProbabilityGrid g = density_grid(spec, d, FieldState::particles({psi}), line(t, v * t - 2.0, v * t + 2.0, 81));
    const auto it = std::max_element(g.values.begin(), g.values.end());
    const double xpeak = g.windows[0].point(static_cast<std::size_t>(it - g.values.begin()))[1];
    double best = 0.0, xu = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const FourVector y = g.windows[0].point(i);
      if (std::norm(mode_function(psi, y)) > best) {
        best = std::norm(mode_function(psi, y));
        xu = y[1];
      }
    }
    // within a tenth of the packet width of the trajectory and of the |u|^2 maximum
    CHECK(std::abs(xpeak - v * t) <= 0.1 / (2 * 0.15));
    CHECK(std::abs(xpeak - xu) <= 0.1);
  }
}

TEST_CASE("sampling-independent density needs separated scales") {
  const FieldSpec spec(2, 1.0);
  const FieldState st = FieldState::particles({WavePacket::gaussian(spec, {0.8}, 0.3, 96)});
  DetectorModel d = detector(std::sqrt(1.64), 0.6, 0.8);
  const FourVector x(2.0, 1.0);
  const double p = single_density(spec, d, st, x);
  d.sampling = SamplingFunction(10.0 / d.sigma_e, 10.0 / d.sigma_p, FourVector(2));
  REQUIRE(scale_separation_check(d).ok);
  CHECK(std::abs(exact_sampled_density(spec, d, st, x) - p) <= 0.01 * p);
  d.sampling = SamplingFunction(1.0 / d.sigma_e, 1.0 / d.sigma_p, FourVector(2));
  CHECK_FALSE(scale_separation_check(d).ok);
  CHECK(std::abs(exact_sampled_density(spec, d, st, x) - p) > 0.05 * p);
}

TEST_CASE("FFT smearing matches the closed-form smeared density") {
  const FieldSpec spec(2, 1.0);
  const FieldState st = FieldState::particles({WavePacket::gaussian(spec, {0.3}, 0.3, 64)});
  DetectorModel d = detector(std::sqrt(1.09), 0.6, 0.8);
  d.sampling = SamplingFunction(1.0, 1.0, FourVector(2));
  Window w;
  w.lower = FourVector(-6.0, -6.0);
  w.upper = FourVector(6.0, 6.0);
  w.points = {81, 81};
  DensityOptions o;
  o.threads = 4;
  const ProbabilityGrid g = density_grid(spec, d, st, w, o);
  const RealGrid sm = smeared_grid(g, d.sampling);
  for (std::size_t i : {40u * 81u + 40u, 38u * 81u + 42u, 42u * 81u + 37u}) {
    const FourVector x = w.point(i);
    CHECK(sm.values[i] == doctest::Approx(smeared_density(spec, d, st, x)).epsilon(1e-6));
  }
  Window coarse = w;
  coarse.points = {15, 15};
  CHECK_THROWS_AS(smeared_grid(density_grid(spec, d, st, coarse), d.sampling), InvalidInput);
}

TEST_CASE("detection summary and conditioning") {
  const FieldSpec spec(2, 1.0);
  const FieldState st = FieldState::particles({WavePacket::gaussian(spec, {0.5}, 0.3, 48)});
  DetectorModel d = detector(std::sqrt(1.25));
  const Window w = line(0.0, -4.0, 4.0, 17);
  const ProbabilityGrid g = density_grid(spec, d, st, w);
  const auto s = detection_summary(g);
  CHECK(s.p_det > 0.0);
  CHECK(s.p_det + s.p_empty == doctest::Approx(1.0));
  const ProbabilityGrid c = conditioned(g);
  CHECK(c.total() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(conditioned(c).values == c.values);
  CHECK(g.negative_mass() == 0.0);
  CHECK_THROWS_AS(conditioned(density_grid(spec, detector(1.4, 0.2), FieldState::vacuum(), w)), NumericalError);
  d.coupling = 100.0;
  CHECK_THROWS_AS(detection_summary(density_grid(spec, d, st, w)), NumericalError);
}

TEST_CASE("hierarchy with empty outcomes is normalized") {
  const FieldSpec spec(2, 1.0);
  const FieldState st = FieldState::particles(
      {WavePacket::gaussian(spec, {0.5}, 0.3, 48), WavePacket::gaussian(spec, {-0.3}, 0.3, 48)});
  const DetectorModel d1 = detector(std::sqrt(1.25)), d2 = detector(1.3, 0.5, 1.0);
  const Window w1 = line(0.0, -3.0, 3.0, 7), w2 = line(4.0, -1.0, 5.0, 7);
  const DetectorModel dets[2] = {d1, d2};
  const Window ws[2] = {w1, w2};
  const Hierarchy h = build_hierarchy({density_grid(spec, d1, st, w1), density_grid(spec, d2, st, w2)},
                                      joint_grid(spec, dets, st, ws));
  double total = h.none + h.level2->total();
  for (double v : h.first_only) total += v * w1.cell_volume();
  for (double v : h.second_only) total += v * w2.cell_volume();
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h.min_subtraction >= 0.0);
  const Hierarchy c = conditioned(h);
  CHECK(c.level1[1].total() == doctest::Approx(1.0));
  CHECK(c.level2->total() == doctest::Approx(1.0));
  CHECK(conditioned(c).level2->values == c.level2->values);
}

TEST_CASE("generating functional reproduces the position-space correlators") {
  LatticeModel lat;
  lat.mode_numbers = {-1, 0, 1, 2};
  lat.cutoff = 3;
  lat.mass = 1.0;
  lat.box_length = 6.0;
  const FieldSpec spec = lat.field();
  const DetectorModel d = detector(1.4, 2.0, 1.0);
  Window w;
  w.lower = FourVector(0.0, 0.3);
  w.upper = FourVector(12.0, 0.3);
  w.points = {2, 1};
  const FieldState st = FieldState::vacuum();
  const DetectorModel both[2] = {d, d};
  const Window ws[2] = {w, w};
  const Hierarchy h = build_hierarchy({density_grid(spec, d, st, w), density_grid(spec, d, st, w)},
                                      joint_grid(spec, both, st, ws));
  const double j[2] = {0.7, -1.3};
  PositionQuadrature pq;
  pq.time_points = 32;
  pq.space_points = 28;
  for (int order : {1, 2}) {
    const double z = generating_functional(h, j, order);
    CHECK(ctp_functional(spec, d, st, w, j, order, pq) - 1.0 == doctest::Approx(z - 1.0).epsilon(1e-8));
  }
  const double eps = 1e-3, e0[2] = {eps, 0.0};
  CHECK((generating_functional(h, e0, 2) - 1.0) / eps == doctest::Approx(h.level1[0].values[0] * w.cell_volume()));
  CHECK_THROWS_AS(generating_functional(h, e0, 3), InvalidInput);
}
