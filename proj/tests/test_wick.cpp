#include <cmath>
#include <random>

#include "doctest.h"
#include "qtp/error.hpp"
#include "qtp/fock.hpp"
#include "qtp/wick.hpp"

using namespace qtp;

namespace {

CorrelatorSpec vacuum_spec(std::size_t n) {
  CorrelatorSpec s;
  for (std::size_t i = 0; i < n; ++i) {
    s.forward_points.push_back(FourVector(0.3 * i, 0.7 * i + 0.1));
    s.backward_points.push_back(FourVector(-0.4 * i - 0.2, 0.5 * i));
  }
  return s;
}

FourVector random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double t = u(rng);
  return FourVector(t, u(rng));
}

LatticeModel small_lattice(int cutoff = 3) {
  LatticeModel lat;
  lat.mode_numbers = {-1, 0, 1, 2};
  lat.mass = 1.0;
  lat.cutoff = cutoff;
  lat.box_length = 6.0;
  return lat;
}

double rel_err(cplx a, cplx b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace

TEST_CASE("vacuum plan counts are odd double factorials") {
  CHECK(enumerate_plans(vacuum_spec(1)).plans.size() == 1);
  CHECK(enumerate_plans(vacuum_spec(2)).plans.size() == 3);
  CHECK(enumerate_plans(vacuum_spec(3)).plans.size() == 15);
  CHECK(enumerate_plans(vacuum_spec(4)).plans.size() == 105);
  CHECK(enumerate_plans(vacuum_spec(5)).plans.size() == 945);
  CHECK_THROWS_AS(enumerate_plans(vacuum_spec(6)), ResourceError);
  WickOptions wide;
  wide.max_pairs = 6;
  CHECK(enumerate_plans(vacuum_spec(6), wide).plans.size() == 10395);
}

TEST_CASE("odd slot counts and coincident points are rejected") {
  CorrelatorSpec s;
  s.forward_points = {FourVector(0.0, 0.0), FourVector(1.0, 0.0)};
  s.backward_points = {FourVector(0.5, 0.3)};
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s.allow_unbalanced = true;
  CHECK_THROWS_AS(enumerate_plans(s), InvalidInput);
  CorrelatorSpec c = vacuum_spec(1);
  c.backward_points[0] = c.forward_points[0];
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("single pair reduces to the backward-left Wightman function") {
  const FieldSpec spec(2, 1.0);
  CorrelatorSpec s;
  s.forward_points = {FourVector(0.2, -0.3)};
  s.backward_points = {FourVector(1.1, 0.4)};
  const cplx g = evaluate_correlator(spec, s);
  CHECK(rel_err(g, wightman_vacuum(spec, s.backward_points[0], s.forward_points[0])) < 1e-14);
}

TEST_CASE("branch propagators follow time ordering") {
  const FieldSpec spec(2, 1.0);
  const FieldInsertion early{FourVector(0.0, 0.0), Branch::Forward, 0};
  const FieldInsertion late{FourVector(2.0, 0.5), Branch::Forward, 1};
  const cplx ff = branch_propagator(spec, late, early);
  CHECK(rel_err(ff, wightman_vacuum(spec, late.point, early.point)) < 1e-14);
  CHECK(rel_err(branch_propagator(spec, early, late), ff) < 1e-14);

  const FieldInsertion early_b{early.point, Branch::Backward, 0};
  const FieldInsertion late_b{late.point, Branch::Backward, 1};
  CHECK(rel_err(branch_propagator(spec, early_b, late_b), std::conj(ff)) < 1e-14);

  const cplx mixed = branch_propagator(spec, late_b, early);
  CHECK(rel_err(mixed, wightman_vacuum(spec, late.point, early.point)) < 1e-14);
  CHECK(classify_pair(OperatorSlot(late_b), OperatorSlot(early)) == PropagatorTag::WightmanMinusPlus);
  CHECK(classify_pair(OperatorSlot(late), OperatorSlot(early)) == PropagatorTag::Feynman);
  CHECK(classify_pair(OperatorSlot(early_b), OperatorSlot(late_b)) == PropagatorTag::Dyson);
}

TEST_CASE("swapping the branches conjugates the correlator") {
  std::mt19937_64 rng(5);
  const FieldSpec spec(2, 0.8);
  const auto psi = WavePacket::gaussian(spec, {0.4}, 0.3, 64);
  const auto chi = WavePacket::gaussian(spec, {-0.6}, 0.25, 64);
  const FieldState states[] = {FieldState::vacuum(), FieldState::particles({psi}),
                               FieldState::particles({psi, chi}), FieldState::coherent(psi.scaled(0.7))};
  for (const auto& st : states) {
    for (int trial = 0; trial < 10; ++trial) {
      CorrelatorSpec s;
      s.state = st;
      const std::size_t n = 1 + trial % 2;
      for (std::size_t i = 0; i < n; ++i) {
        s.forward_points.push_back(random_point(rng));
        s.backward_points.push_back(random_point(rng));
      }
      CorrelatorSpec swapped = s;
      std::swap(swapped.forward_points, swapped.backward_points);
      const cplx a = evaluate_correlator(spec, s), b = evaluate_correlator(spec, swapped);
      CHECK(std::abs(a - std::conj(b)) <= 1e-10 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("one-particle two-point function matches the state decomposition") {
  const FieldSpec spec(2, 1.0);
  const auto psi = WavePacket::gaussian(spec, {0.5}, 0.2, 64);
  CorrelatorSpec s;
  s.state = FieldState::particles({psi});
  s.forward_points = {FourVector(0.1, 0.2)};
  s.backward_points = {FourVector(0.9, -0.5)};
  const cplx wick = evaluate_correlator(spec, s);
  const cplx direct = state_two_point(s.state, spec, s.backward_points[0], s.forward_points[0]);
  CHECK(rel_err(wick, direct) < 1e-12);
}

TEST_CASE("Wick evaluation matches the Fock oracle on a lattice") {
  const LatticeModel lat = small_lattice();
  const FieldSpec spec = lat.field();
  const auto p1 = WavePacket::on_lattice(spec, {0.3, cplx(0.8, 0.1), 0.4, cplx(0.0, -0.3)});
  const auto p2 = WavePacket::on_lattice(spec, {cplx(0.1, 0.5), 0.2, -0.6, 0.5});
  std::mt19937_64 rng(11);

  struct Case {
    FieldState state;
    std::size_t max_n;
  };
  const Case cases[] = {{FieldState::vacuum(), 2}, {FieldState::particles({p1}), 2}, {FieldState::particles({p1, p2}), 1}};
  for (const auto& c : cases) {
    for (std::size_t n = 1; n <= c.max_n; ++n) {
      for (int trial = 0; trial < 6; ++trial) {
        CorrelatorSpec s;
        s.state = c.state;
        for (std::size_t i = 0; i < n; ++i) {
          s.forward_points.push_back(random_point(rng));
          s.backward_points.push_back(random_point(rng));
        }
        const cplx wick = evaluate_correlator(spec, s);
        const cplx oracle = oracle_correlator(s, lat);
        CHECK(rel_err(wick, oracle) < 1e-6);
      }
    }
  }
}

TEST_CASE("equal-time insertions use the printed label order") {
  const LatticeModel lat = small_lattice();
  const FieldSpec spec = lat.field();
  const auto p1 = WavePacket::on_lattice(spec, {0.3, 0.8, 0.4, cplx(0.0, -0.3)});
  CorrelatorSpec s;
  s.state = FieldState::particles({p1});
  s.forward_points = {FourVector(0.5, 0.1), FourVector(0.5, 1.3)};
  s.backward_points = {FourVector(-0.2, 0.4), FourVector(-0.2, -0.9)};
  CHECK(rel_err(evaluate_correlator(spec, s), oracle_correlator(s, lat)) < 1e-6);
}

TEST_CASE("coherent-state correlators match the oracle") {
  const LatticeModel lat = small_lattice(4);
  const FieldSpec spec = lat.field();
  const auto alpha = WavePacket::on_lattice(spec, {0.0175, cplx(0.035, 0.028), 0.042, -0.014});
  CorrelatorSpec s;
  s.state = FieldState::coherent(alpha);
  s.forward_points = {FourVector(0.2, 0.3), FourVector(-0.7, 1.1)};
  s.backward_points = {FourVector(0.9, -0.4), FourVector(-1.3, 0.6)};
  OracleOptions opt;
  opt.leakage_threshold = 1e-3;
  // truncation error of the oracle scales as |alpha|^6
  const cplx wick = evaluate_correlator(spec, s);
  CHECK(rel_err(wick, oracle_correlator(s, lat, opt)) < 1e-6);
  CorrelatorSpec vac = s;
  vac.state = FieldState::vacuum();
  CHECK(rel_err(wick, evaluate_correlator(spec, vac)) > 1e-4);
}

TEST_CASE("oracle: odd numbers of field insertions vanish in the vacuum") {
  CorrelatorSpec s;
  s.allow_unbalanced = true;
  s.forward_points = {FourVector(0.0, 0.0), FourVector(1.0, 0.5)};
  s.backward_points = {FourVector(0.3, -0.2)};
  CHECK(std::abs(oracle_correlator(s, small_lattice())) < 1e-15);
}
