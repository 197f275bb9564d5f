#include "qtp/wick.hpp"

#include <algorithm>
#include <functional>

#include "qtp/error.hpp"

namespace qtp {

void CorrelatorSpec::validate() const {
  if (!allow_unbalanced && forward_points.size() != backward_points.size())
    throw InvalidInput("CorrelatorSpec: forward and backward argument counts differ");
  std::vector<const FourVector*> all;
  for (const auto& p : forward_points) all.push_back(&p);
  for (const auto& p : backward_points) all.push_back(&p);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!all[i]->finite()) throw InvalidInput("CorrelatorSpec: non-finite point");
    for (std::size_t j = 0; j < i; ++j)
      if (*all[i] == *all[j]) throw InvalidInput("CorrelatorSpec: coincident points");
  }
}

namespace {

std::size_t particle_count(const FieldState& s) {
  if (const auto* p = std::get_if<Particles>(&s.variant())) return p->packets.size();
  return 0;
}

/// True when `a` stands left of `b` inside its branch ordering.
bool left_of(const FieldInsertion& a, const FieldInsertion& b) {
  if (a.branch != b.branch) return a.branch == Branch::Backward;
  const double ta = a.point.t(), tb = b.point.t();
  if (a.branch == Branch::Forward) {
    if (ta != tb) return ta > tb;
    return a.label > b.label;
  }
  if (ta != tb) return ta < tb;
  return a.label < b.label;
}

}  // namespace

std::vector<OperatorSlot> canonical_slots(const CorrelatorSpec& spec) {
  const std::size_t np = particle_count(spec.state);
  std::vector<OperatorSlot> slots;
  for (std::size_t i = 0; i < np; ++i) slots.emplace_back(ParticleLeg{i, LegSide::AnnihilationLeft});
  std::vector<FieldInsertion> bw, fw;
  for (std::size_t i = 0; i < spec.backward_points.size(); ++i)
    bw.push_back({spec.backward_points[i], Branch::Backward, i});
  for (std::size_t i = 0; i < spec.forward_points.size(); ++i)
    fw.push_back({spec.forward_points[i], Branch::Forward, i});
  std::sort(bw.begin(), bw.end(), left_of);
  std::sort(fw.begin(), fw.end(), left_of);
  for (auto& f : bw) slots.emplace_back(f);
  for (auto& f : fw) slots.emplace_back(f);
  for (std::size_t i = 0; i < np; ++i) slots.emplace_back(ParticleLeg{i, LegSide::CreationRight});
  return slots;
}

PropagatorTag classify_pair(const OperatorSlot& left, const OperatorSlot& right) {
  const auto* fl = std::get_if<FieldInsertion>(&left);
  const auto* fr = std::get_if<FieldInsertion>(&right);
  if (fl && fr) {
    if (fl->branch == Branch::Forward && fr->branch == Branch::Forward) return PropagatorTag::Feynman;
    if (fl->branch == Branch::Backward && fr->branch == Branch::Backward) return PropagatorTag::Dyson;
    return fl->branch == Branch::Backward ? PropagatorTag::WightmanMinusPlus : PropagatorTag::WightmanPlusMinus;
  }
  if (fl) return PropagatorTag::ModeFunction;           // field left, leg right: creation leg
  if (fr) return PropagatorTag::ModeFunctionConjugate;  // annihilation leg left, field right
  return PropagatorTag::Overlap;
}

namespace {

bool vanishing_pair(const OperatorSlot& left, const OperatorSlot& right) {
  const auto* ll = std::get_if<ParticleLeg>(&left);
  const auto* rl = std::get_if<ParticleLeg>(&right);
  if (ll && ll->side == LegSide::CreationRight) return true;   // a+ on the left annihilates <0|
  if (rl && rl->side == LegSide::AnnihilationLeft) return true;  // a on the right annihilates |0>
  return false;
}

}  // namespace

std::vector<ContractionPlan> enumerate_matchings(const std::vector<OperatorSlot>& slots, bool coherent,
                                                const WickOptions& opt) {
  const std::size_t n = slots.size();
  if (!coherent && n % 2 != 0) throw InvalidInput("enumerate_plans: odd number of operator slots");
  if (n > 2 * opt.max_pairs)
    throw ResourceError("enumerate_plans: " + std::to_string(n) + " slots exceed the plan cap of " +
                        std::to_string(2 * opt.max_pairs));

  std::vector<ContractionPlan> plans;
  std::vector<bool> used(n, false);
  std::vector<Pairing> current;
  std::function<void()> rec = [&]() {
    std::size_t i = 0;
    while (i < n && used[i]) ++i;
    if (i == n) {
      plans.push_back(ContractionPlan{current});
      return;
    }
    used[i] = true;
    if (coherent && std::holds_alternative<FieldInsertion>(slots[i])) {
      current.push_back({i, kNoSlot, PropagatorTag::ClassicalField});
      rec();
      current.pop_back();
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (used[j] || vanishing_pair(slots[i], slots[j])) continue;
      used[j] = true;
      current.push_back({i, j, classify_pair(slots[i], slots[j])});
      rec();
      current.pop_back();
      used[j] = false;
    }
    used[i] = false;
  };
  rec();
  return plans;
}

PlanSet enumerate_plans(const CorrelatorSpec& spec, const WickOptions& opt) {
  spec.validate();
  PlanSet set;
  set.slots = canonical_slots(spec);
  set.plans = enumerate_matchings(set.slots, std::holds_alternative<Coherent>(spec.state.variant()), opt);
  return set;
}

cplx branch_propagator(const FieldSpec& spec, const FieldInsertion& a, const FieldInsertion& b) {
  if (a.point == b.point) throw InvalidInput("branch_propagator: coincident points");
  return left_of(a, b) ? wightman_vacuum(spec, a.point, b.point) : wightman_vacuum(spec, b.point, a.point);
}

namespace {

const WavePacket& packet_of(const CorrelatorSpec& corr, const ParticleLeg& leg) {
  return std::get<Particles>(corr.state.variant()).packets.at(leg.particle);
}

}  // namespace

cplx evaluate_plan(const FieldSpec& spec, const CorrelatorSpec& corr, const PlanSet& set,
                   const ContractionPlan& plan) {
  cplx value = 1.0;
  for (const auto& p : plan.pairings) {
    const OperatorSlot& l = set.slots.at(p.first);
    switch (p.tag) {
      case PropagatorTag::ClassicalField:
        value *= classical_field(std::get<Coherent>(corr.state.variant()), std::get<FieldInsertion>(l).point);
        break;
      case PropagatorTag::Feynman:
      case PropagatorTag::Dyson:
      case PropagatorTag::WightmanMinusPlus:
      case PropagatorTag::WightmanPlusMinus:
        value *= branch_propagator(spec, std::get<FieldInsertion>(l), std::get<FieldInsertion>(set.slots.at(p.second)));
        break;
      case PropagatorTag::ModeFunction:
        value *= mode_function(packet_of(corr, std::get<ParticleLeg>(set.slots.at(p.second))),
                               std::get<FieldInsertion>(l).point);
        break;
      case PropagatorTag::ModeFunctionConjugate:
        value *= std::conj(mode_function(packet_of(corr, std::get<ParticleLeg>(l)),
                                         std::get<FieldInsertion>(set.slots.at(p.second)).point));
        break;
      case PropagatorTag::Overlap:
        value *= overlap(packet_of(corr, std::get<ParticleLeg>(l)),
                         packet_of(corr, std::get<ParticleLeg>(set.slots.at(p.second))));
        break;
    }
    if (value == cplx(0.0)) break;
  }
  return value;
}

cplx state_norm(const FieldState& s) {
  const auto* p = std::get_if<Particles>(&s.variant());
  if (!p) return 1.0;
  const std::size_t n = p->packets.size();
  std::vector<cplx> gram(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) gram[i * n + j] = overlap(p->packets[i], p->packets[j]);
  return permanent(gram, n);
}

cplx evaluate_correlator(const FieldSpec& spec, const CorrelatorSpec& corr, const WickOptions& opt) {
  const PlanSet set = enumerate_plans(corr, opt);
  cplx sum = 0.0;
  for (const auto& plan : set.plans) sum += evaluate_plan(spec, corr, set, plan);
  return sum / state_norm(corr.state);
}

}  // namespace qtp
