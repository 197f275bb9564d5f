#pragma once

#include <cstddef>
#include <limits>
#include <variant>
#include <vector>

#include "qtp/field.hpp"

namespace qtp {

enum class Branch { Forward, Backward };

/// A field operator at `point` on one branch of the closed time path.
/// `label` is the printed position of the argument (detector index), used to
/// break ties between equal-time insertions on the same branch.
struct FieldInsertion {
  FourVector point;
  Branch branch = Branch::Forward;
  std::size_t label = 0;
};

enum class LegSide { CreationRight, AnnihilationLeft };

/// External particle leg a(psi_i) (bra side) or a+(psi_i) (ket side).
struct ParticleLeg {
  std::size_t particle = 0;
  LegSide side = LegSide::CreationRight;
};

using OperatorSlot = std::variant<FieldInsertion, ParticleLeg>;

/// <psi| T*[phi(x'_1) ... phi(x'_n)] T[phi(x_n) ... phi(x_1)] |psi>.
struct CorrelatorSpec {
  std::vector<FourVector> forward_points;   // x_i
  std::vector<FourVector> backward_points;  // x'_i
  FieldState state;
  bool allow_unbalanced = false;

  void validate() const;
};

enum class PropagatorTag {
  WightmanMinusPlus,      // <phi(backward) phi(forward)>
  WightmanPlusMinus,      // <phi(forward) phi(backward)>, not produced by the canonical order
  Feynman,                // forward-forward, time ordered
  Dyson,                  // backward-backward, anti-time ordered
  ModeFunction,           // <0|phi(x) a+(psi)|0> = u(x)
  ModeFunctionConjugate,  // <0|a(psi) phi(x)|0> = u*(x)
  Overlap,                // <0|a(psi_i) a+(psi_j)|0> = <psi_i|psi_j>
  ClassicalField          // singleton: displacement phi_cl(x) of a coherent state
};

inline constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

struct Pairing {
  std::size_t first = 0;        // left slot in the canonical operator sequence
  std::size_t second = kNoSlot;  // kNoSlot for ClassicalField singletons
  PropagatorTag tag = PropagatorTag::Feynman;
};

struct ContractionPlan {
  std::vector<Pairing> pairings;
};

/// The canonical operator sequence of a spec together with every
/// non-vanishing contraction of it.
struct PlanSet {
  std::vector<OperatorSlot> slots;
  std::vector<ContractionPlan> plans;
};

struct WickOptions {
  /// Maximum N for 2N slots; the unrestricted matching count is (2N-1)!!.
  std::size_t max_pairs = 5;
};

/// Operator sequence in canonical left-to-right order: annihilation legs,
/// backward fields (earliest leftmost), forward fields (latest leftmost),
/// creation legs.
std::vector<OperatorSlot> canonical_slots(const CorrelatorSpec& spec);

PlanSet enumerate_plans(const CorrelatorSpec& spec, const WickOptions& opt = {});

/// Every non-vanishing contraction of an already ordered slot sequence.
/// Coherent states add classical-field singletons.
std::vector<ContractionPlan> enumerate_matchings(const std::vector<OperatorSlot>& slots, bool coherent,
                                                const WickOptions& opt = {});

/// Norm of the state as built from its packets: perm of the Gram matrix (1 otherwise).
cplx state_norm(const FieldState& state);

/// Contraction <X Y> of two field insertions, with X the operator standing to
/// the left in the canonical sequence (Feynman, Dyson, or backward-left Wightman).
cplx branch_propagator(const FieldSpec& spec, const FieldInsertion& a, const FieldInsertion& b);

/// Value of one plan (before division by the multi-particle norm).
cplx evaluate_plan(const FieldSpec& spec, const CorrelatorSpec& corr, const PlanSet& set,
                   const ContractionPlan& plan);

/// Sum over plans, normalized by the state norm.
cplx evaluate_correlator(const FieldSpec& spec, const CorrelatorSpec& corr, const WickOptions& opt = {});

/// Tag a pair of slots according to their kinds and branches (exposed for tests).
PropagatorTag classify_pair(const OperatorSlot& left, const OperatorSlot& right);

}  // namespace qtp
