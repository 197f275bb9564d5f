#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "qtp/detector.hpp"
#include "qtp/field.hpp"
#include "qtp/wick.hpp"

namespace qtp {

/// Which Fourier kernel multiplies each detector's plane-wave bilinears.
enum class KernelForm {
  SamplingIndependent,  // Rt(xi, q)
  ExactSampled,         // transform of sqrt(f) R
  Smeared,              // sigma^(K) Rt: the smeared density W = sigma * P
  SampledProbability    // upsilon sigma^(K) times the above: Prob(x) of the switched detector
};

struct SpectralOptions {
  /// Continuum nodes per spatial axis for vacuum propagators.
  std::size_t vacuum_points = 257;
  /// Kernel widths kept on each side of the detector acceptance.
  double vacuum_extent = 10.0;
  WickOptions wick;
};

/// Evaluates multi-detector densities
///   P(x_1 .. x_n) = integral prod_i d^D y_i R_i(y_i) G(x_i - y_i / 2 ; x_i + y_i / 2)
/// by expanding every Wick contraction into plane waves over a discrete set of
/// momentum nodes. A plane-wave bilinear exp(i p_a.a) exp(i p_b.b) on the
/// backward slot a = x - y/2 and forward slot b = x + y/2 integrates in closed
/// form to exp(i (p_a + p_b).x) K((p_a - p_b) / 2).
///
/// Feynman and Dyson pairs between different detectors are ordered by the
/// event times x_i^0 (ties by detector index).
class SpectralEngine {
 public:
  SpectralEngine(FieldSpec spec, FieldState state, std::vector<DetectorModel> detectors,
                 KernelForm form = KernelForm::SamplingIndependent, SpectralOptions opt = {});
  ~SpectralEngine();
  SpectralEngine(const SpectralEngine&) = delete;
  SpectralEngine& operator=(const SpectralEngine&) = delete;

  std::size_t detectors() const { return detectors_.size(); }
  const FieldSpec& field() const { return spec_; }

  struct Value {
    cplx value;
    double scale = 0.0;  // contraction of the moduli of all factors, for residue checks
  };

  /// One density value for events x_i with pointer bins q_i (one per detector).
  Value evaluate(std::span<const FourVector> x, std::span<const std::size_t> q) const;

 private:
  struct NodeList {
    std::vector<FourVector> p;  // slot momentum (exp(i p.x) convention)
  };
  struct Edge;
  struct PlanCache;

  using Matrix = Eigen::MatrixXcd;
  using Vector = Eigen::VectorXcd;

  const Matrix& kernel_matrix(std::size_t det, std::size_t q, std::size_t la, std::size_t lb) const;
  const PlanCache& plans_for(std::span<const FourVector> x) const;
  double kernel(std::size_t det, std::size_t q, const FourVector& pa, const FourVector& pb) const;

  FieldSpec spec_;
  FieldState state_;
  std::vector<DetectorModel> detectors_;
  KernelForm form_;
  SpectralOptions opt_;
  cplx norm_ = 1.0;

  // Node lists: 0 = vacuum (-k), 1 = vacuum (+k), then per packet (-k, +k), then the classical list.
  std::vector<NodeList> lists_;
  Vector vacuum_weight_;
  std::vector<Vector> packet_weight_;       // w psi_j
  std::vector<Vector> packet_conj_weight_;  // w psi_j*
  Vector classical_weight_;
  std::vector<cplx> overlaps_;  // <psi_i|psi_j>, row-major
  std::size_t classical_list_ = 0;

  mutable std::mutex mutex_;
  mutable std::map<std::array<std::size_t, 4>, std::unique_ptr<Matrix>> kernels_;
  mutable std::map<std::vector<std::size_t>, std::unique_ptr<PlanCache>> plans_;
};

}  // namespace qtp
