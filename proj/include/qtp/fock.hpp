#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qtp/detector.hpp"
#include "qtp/field.hpp"
#include "qtp/wick.hpp"

namespace qtp {

/// Periodic D = 2 box with modes k_n = 2 pi n / L and at most `cutoff` quanta in total.
struct LatticeModel {
  std::vector<int> mode_numbers;
  double mass = 1.0;
  int cutoff = 3;
  double box_length = 10.0;

  void validate() const;
  std::shared_ptr<const ModeSpectrum> spectrum() const;
  /// FieldSpec whose mode sums run over this lattice.
  FieldSpec field() const;
};

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Truncated Fock space over the lattice modes.
class FockSpace {
 public:
  explicit FockSpace(LatticeModel lattice);

  const LatticeModel& lattice() const { return lattice_; }
  std::size_t dim() const { return basis_.size(); }
  const std::vector<std::vector<int>>& basis() const { return basis_; }
  int quanta(std::size_t index) const;
  const Matrix& annihilation(std::size_t mode) const { return a_.at(mode); }

  /// phi(x) = sum_k [a_k e^{-ik.x} + a_k^+ e^{ik.x}] / sqrt(2 omega_k L).
  Matrix field_operator(const FourVector& x) const;
  /// phi(x) v without forming the matrix.
  Vector apply_field(const FourVector& x, const Vector& v) const;

  Vector vacuum() const;
  /// Fock vector of a state whose packets live on the lattice modes.
  Vector state_vector(const FieldState& state) const;
  /// Weight of v in the highest particle-number sector, relative to |v|^2.
  double top_sector_weight(const Vector& v) const;

 private:
  LatticeModel lattice_;
  std::vector<std::vector<int>> basis_;
  std::vector<double> omega_;
  std::vector<double> momentum_;
  std::vector<Matrix> a_;
};

Matrix build_field_operator(const LatticeModel& lattice, const FourVector& x);

struct OracleOptions {
  double leakage_threshold = 1e-8;
};

/// <psi| T*[...] T[...] |psi> by ordered matrix products, evaluated as the
/// inner product of the bra half and the ket half of the operator sequence.
cplx oracle_correlator(const CorrelatorSpec& spec, const LatticeModel& lattice, const OracleOptions& opt = {});

struct DetectionOracleOptions {
  double grid_step_fraction = 0.125;  // spacetime step in units of the sampling widths
  double grid_extent = 8.0;            // half-width of the sampled region in sampling widths
  double spectral_extent = 12.0;       // line window half-width in spectral widths
  double leakage_threshold = 1e-8;
};

/// Leading-order excitation probability Prob(x, q) of an explicit detector whose
/// excited manifold is a set of discrete lines with four-momenta xi_j and weights
/// Rt(xi_j, q) dxi / (2 pi)^D, switched on by F_x(y) = f(x - y). The field side is
/// the exact truncated-Fock state; every spacetime sum runs over a uniform grid.
double oracle_detection_probability(const LatticeModel& lattice, const DetectorModel& detector,
                                    const FieldState& state, const FourVector& x, std::size_t q = 0,
                                    const DetectionOracleOptions& opt = {});

/// Golden files: scenario hash -> list of complex values, stored as JSON.
using GoldenTable = std::map<std::string, std::vector<cplx>>;
void write_golden(const std::string& path, const GoldenTable& table);
GoldenTable read_golden(const std::string& path);

}  // namespace qtp
