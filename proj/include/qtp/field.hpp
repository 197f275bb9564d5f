#pragma once

#include <complex>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "qtp/geometry.hpp"

namespace qtp {

using cplx = std::complex<double>;

/// One on-shell momentum node k = (omega_k, k) with its measure weight:
/// sums over nodes approximate (continuum) or equal (lattice) integrals
/// against dmu(k) = d^{D-1}k / ((2 pi)^{D-1} 2 omega_k).
struct ModeNode {
  FourVector k;
  double weight = 0.0;
};

/// Discrete momentum set. On a periodic box of side L every mode carries
/// weight 1 / (2 omega L^{D-1}); continuum windows use trapezoid weights.
struct ModeSpectrum {
  std::vector<ModeNode> nodes;
  bool is_lattice = false;
  double box_length = 0.0;  // lattice only

  std::size_t size() const { return nodes.size(); }
};

/// Free scalar field with relativistic normalization
/// [a(k), a+(k')] = (2 pi)^{D-1} 2 omega_k delta(k - k').
struct FieldSpec {
  int dim = 2;
  double mass = 1.0;
  /// i-epsilon regulator for closed forms that need one (D = 4, m = 0).
  double epsilon = 1e-4;
  /// When set, all mode sums run over this lattice (fock-oracle matched runs).
  std::shared_ptr<const ModeSpectrum> lattice;

  FieldSpec() = default;
  FieldSpec(int dim, double mass, double epsilon = 1e-4);
  static FieldSpec on_lattice(std::shared_ptr<const ModeSpectrum> lattice, double mass);
  void validate() const;
};

double omega(const FieldSpec& spec, std::span<const double> k);

/// Lattice of momenta 2 pi n / L (D = 2) for the given integers n.
std::shared_ptr<const ModeSpectrum> make_lattice_spectrum(double mass, double box_length,
                                                          std::span<const int> mode_numbers);

/// Uniform continuum window |k_i - center_i| <= half_width with `points`
/// nodes per spatial axis.
ModeSpectrum make_window_spectrum(const FieldSpec& spec, std::span<const double> center,
                                  double half_width, std::size_t points);

/// Momentum-space wave packet psi(k). Either a Gaussian profile
/// psi ~ exp[-|k - k0|^2 / (4 width^2)] sampled on its own node window, or
/// explicit amplitudes on a lattice. Normalized numerically against dmu.
class WavePacket {
 public:
  static WavePacket gaussian(const FieldSpec& spec, std::vector<double> center_momentum, double width,
                             std::size_t points_per_axis = 128, double span_widths = 10.0);
  /// Lattice packet from Fock amplitudes c_n (|psi> = sum c_n a+_n |0>).
  static WavePacket on_lattice(const FieldSpec& spec, std::vector<cplx> fock_amplitudes);

  const ModeSpectrum& nodes() const { return nodes_; }
  /// psi sampled at nodes()[i].
  std::span<const cplx> amplitudes() const { return amp_; }
  /// Analytic profile at an arbitrary spatial momentum (Gaussian packets only).
  cplx value(std::span<const double> k) const;
  bool is_gaussian() const { return gaussian_; }
  const std::vector<double>& center_momentum() const { return k0_; }
  double width() const { return width_; }
  /// integral dmu |psi|^2 re-evaluated on the node set.
  double norm() const;
  /// The same packet with every amplitude multiplied by `factor`.
  WavePacket scaled(cplx factor) const;
  /// Complex-conjugated amplitudes.
  WavePacket conjugated() const;

 private:
  ModeSpectrum nodes_;
  std::vector<cplx> amp_;
  std::vector<double> k0_;
  double width_ = 0.0;
  double norm_const_ = 1.0;
  cplx scale_ = 1.0;
  bool gaussian_ = false;
  bool conjugate_ = false;
};

/// Overlap <psi_a | psi_b> = sum over nodes of w psi_a* psi_b (same node set required).
cplx overlap(const WavePacket& a, const WavePacket& b);

/// Positive-frequency wave function u(x) = integral dmu psi(k) exp(-i k.x).
cplx mode_function(const WavePacket& psi, const FourVector& x);

struct Vacuum {};
struct Particles {
  std::vector<WavePacket> packets;  // at most 4
};
/// Coherent state generated by a classical positive-frequency amplitude
/// u_cl = mode function of `profile` (mean particle number = profile norm).
struct Coherent {
  WavePacket profile;
};

class FieldState {
 public:
  using Variant = std::variant<Vacuum, Particles, Coherent>;
  FieldState() = default;
  FieldState(Variant v);  // NOLINT: implicit by design of the variant wrapper
  static FieldState vacuum() { return FieldState(Vacuum{}); }
  static FieldState particles(std::vector<WavePacket> packets);
  static FieldState coherent(WavePacket profile);

  const Variant& variant() const { return v_; }
  bool is_vacuum() const { return std::holds_alternative<Vacuum>(v_); }

 private:
  Variant v_;
};

/// Vacuum Wightman function <0|phi(x) phi(x')|0>. Closed forms in the
/// continuum (Bessel functions for m > 0, the i-epsilon rational form for
/// D = 4, m = 0); direct mode sum on a lattice. Coincident or exactly null
/// separated points throw.
cplx wightman_vacuum(const FieldSpec& spec, const FourVector& x, const FourVector& xp);

/// <psi|phi(x) phi(x')|psi> for vacuum, product multi-particle, and coherent states.
cplx state_two_point(const FieldState& state, const FieldSpec& spec, const FourVector& x,
                     const FourVector& xp);

/// Classical field phi_cl = u_cl + u_cl* of a coherent state.
double classical_field(const Coherent& c, const FourVector& x);

/// One-body coefficients C_ij = perm(S minus row i, column j) / perm(S) of a
/// product state, S_ij = <psi_i|psi_j> (row-major n x n).
std::vector<cplx> one_body_coefficients(const Particles& p);

/// Permanent of a small square matrix (row-major), used for multi-particle norms.
cplx permanent(std::span<const cplx> m, std::size_t n);

}  // namespace qtp
