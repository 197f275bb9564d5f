#pragma once

#include <cstddef>
#include <vector>

#include "qtp/field.hpp"
#include "qtp/geometry.hpp"

namespace qtp {

/// Pointer observable: either no pointer (a single outcome) or bins over the
/// detected momentum along the first spatial axis.
struct PointerSpec {
  std::vector<double> bin_edges;  // empty = event-only

  bool is_none() const { return bin_edges.empty(); }
  std::size_t bins() const { return is_none() ? 1 : bin_edges.size() - 1; }
  /// Momentum the acceptance of bin q is centred on (0 without a pointer).
  double center(std::size_t q) const;
  void validate() const;
};

/// Gaussian spectral detector model. The Fourier kernel is
///   Rt(xi, q) = lambda^2 (2 pi)^D N exp[-(xi0 - Omega)^2 / (2 sE^2)] g_q(xi) step(xi0)
/// with g_q(xi) = exp[-|xi - c_q e1|^2 / (2 sP^2)] and step either the soft
/// Phi(xi0 / sE) or the hard Heaviside step (broadband Glauber kernels).
/// N makes the integral of Rt over d^D xi / (2 pi)^D equal lambda^2.
struct DetectorModel {
  int dim = 2;
  FourVector ref_point = FourVector(2);
  double gap = 1.0;
  double sigma_e = 1.0;
  double sigma_p = 1.0;
  double coupling = 1.0;
  SamplingFunction sampling{1.0, 1.0, FourVector(2)};
  PointerSpec pointer;
  bool hard_step = false;

  void validate() const;
  double normalization() const;
};

/// Rt(xi, q) >= 0.
double kernel_fourier(const DetectorModel& model, const FourVector& xi, std::size_t q = 0);

/// Fourier transform of sqrt(f)(y) R(y, q): the kernel seen by the exact
/// (sampling-dependent) density, in closed form.
double kernel_fourier_sampled(const DetectorModel& model, const FourVector& xi, std::size_t q = 0);

/// R(y, q) = integral d^D xi / (2 pi)^D exp(i xi.y) Rt(xi, q).
cplx kernel_position(const DetectorModel& model, const FourVector& y, std::size_t q = 0);

/// Fourier transform of the smearing density sigma at K (real, even).
double smearing_fourier(const SamplingFunction& f, const FourVector& k);

struct ScaleReport {
  double tau = 0.0;
  double ell = 0.0;
  bool ok = false;
};

/// tau = 1/sE, ell = 1/sP; ok iff tau <= delta_t / 5 and ell <= delta_x / 5.
ScaleReport scale_separation_check(const DetectorModel& model);

/// Broadband kernel with a hard positive-frequency step. The caller picks
/// widths that are large compared with the packet's spectral spread.
DetectorModel glauber_kernel(const DetectorModel& model);

/// <psi|phi^-(x) phi^+(x)|psi>.
double glauber_density(const FieldState& state, const FourVector& x);

/// <psi|phi^-(x1) phi^-(x2) phi^+(x2) phi^+(x1)|psi>.
double glauber_joint_density(const FieldState& state, const FourVector& x1, const FourVector& x2);

/// Unruh-DeWitt response with sharp switching on [0, T] along an inertial
/// worldline: integral dtau dtau' exp(-i Omega (tau - tau')) G(x(tau), x(tau')).
/// D = 2 only (the sharp-switching response is ultraviolet divergent in D = 4).
double udw_response(const FieldSpec& spec, const FieldState& state, const Worldline& line, double gap,
                    double total_time);

}  // namespace qtp
