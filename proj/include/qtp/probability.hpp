#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "qtp/detector.hpp"
#include "qtp/field.hpp"
#include "qtp/quadrature.hpp"
#include "qtp/spectral.hpp"

namespace qtp {

struct DetectionEvent {
  FourVector x;
  std::size_t q = 0;
};
struct NoDetection {};
/// Elementary event: a detection (x, q) or the empty outcome.
using EventRecord = std::variant<DetectionEvent, NoDetection>;

/// Axis-aligned spacetime window sampled on a uniform grid (axis 0 is time).
struct Window {
  FourVector lower = FourVector(2);
  FourVector upper = FourVector(2);
  std::vector<std::size_t> points;  // per axis; 1 = a single slice at `lower`

  void validate() const;
  int dim() const { return lower.dim(); }
  std::vector<Axis> axes() const;
  std::size_t size() const;
  FourVector point(std::size_t flat) const;
  /// Product of the steps of the axes with more than one point.
  double cell_volume() const;
};

enum class DensityRoute {
  Spectral,  // plane-wave expansion with closed-form Wigner transforms
  Wigner,    // FFT Wigner transform of the sampled two-point function
  Direct     // position-space quadrature of R(y) G(x - y/2, x + y/2)
};

struct DensityOptions {
  DensityRoute route = DensityRoute::Spectral;
  SpectralOptions spectral;
  /// |Im P| allowed relative to the summed magnitude of all contributions.
  double residue_tolerance = 1e-8;
  /// Wigner and direct routes: minimum points per relative-coordinate axis and
  /// the half-width of that grid in kernel correlation scales (1/sE, 1/sP).
  std::size_t relative_points = 64;
  double relative_extent = 12.0;
  int threads = 1;
};

/// Sampling-independent density P(x, q) = integral d^D y R(y, q) G(x - y/2, x + y/2).
double single_density(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const FourVector& x,
                      std::size_t q = 0, const DensityOptions& opt = {});

/// Density with the sqrt(f)(y) factor kept under the integral.
double exact_sampled_density(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                             const FourVector& x, std::size_t q = 0, const DensityOptions& opt = {});

/// W = sigma * P at a single point (closed-form convolution in the spectral representation).
double smeared_density(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const FourVector& x,
                       std::size_t q = 0, const DensityOptions& opt = {});

/// Excitation probability of the switched detector, upsilon (sigma * P_exact)(x).
double sampled_probability(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                           const FourVector& x, std::size_t q = 0, const DensityOptions& opt = {});

/// P_n(z_1 .. z_n) for n <= 3 detectors (spectral route).
double joint_density(const FieldSpec& spec, std::span<const DetectorModel> dets, const FieldState& state,
                     std::span<const DetectionEvent> events, const DensityOptions& opt = {});

enum class Normalization { Raw, Conditioned };

/// Density values over the events of one or two detectors, row-major over
/// (q_1, x_1, q_2, x_2) with x_i the flat window index.
struct ProbabilityGrid {
  std::vector<Window> windows;
  std::vector<std::size_t> bins;
  std::vector<double> values;
  int order = 2;  // power of the coupling carried by raw values
  Normalization normalization = Normalization::Raw;
  double max_residue = 0.0;

  std::size_t detectors() const { return windows.size(); }
  std::size_t events(std::size_t det) const { return bins.at(det) * windows.at(det).size(); }
  /// Product of the window cell volumes (the measure of one grid cell).
  double measure() const;
  double total() const;
  double peak() const;
  /// Mass of the negative values (values below -tol * peak throw NumericalError).
  double negative_mass(double tol = 1e-8) const;
};

ProbabilityGrid density_grid(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                             const Window& window, const DensityOptions& opt = {},
                             KernelForm form = KernelForm::SamplingIndependent);

/// P_2 over the product of two detector windows.
ProbabilityGrid joint_grid(const FieldSpec& spec, std::span<const DetectorModel> dets, const FieldState& state,
                           std::span<const Window> windows, const DensityOptions& opt = {});

/// W = sigma * P by FFT convolution over the window of a one-detector grid.
/// Requires at least 4 cells per width of sigma on every sampled axis.
RealGrid smeared_grid(const ProbabilityGrid& p, const SamplingFunction& f, std::size_t q = 0);

struct DetectionSummary {
  double p_det = 0.0;
  double p_empty = 1.0;
};

/// P_det = sum_q integral P d^D x over the window; P(empty) = 1 - P_det.
DetectionSummary detection_summary(const ProbabilityGrid& grid);

/// Divides by the total detection probability; P_det below `min_detection` throws.
ProbabilityGrid conditioned(const ProbabilityGrid& grid, double min_detection = 1e-14);

/// Levels 1 and 2 of the probability hierarchy with explicit empty outcomes:
/// P(z1, empty) = P1(z1) - integral dz2 P2(z1, z2) and symmetrically.
struct Hierarchy {
  std::vector<ProbabilityGrid> level1;   // one per detector
  std::optional<ProbabilityGrid> level2;  // detectors 0 and 1
  std::vector<double> first_only;         // P(z1, empty) over detector-0 events
  std::vector<double> second_only;        // P(empty, z2) over detector-1 events
  double none = 1.0;                      // P(empty, empty)
  double min_subtraction = 0.0;           // smallest subtraction value seen
  Normalization normalization = Normalization::Raw;
};

Hierarchy build_hierarchy(std::vector<ProbabilityGrid> level1, std::optional<ProbabilityGrid> level2);

/// Level 1 divided by its P_det and level 2 by its total; empty outcomes carry no mass afterwards.
Hierarchy conditioned(const Hierarchy& h, double min_detection = 1e-14);

/// Z[j] = 1 + sum_z P1(z) j(z) dz + 1/2 sum_{z1 != z2} P2(z1, z2) j(z1) j(z2) dz1 dz2
/// truncated at `order` (<= 2) for identical detectors sharing one window.
/// j is indexed like the events of level1[0].
double generating_functional(const Hierarchy& h, std::span<const double> j, int order);

/// Right-hand side of the fundamental relation: the same truncated series with
/// every density evaluated by position-space quadrature of the Wick correlators
/// against the detector kernel.
struct PositionQuadrature {
  std::size_t time_points = 32;
  std::size_t space_points = 32;
  double extent = 12.0;  // half-width in kernel correlation scales
};
double ctp_functional(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const Window& window,
                      std::span<const double> j, int order, const PositionQuadrature& quad = {});

/// Position-space quadrature of the n-detector density (events must be time ordered
/// and separated by more than the kernel support).
double position_density(const FieldSpec& spec, std::span<const DetectorModel> dets, const FieldState& state,
                        std::span<const DetectionEvent> events, const PositionQuadrature& quad = {});

}  // namespace qtp
