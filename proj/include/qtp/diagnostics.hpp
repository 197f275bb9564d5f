#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qtp/probability.hpp"

namespace qtp {

/// S_B = -sum_c m_c ln(m_c / v_c) over cells with probability mass m_c and
/// measure v_c; 0 ln 0 = 0. Throws InvalidInput unless the masses sum to 1.
double boltzmann_entropy(std::span<const double> mass, std::span<const double> measure);

/// Boltzmann entropy of a conditioned single-detector grid on a time slice,
/// over position cells and pointer bins (bin widths as momentum measure;
/// 1 for detectors without a pointer).
double boltzmann_entropy(const ProbabilityGrid& p, const PointerSpec& pointer);

struct KolmogorovDefect {
  double s_q = 0.0;
  /// Integrand over the outcomes of the later detector (its events, then the empty outcome):
  /// sum_{z1} P2(z1, z2) - P1(z2), as a density for events and a mass for the empty outcome.
  std::vector<double> field;
};

/// S_Q = sum_{z2} |sum_{z1} P(z1, z2) - P1(z2)| with both sums over detections
/// and the empty outcome. Detector 0 is marginalized; the hierarchy must be conditioned.
KolmogorovDefect kolmogorov_defect(const Hierarchy& h);

struct CorrelationEntropy {
  double value = 0.0;                // against the marginals of P2
  double against_level1 = 0.0;       // against the standalone level-1 densities
  bool variants_differ = false;      // |value - against_level1| > 1e-6
};

/// S_C = integral P2 ln[P2 / (m1 m2)]. Throws NumericalError where P2 > 0 but m1 m2 = 0.
CorrelationEntropy correlation_entropy(const Hierarchy& h);

struct DiagnosticsReport {
  std::optional<double> s_b;  // set when level 1 of detector 0 is a time slice
  double s_q = 0.0;
  double s_c = 0.0;
  std::optional<double> s_c_level1;  // reported when the two S_C variants differ
  bool kolmogorov_ok = true;
  double threshold = 1e-10;
  std::string scenario_hash;
  std::string convention = "conditioned-on-detection; empty outcomes carry zero mass after conditioning";
  std::vector<Window> windows;  // domain of the marginalization
};

DiagnosticsReport diagnose(const Hierarchy& h, const PointerSpec& first_pointer, double threshold,
                           std::string scenario_hash);

}  // namespace qtp
