#include "qtp/diagnostics.hpp"

#include <cmath>

#include "qtp/error.hpp"

namespace qtp {

namespace {

/// Pairwise summation: fixed reduction tree, independent of thread count.
double tree_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return tree_sum(v.first(h)) + tree_sum(v.subspan(h));
}

void require_conditioned(const Hierarchy& h, const char* what) {
  if (h.normalization != Normalization::Conditioned)
    throw InvalidInput(std::string(what) + ": conditioned hierarchy required");
  if (h.level1.size() != 2 || !h.level2) throw InvalidInput(std::string(what) + ": levels 1 and 2 of two detectors required");
}

}  // namespace

double boltzmann_entropy(std::span<const double> mass, std::span<const double> measure) {
  if (mass.size() != measure.size()) throw InvalidInput("boltzmann_entropy: mass and measure sizes differ");
  std::vector<double> terms(mass.size(), 0.0);
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] < 0.0 || !(measure[i] > 0.0)) throw InvalidInput("boltzmann_entropy: negative mass or empty cell");
    if (mass[i] > 0.0) terms[i] = -mass[i] * std::log(mass[i] / measure[i]);
  }
  if (std::abs(tree_sum(mass) - 1.0) > 1e-9) throw InvalidInput("boltzmann_entropy: distribution is not normalized");
  return tree_sum(terms);
}

double boltzmann_entropy(const ProbabilityGrid& p, const PointerSpec& pointer) {
  if (p.detectors() != 1) throw InvalidInput("boltzmann_entropy: single-detector grid required");
  if (p.normalization != Normalization::Conditioned) throw InvalidInput("boltzmann_entropy: conditioned grid required");
  const Window& w = p.windows[0];
  if (w.points[0] != 1) throw InvalidInput("boltzmann_entropy: grid must be a time slice");
  if (pointer.bins() != p.bins[0]) throw InvalidInput("boltzmann_entropy: pointer does not match the grid");
  const std::size_t np = w.size();
  const double dx = w.cell_volume();
  std::vector<double> mass(p.values.size()), measure(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const std::size_t q = i / np;
    const double dk = pointer.is_none() ? 1.0 : pointer.bin_edges[q + 1] - pointer.bin_edges[q];
    mass[i] = std::max(p.values[i], 0.0) * dx;
    measure[i] = dx * dk;
  }
  return boltzmann_entropy(mass, measure);
}

KolmogorovDefect kolmogorov_defect(const Hierarchy& h) {
  require_conditioned(h, "kolmogorov_defect");
  const ProbabilityGrid& p2 = *h.level2;
  const std::size_t n1 = p2.events(0), n2 = p2.events(1);
  const double m1 = p2.windows[0].cell_volume(), m2 = p2.windows[1].cell_volume();
  if (h.level1[1].values.size() != n2 || h.first_only.size() != n1 || h.second_only.size() != n2)
    throw InvalidInput("kolmogorov_defect: inconsistent hierarchy");

  KolmogorovDefect out;
  out.field.resize(n2 + 1);
  std::vector<double> column(n1 + 1), terms(n2 + 1);
  for (std::size_t j = 0; j < n2; ++j) {
    for (std::size_t i = 0; i < n1; ++i) column[i] = p2.values[i * n2 + j] * m1;
    column[n1] = h.second_only[j];
    out.field[j] = tree_sum(column) - h.level1[1].values[j];
    terms[j] = std::abs(out.field[j]) * m2;
  }
  // Empty outcome of the later detector: P(z1, empty) summed over z1 plus P(empty, empty).
  std::vector<double> empty(n1 + 1);
  for (std::size_t i = 0; i < n1; ++i) empty[i] = h.first_only[i] * m1;
  empty[n1] = h.none;
  const double p1_empty = 1.0 - h.level1[1].total();
  out.field[n2] = tree_sum(empty) - p1_empty;
  terms[n2] = std::abs(out.field[n2]);
  out.s_q = tree_sum(terms);
  return out;
}

CorrelationEntropy correlation_entropy(const Hierarchy& h) {
  require_conditioned(h, "correlation_entropy");
  const ProbabilityGrid& p2 = *h.level2;
  const std::size_t n1 = p2.events(0), n2 = p2.events(1);
  const double v1 = p2.windows[0].cell_volume(), v2 = p2.windows[1].cell_volume();
  std::vector<double> m1(n1), m2(n2), row(n2), col(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) row[j] = std::max(p2.values[i * n2 + j], 0.0) * v2;
    m1[i] = tree_sum(row);
  }
  for (std::size_t j = 0; j < n2; ++j) {
    for (std::size_t i = 0; i < n1; ++i) col[i] = std::max(p2.values[i * n2 + j], 0.0) * v1;
    m2[j] = tree_sum(col);
  }
  auto kl = [&](std::span<const double> a, std::span<const double> b, bool strict) {
    std::vector<double> terms(n1 * n2, 0.0);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j) {
        const double p = std::max(p2.values[i * n2 + j], 0.0);
        if (p == 0.0) continue;
        const double q = a[i] * b[j];
        if (!(q > 0.0)) {
          if (strict) throw NumericalError("correlation_entropy: joint density outside the support of the marginals");
          return std::numeric_limits<double>::infinity();
        }
        terms[i * n2 + j] = p * std::log(p / q) * v1 * v2;
      }
    return tree_sum(terms);
  };
  CorrelationEntropy out;
  out.value = kl(m1, m2, true);
  out.against_level1 = kl(h.level1[0].values, h.level1[1].values, false);
  out.variants_differ = !(std::abs(out.value - out.against_level1) <= 1e-6);
  return out;
}

DiagnosticsReport diagnose(const Hierarchy& h, const PointerSpec& first_pointer, double threshold,
                           std::string scenario_hash) {
  DiagnosticsReport r;
  r.threshold = threshold;
  r.scenario_hash = std::move(scenario_hash);
  if (h.level1.at(0).windows[0].points[0] == 1) r.s_b = boltzmann_entropy(h.level1[0], first_pointer);
  r.s_q = kolmogorov_defect(h).s_q;
  r.kolmogorov_ok = r.s_q <= threshold;
  const auto c = correlation_entropy(h);
  r.s_c = c.value;
  if (c.variants_differ) r.s_c_level1 = c.against_level1;
  for (const auto& g : h.level1) r.windows.push_back(g.windows[0]);
  return r;
}

}  // namespace qtp
