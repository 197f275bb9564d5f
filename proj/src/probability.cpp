#include "qtp/probability.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <thread>

#include "qtp/error.hpp"
#include "qtp/parallel.hpp"
#include "qtp/wick.hpp"

namespace qtp {

using std::numbers::pi;

// ---------------------------------------------------------------------------
// Windows and grids
// ---------------------------------------------------------------------------

void Window::validate() const {
  require_dimension(lower.dim());
  if (upper.dim() != lower.dim()) throw InvalidInput("Window: lower and upper dimensions differ");
  if (points.size() != static_cast<std::size_t>(lower.dim()))
    throw InvalidInput("Window: one point count per axis required");
  if (!lower.finite() || !upper.finite()) throw InvalidInput("Window: non-finite bounds");
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k] == 0) throw InvalidInput("Window: zero points on an axis");
    if (points[k] > 1 && !(upper[k] > lower[k])) throw InvalidInput("Window: upper must exceed lower");
  }
}

std::vector<Axis> Window::axes() const {
  std::vector<Axis> out;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double step = points[k] > 1 ? (upper[k] - lower[k]) / static_cast<double>(points[k] - 1) : 1.0;
    out.push_back(Axis{lower[k], step, points[k]});
  }
  return out;
}

std::size_t Window::size() const {
  std::size_t n = 1;
  for (auto p : points) n *= p;
  return n;
}

FourVector Window::point(std::size_t flat) const {
  const auto ax = axes();
  FourVector x(dim());
  for (std::size_t k = ax.size(); k-- > 0;) {
    x[k] = ax[k].at(flat % ax[k].n);
    flat /= ax[k].n;
  }
  return x;
}

double Window::cell_volume() const {
  double v = 1.0;
  for (const auto& a : axes())
    if (a.n > 1) v *= a.step;
  return v;
}

double ProbabilityGrid::measure() const {
  double m = 1.0;
  for (const auto& w : windows) m *= w.cell_volume();
  return m;
}

double ProbabilityGrid::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * measure();
}

double ProbabilityGrid::peak() const {
  double p = 0.0;
  for (double v : values) p = std::max(p, std::abs(v));
  return p;
}

double ProbabilityGrid::negative_mass(double tol) const {
  const double limit = tol * peak();
  double mass = 0.0;
  for (double v : values) {
    if (v < -limit) throw NumericalError("ProbabilityGrid: negative density beyond quadrature noise");
    if (v < 0.0) mass -= v;
  }
  return mass * measure();
}

// ---------------------------------------------------------------------------
// Single-point evaluation
// ---------------------------------------------------------------------------

namespace {

double check_residue(cplx v, double scale, double tol, const char* what) {
  const double r = scale > 0.0 ? std::abs(v.imag()) / scale : 0.0;
  if (std::abs(v.imag()) > tol * scale) throw NumericalError(std::string(what) + ": imaginary residue above tolerance");
  return r;
}

std::vector<const WavePacket*> state_packets(const FieldState& state) {
  std::vector<const WavePacket*> out;
  if (const auto* p = std::get_if<Particles>(&state.variant()))
    for (const auto& w : p->packets) out.push_back(&w);
  if (const auto* c = std::get_if<Coherent>(&state.variant())) out.push_back(&c->profile);
  return out;
}

/// G(a, b) - G+(a, b): the part of the two-point function carried by the state.
class StatePart {
 public:
  explicit StatePart(const FieldState& state) : state_(state) {
    if (const auto* p = std::get_if<Particles>(&state.variant())) coef_ = one_body_coefficients(*p);
  }

  cplx operator()(const FourVector& a, const FourVector& b) const {
    if (const auto* c = std::get_if<Coherent>(&state_.variant())) return classical_field(*c, a) * classical_field(*c, b);
    const auto* p = std::get_if<Particles>(&state_.variant());
    if (!p) return 0.0;
    const std::size_t n = p->packets.size();
    std::vector<cplx> ua(n), ub(n);
    for (std::size_t i = 0; i < n; ++i) {
      ua[i] = mode_function(p->packets[i], a);
      ub[i] = mode_function(p->packets[i], b);
    }
    cplx s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s += coef_[i * n + j] * (std::conj(ua[i]) * ub[j] + ua[j] * std::conj(ub[i]));
    return s;
  }

 private:
  const FieldState& state_;
  std::vector<cplx> coef_;
};

/// Relative-coordinate grid for the Wigner and direct routes.
std::vector<Axis> relative_axes(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                                std::size_t q, const DensityOptions& opt, double extent_factor) {
  double e_reach = 0.0, p_reach = 0.0;
  for (const auto* w : state_packets(state))
    for (const auto& n : w->nodes().nodes) {
      e_reach = std::max(e_reach, n.k.t());
      p_reach = std::max(p_reach, std::sqrt(n.k.spatial_norm2()));
    }
  std::vector<Axis> axes;
  std::size_t total = 1;
  for (int k = 0; k < spec.dim; ++k) {
    const double width = k == 0 ? det.sigma_e : det.sigma_p;
    const double reach = k == 0 ? std::max(det.gap + 8.0 * width, e_reach)
                                : std::max(std::abs(k == 1 ? det.pointer.center(q) : 0.0) + 8.0 * width, p_reach);
    const double half = extent_factor * opt.relative_extent / width;
    const double h_max = pi / (1.5 * reach);
    std::size_t n = std::max<std::size_t>(opt.relative_points, 2 * static_cast<std::size_t>(std::ceil(half / h_max)));
    n += n % 2;
    total *= n;
    if (total > (std::size_t{1} << 24)) throw ResourceError("density route: relative-coordinate grid too large");
    const double h = 2.0 * half / static_cast<double>(n);
    axes.push_back(Axis{-h * static_cast<double>(n / 2), h, n});
  }
  return axes;
}

FourVector grid_point(const ComplexGrid& g, std::size_t flat, int dim) {
  const auto idx = g.unravel(flat);
  FourVector y(dim);
  for (int k = 0; k < dim; ++k) y[k] = g.axes[k].at(idx[k]);
  return y;
}

/// State part of the density by the Wigner or direct route.
cplx routed_state_part(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const FourVector& x,
                       std::size_t q, const DensityOptions& opt, bool sampled, double& scale) {
  const StatePart gs(state);
  const int dim = spec.dim;
  scale = 0.0;
  if (opt.route == DensityRoute::Direct) {
    ComplexGrid g(relative_axes(spec, det, state, q, opt, 1.0));
    cplx sum = 0.0;
    for (std::size_t f = 0; f < g.size(); ++f) {
      const FourVector y = grid_point(g, f, dim);
      cplx r = kernel_position(det, y, q);
      if (sampled) r *= sqrt_sampling_value(det.sampling, y);
      const cplx v = r * gs(x - 0.5 * y, x + 0.5 * y);
      sum += v;
      scale += std::abs(v);
    }
    scale *= g.cell_volume();
    return sum * g.cell_volume();
  }

  // Super-Gaussian window exp(-(y/s)^8) equal to 1 wherever the kernel is non-negligible.
  ComplexGrid g(relative_axes(spec, det, state, q, opt, 1.5));
  std::vector<double> s(dim);
  for (int k = 0; k < dim; ++k) s[k] = opt.relative_extent / (k == 0 ? det.sigma_e : det.sigma_p);
  for (std::size_t f = 0; f < g.size(); ++f) {
    const FourVector y = grid_point(g, f, dim);
    double e = 0.0;
    for (int k = 0; k < dim; ++k) e += std::pow(y[k] / s[k], 8);
    g.values[f] = std::exp(-e) * gs(x - 0.5 * y, x + 0.5 * y);
  }
  const ComplexGrid w = wigner_transform(g);
  cplx sum = 0.0;
  for (std::size_t f = 0; f < w.size(); ++f) {
    const FourVector xi = grid_point(w, f, dim);
    const double k = sampled ? kernel_fourier_sampled(det, xi, q) : kernel_fourier(det, xi, q);
    if (k == 0.0) continue;
    const cplx v = k * w.values[f];
    sum += v;
    scale += std::abs(v);
  }
  const double norm = w.cell_volume() / std::pow(2.0 * pi, dim);
  scale *= norm;
  return sum * norm;
}

/// Evaluates one detector's density at many points with shared engines.
class SingleEvaluator {
 public:
  SingleEvaluator(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                  const DensityOptions& opt, KernelForm form)
      : spec_(spec), det_(det), state_(state), opt_(opt), form_(form) {
    if (opt.route == DensityRoute::Spectral) {
      engine_ = std::make_unique<SpectralEngine>(spec, state, std::vector<DetectorModel>{det}, form, opt.spectral);
    } else {
      if (form != KernelForm::SamplingIndependent && form != KernelForm::ExactSampled)
        throw InvalidInput("density: smeared and sampled forms use the spectral route");
      engine_ = std::make_unique<SpectralEngine>(spec, FieldState::vacuum(), std::vector<DetectorModel>{det}, form,
                                                 opt.spectral);
    }
  }

  /// Returns the density and stores |Im| / scale in `residue`.
  double operator()(const FourVector& x, std::size_t q, double& residue) const {
    const FourVector xs[1] = {x};
    const std::size_t qs[1] = {q};
    const auto v = engine_->evaluate(xs, qs);
    cplx value = v.value;
    double scale = v.scale;
    if (opt_.route != DensityRoute::Spectral && !state_.is_vacuum()) {
      double s = 0.0;
      value += routed_state_part(spec_, det_, state_, x, q, opt_, form_ == KernelForm::ExactSampled, s);
      scale += s;
    }
    residue = check_residue(value, scale, opt_.residue_tolerance, "density");
    return value.real();
  }

 private:
  const FieldSpec& spec_;
  const DetectorModel& det_;
  const FieldState& state_;
  const DensityOptions& opt_;
  KernelForm form_;
  std::unique_ptr<SpectralEngine> engine_;
};

double single_point(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const FourVector& x,
                    std::size_t q, const DensityOptions& opt, KernelForm form) {
  double residue = 0.0;
  return SingleEvaluator(spec, det, state, opt, form)(x, q, residue);
}

}  // namespace

double single_density(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const FourVector& x,
                      std::size_t q, const DensityOptions& opt) {
  return single_point(spec, det, state, x, q, opt, KernelForm::SamplingIndependent);
}

double exact_sampled_density(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                             const FourVector& x, std::size_t q, const DensityOptions& opt) {
  return single_point(spec, det, state, x, q, opt, KernelForm::ExactSampled);
}

double smeared_density(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const FourVector& x,
                       std::size_t q, const DensityOptions& opt) {
  return single_point(spec, det, state, x, q, opt, KernelForm::Smeared);
}

double sampled_probability(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                           const FourVector& x, std::size_t q, const DensityOptions& opt) {
  return single_point(spec, det, state, x, q, opt, KernelForm::SampledProbability);
}

double joint_density(const FieldSpec& spec, std::span<const DetectorModel> dets, const FieldState& state,
                     std::span<const DetectionEvent> events, const DensityOptions& opt) {
  if (dets.size() != events.size()) throw InvalidInput("joint_density: one event per detector required");
  if (opt.route != DensityRoute::Spectral) throw InvalidInput("joint_density: spectral route only");
  const SpectralEngine engine(spec, state, std::vector<DetectorModel>(dets.begin(), dets.end()),
                              KernelForm::SamplingIndependent, opt.spectral);
  std::vector<FourVector> x;
  std::vector<std::size_t> q;
  for (const auto& e : events) {
    x.push_back(e.x);
    q.push_back(e.q);
  }
  const auto v = engine.evaluate(x, q);
  check_residue(v.value, v.scale, opt.residue_tolerance, "joint_density");
  return v.value.real();
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

ProbabilityGrid density_grid(const FieldSpec& spec, const DetectorModel& det, const FieldState& state,
                             const Window& window, const DensityOptions& opt, KernelForm form) {
  window.validate();
  if (window.dim() != spec.dim) throw InvalidInput("density_grid: window and field dimensions differ");
  const SingleEvaluator eval(spec, det, state, opt, form);
  ProbabilityGrid g;
  g.windows = {window};
  g.bins = {det.pointer.bins()};
  const std::size_t np = window.size(), n = g.bins[0] * np;
  g.values.assign(n, 0.0);
  std::vector<double> residue(n, 0.0);
  parallel_for(n, opt.threads, [&](std::size_t i) { g.values[i] = eval(window.point(i % np), i / np, residue[i]); });
  for (double r : residue) g.max_residue = std::max(g.max_residue, r);
  return g;
}

ProbabilityGrid joint_grid(const FieldSpec& spec, std::span<const DetectorModel> dets, const FieldState& state,
                           std::span<const Window> windows, const DensityOptions& opt) {
  if (dets.size() != 2 || windows.size() != 2) throw InvalidInput("joint_grid: exactly two detectors");
  if (opt.route != DensityRoute::Spectral) throw InvalidInput("joint_grid: spectral route only");
  for (const auto& w : windows) {
    w.validate();
    if (w.dim() != spec.dim) throw InvalidInput("joint_grid: window and field dimensions differ");
  }
  const SpectralEngine engine(spec, state, std::vector<DetectorModel>(dets.begin(), dets.end()),
                              KernelForm::SamplingIndependent, opt.spectral);
  ProbabilityGrid g;
  g.windows = {windows[0], windows[1]};
  g.bins = {dets[0].pointer.bins(), dets[1].pointer.bins()};
  g.order = 4;
  const std::size_t n1 = g.events(0), n2 = g.events(1);
  const std::size_t p1 = windows[0].size(), p2 = windows[1].size();
  g.values.assign(n1 * n2, 0.0);
  std::vector<double> residue(n1 * n2, 0.0);
  parallel_for(n1 * n2, opt.threads, [&](std::size_t i) {
    const std::size_t e1 = i / n2, e2 = i % n2;
    const FourVector x[2] = {windows[0].point(e1 % p1), windows[1].point(e2 % p2)};
    const std::size_t q[2] = {e1 / p1, e2 / p2};
    const auto v = engine.evaluate(x, q);
    residue[i] = check_residue(v.value, v.scale, opt.residue_tolerance, "joint_grid");
    g.values[i] = v.value.real();
  });
  for (double r : residue) g.max_residue = std::max(g.max_residue, r);
  return g;
}

RealGrid smeared_grid(const ProbabilityGrid& p, const SamplingFunction& f, std::size_t q) {
  if (p.detectors() != 1) throw InvalidInput("smeared_grid: one-detector grid required");
  if (q >= p.bins[0]) throw InvalidInput("smeared_grid: pointer bin out of range");
  const Window& w = p.windows[0];
  if (f.dim() != w.dim()) throw InvalidInput("smeared_grid: sampling and window dimensions differ");
  RealGrid a(w.axes());
  const std::size_t np = w.size();
  std::copy(p.values.begin() + static_cast<long>(q * np), p.values.begin() + static_cast<long>((q + 1) * np),
            a.values.begin());

  // sigma = f^2 / volume has widths delta / sqrt(2).
  std::vector<Axis> kax;
  double padding = 2.0;
  for (int k = 0; k < w.dim(); ++k) {
    const Axis& ax = a.axes[k];
    const double width = (k == 0 ? f.delta_t : f.delta_x) / std::numbers::sqrt2;
    if (ax.n < 2) throw InvalidInput("smeared_grid: every window axis must be sampled");
    if (ax.step > 0.25 * width) throw InvalidInput("smeared_grid: fewer than 4 cells per smearing width");
    const std::size_t half = static_cast<std::size_t>(std::ceil(7.0 * width / ax.step));
    kax.push_back(Axis{-ax.step * static_cast<double>(half), ax.step, 2 * half + 1});
    padding = std::max(padding, 1.0 + static_cast<double>(2 * half + 2) / static_cast<double>(ax.n));
  }
  RealGrid kernel(kax);
  const FourVector origin(w.dim());
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const auto idx = kernel.unravel(i);
    FourVector y(w.dim());
    for (int k = 0; k < w.dim(); ++k) y[k] = kax[k].at(idx[k]);
    kernel.values[i] = smearing_density(SamplingFunction(f.delta_t, f.delta_x, origin), y);
  }
  return fft_convolve(a, kernel, padding);
}

// ---------------------------------------------------------------------------
// Normalization and the hierarchy
// ---------------------------------------------------------------------------

DetectionSummary detection_summary(const ProbabilityGrid& grid) {
  DetectionSummary s;
  s.p_det = grid.total();
  if (grid.normalization == Normalization::Raw && s.p_det >= 1.0)
    throw NumericalError("detection_summary: detection probability reaches 1 (coupling outside perturbative range)");
  s.p_empty = 1.0 - s.p_det;
  return s;
}

ProbabilityGrid conditioned(const ProbabilityGrid& grid, double min_detection) {
  if (grid.normalization == Normalization::Conditioned) return grid;
  const double t = grid.total();
  if (!(t > min_detection)) throw NumericalError("conditioned: detection probability is zero within tolerance");
  ProbabilityGrid out = grid;
  for (double& v : out.values) v /= t;
  out.normalization = Normalization::Conditioned;
  return out;
}

Hierarchy build_hierarchy(std::vector<ProbabilityGrid> level1, std::optional<ProbabilityGrid> level2) {
  if (level1.empty()) throw InvalidInput("build_hierarchy: level 1 required");
  for (const auto& g : level1)
    if (g.detectors() != 1) throw InvalidInput("build_hierarchy: level 1 grids must be single-detector");
  Hierarchy h;
  h.level1 = std::move(level1);
  h.normalization = h.level1[0].normalization;
  h.none = 1.0;
  for (const auto& g : h.level1) h.none -= g.total();
  h.min_subtraction = h.none;
  if (level2) {
    if (h.level1.size() != 2 || level2->detectors() != 2) throw InvalidInput("build_hierarchy: level 2 needs two detectors");
    const std::size_t n1 = level2->events(0), n2 = level2->events(1);
    if (h.level1[0].values.size() != n1 || h.level1[1].values.size() != n2)
      throw InvalidInput("build_hierarchy: level 1 and level 2 event sets differ");
    const double m1 = level2->windows[0].cell_volume(), m2 = level2->windows[1].cell_volume();
    h.first_only = h.level1[0].values;
    h.second_only = h.level1[1].values;
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j) {
        const double v = level2->values[i * n2 + j];
        h.first_only[i] -= v * m2;
        h.second_only[j] -= v * m1;
      }
    h.none += level2->total();
    for (double v : h.first_only) h.min_subtraction = std::min(h.min_subtraction, v);
    for (double v : h.second_only) h.min_subtraction = std::min(h.min_subtraction, v);
    h.min_subtraction = std::min(h.min_subtraction, h.none);
    h.level2 = std::move(level2);
  }
  return h;
}

Hierarchy conditioned(const Hierarchy& h, double min_detection) {
  if (h.normalization == Normalization::Conditioned) return h;
  Hierarchy out;
  for (const auto& g : h.level1) out.level1.push_back(conditioned(g, min_detection));
  if (h.level2) out.level2 = conditioned(*h.level2, min_detection);
  out.first_only.assign(h.first_only.size(), 0.0);
  out.second_only.assign(h.second_only.size(), 0.0);
  out.none = 0.0;
  out.min_subtraction = 0.0;
  out.normalization = Normalization::Conditioned;
  return out;
}

double generating_functional(const Hierarchy& h, std::span<const double> j, int order) {
  if (order < 0 || order > 2) throw InvalidInput("generating_functional: order must be 0, 1 or 2");
  const ProbabilityGrid& p1 = h.level1.at(0);
  const std::size_t n = p1.values.size();
  if (j.size() != n) throw InvalidInput("generating_functional: source size differs from the event count");
  const double m = p1.measure();
  double z = 1.0;
  if (order >= 1)
    for (std::size_t e = 0; e < n; ++e) z += p1.values[e] * j[e] * m;
  if (order >= 2) {
    if (!h.level2 || h.level2->events(0) != n || h.level2->events(1) != n)
      throw InvalidInput("generating_functional: level 2 over the same events required");
    double s = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b) s += h.level2->values[a * n + b] * j[a] * j[b];
    z += 0.5 * s * m * m;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Position-space quadrature of the Wick correlators
// ---------------------------------------------------------------------------

double position_density(const FieldSpec& spec, std::span<const DetectorModel> dets, const FieldState& state,
                        std::span<const DetectionEvent> events, const PositionQuadrature& quad) {
  const std::size_t n = dets.size();
  if (n == 0 || n > 2 || events.size() != n) throw InvalidInput("position_density: one or two detectors");
  if (!spec.lattice) throw InvalidInput("position_density: lattice fields only");
  if (quad.time_points < 2 || quad.space_points < 2) throw InvalidInput("position_density: at least 2 points per axis");
  const int dim = spec.dim;

  // Half-shifted uniform grids (no coincident backward/forward points).
  struct Node {
    FourVector y;
    cplx weight;
  };
  std::vector<std::vector<Node>> grids(n);
  std::vector<double> reach(n);
  for (std::size_t i = 0; i < n; ++i) {
    const DetectorModel& d = dets[i];
    if (d.dim != dim) throw InvalidInput("position_density: detector and field dimensions differ");
    std::vector<Axis> ax;
    for (int k = 0; k < dim; ++k) {
      const std::size_t m = k == 0 ? quad.time_points : quad.space_points;
      const double half = quad.extent / (k == 0 ? d.sigma_e : d.sigma_p);
      const double h = 2.0 * half / static_cast<double>(m);
      ax.push_back(Axis{-half + 0.5 * h, h, m});
    }
    reach[i] = ax[0].hi();
    ComplexGrid g(ax);
    for (std::size_t f = 0; f < g.size(); ++f) {
      const FourVector y = grid_point(g, f, dim);
      grids[i].push_back({y, kernel_position(d, y, events[i].q) * g.cell_volume()});
    }
  }
  if (n == 2 && std::abs(events[0].x.t() - events[1].x.t()) <= 0.5 * (reach[0] + reach[1]))
    throw InvalidInput("position_density: events closer in time than the kernel support");

  CorrelatorSpec corr;
  corr.state = state;
  for (std::size_t i = 0; i < n; ++i) {
    corr.forward_points.push_back(events[i].x + 0.5 * grids[i][0].y);
    corr.backward_points.push_back(events[i].x - 0.5 * grids[i][0].y);
  }
  const PlanSet base = enumerate_plans(corr);
  const cplx norm = state_norm(state);

  auto accumulate = [&](PlanSet& set, std::span<const Node* const> nodes) {
    for (auto& s : set.slots)
      if (auto* f = std::get_if<FieldInsertion>(&s)) {
        const double sign = f->branch == Branch::Forward ? 0.5 : -0.5;
        f->point = events[f->label].x + sign * nodes[f->label]->y;
      }
    cplx v = 0.0;
    for (const auto& plan : set.plans) v += evaluate_plan(spec, corr, set, plan);
    cplx w = 1.0;
    for (const auto* node : nodes) w *= node->weight;
    return v * w;
  };

  const std::size_t n0 = grids[0].size();
  const int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<cplx> partial(n0, 0.0);
  parallel_for(n0, threads, [&](std::size_t i) {
    PlanSet set = base;
    const Node* nodes[2] = {&grids[0][i], nullptr};
    if (n == 1) {
      partial[i] = accumulate(set, std::span<const Node* const>(nodes, 1));
      return;
    }
    cplx s = 0.0;
    for (const auto& node : grids[1]) {
      nodes[1] = &node;
      s += accumulate(set, nodes);
    }
    partial[i] = s;
  });
  cplx total = 0.0;
  for (auto v : partial) total += v;
  total /= norm;
  if (std::abs(total.imag()) > 1e-8 * std::max(std::abs(total.real()), 1e-300))
    throw NumericalError("position_density: imaginary residue above tolerance");
  return total.real();
}

double ctp_functional(const FieldSpec& spec, const DetectorModel& det, const FieldState& state, const Window& window,
                      std::span<const double> j, int order, const PositionQuadrature& quad) {
  if (order < 0 || order > 2) throw InvalidInput("ctp_functional: order must be 0, 1 or 2");
  window.validate();
  const std::size_t np = window.size(), n = det.pointer.bins() * np;
  if (j.size() != n) throw InvalidInput("ctp_functional: source size differs from the event count");
  const double m = window.cell_volume();
  double z = 1.0;
  const DetectorModel one[1] = {det};
  const DetectorModel two[2] = {det, det};
  if (order >= 1)
    for (std::size_t e = 0; e < n; ++e) {
      if (j[e] == 0.0) continue;
      const DetectionEvent ev[1] = {{window.point(e % np), e / np}};
      z += position_density(spec, one, state, ev, quad) * j[e] * m;
    }
  if (order >= 2)
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b || j[a] == 0.0 || j[b] == 0.0) continue;
        const DetectionEvent ev[2] = {{window.point(a % np), a / np}, {window.point(b % np), b / np}};
        z += 0.5 * position_density(spec, two, state, ev, quad) * j[a] * j[b] * m * m;
      }
  return z;
}

}  // namespace qtp
