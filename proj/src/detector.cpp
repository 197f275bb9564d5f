#include "qtp/detector.hpp"

#include <cmath>
#include <numbers>

#include "qtp/error.hpp"
#include "qtp/quadrature.hpp"

namespace qtp {

using std::numbers::pi;

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double energy_step(const DetectorModel& m, double xi0) {
  if (m.hard_step) return xi0 > 0.0 ? 1.0 : (xi0 == 0.0 ? 0.5 : 0.0);
  return norm_cdf(xi0 / m.sigma_e);
}

double energy_profile(const DetectorModel& m, double xi0) {
  const double d = xi0 - m.gap;
  return std::exp(-d * d / (2.0 * m.sigma_e * m.sigma_e)) * energy_step(m, xi0);
}

double momentum_profile(const DetectorModel& m, const FourVector& xi, std::size_t q) {
  const double c = m.pointer.center(q);
  double d2 = 0.0;
  for (int i = 1; i < m.dim; ++i) {
    const double d = xi[i] - (i == 1 ? c : 0.0);
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * m.sigma_p * m.sigma_p));
}

}  // namespace

double PointerSpec::center(std::size_t q) const {
  if (is_none()) {
    if (q != 0) throw InvalidInput("PointerSpec: bin index out of range");
    return 0.0;
  }
  if (q + 1 >= bin_edges.size()) throw InvalidInput("PointerSpec: bin index out of range");
  return 0.5 * (bin_edges[q] + bin_edges[q + 1]);
}

void PointerSpec::validate() const {
  if (is_none()) return;
  if (bin_edges.size() < 2) throw InvalidInput("PointerSpec: need at least two bin edges");
  if (bin_edges.size() - 1 > 8) throw InvalidInput("PointerSpec: at most 8 pointer bins");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i] > bin_edges[i - 1])) throw InvalidInput("PointerSpec: bin edges must increase");
}

void DetectorModel::validate() const {
  require_dimension(dim);
  if (ref_point.dim() != dim || sampling.dim() != dim)
    throw InvalidInput("DetectorModel: dimension mismatch");
  if (!(gap > 0.0)) throw InvalidInput("DetectorModel: gap must be positive");
  if (!(sigma_e > 0.0) || !(sigma_p > 0.0)) throw InvalidInput("DetectorModel: spectral widths must be positive");
  if (!std::isfinite(coupling)) throw InvalidInput("DetectorModel: coupling must be finite");
  pointer.validate();
}

double DetectorModel::normalization() const {
  const double energy = hard_step ? std::sqrt(2.0 * pi) * sigma_e * norm_cdf(gap / sigma_e)
                                  : std::sqrt(2.0 * pi) * sigma_e * norm_cdf(gap / (std::numbers::sqrt2 * sigma_e));
  const double momentum = std::pow(2.0 * pi * sigma_p * sigma_p, 0.5 * (dim - 1));
  return 1.0 / (energy * momentum);
}

double kernel_fourier(const DetectorModel& m, const FourVector& xi, std::size_t q) {
  if (xi.dim() != m.dim) throw InvalidInput("kernel_fourier: dimension mismatch");
  return m.coupling * m.coupling * std::pow(2.0 * pi, m.dim) * m.normalization() * energy_profile(m, xi.t()) *
         momentum_profile(m, xi, q);
}

double kernel_fourier_sampled(const DetectorModel& m, const FourVector& xi, std::size_t q) {
  if (xi.dim() != m.dim) throw InvalidInput("kernel_fourier_sampled: dimension mismatch");
  const double dt = m.sampling.delta_t, dx = m.sampling.delta_x;
  const double se2 = m.sigma_e * m.sigma_e, sp2 = m.sigma_p * m.sigma_p;

  // energy factor: Gaussian x step convolved with the transform of sqrt(f)
  const double a = 1.0 / se2 + 2.0 * dt * dt;
  const double mu = (m.gap / se2 + 2.0 * dt * dt * xi.t()) / a;
  const double de = xi.t() - m.gap;
  const double step_var = m.hard_step ? 0.0 : se2;
  const double energy = std::sqrt(4.0 * pi) * dt * std::sqrt(2.0 * pi / a) / (2.0 * pi) *
                        std::exp(-de * de / (2.0 * (se2 + 1.0 / (2.0 * dt * dt)))) *
                        norm_cdf(mu / std::sqrt(step_var + 1.0 / a));

  const double ax = 1.0 / sp2 + 2.0 * dx * dx;
  const double per_axis = std::sqrt(4.0 * pi) * dx * std::sqrt(2.0 * pi / ax) / (2.0 * pi);
  const double c = m.pointer.center(q);
  double d2 = 0.0;
  for (int i = 1; i < m.dim; ++i) {
    const double d = xi[i] - (i == 1 ? c : 0.0);
    d2 += d * d;
  }
  const double momentum = std::pow(per_axis, m.dim - 1) * std::exp(-d2 / (2.0 * (sp2 + 1.0 / (2.0 * dx * dx))));
  return m.coupling * m.coupling * std::pow(2.0 * pi, m.dim) * m.normalization() * energy * momentum;
}

namespace {

// integral dxi0 exp(i xi0 t) E(xi0)
cplx energy_transform(const DetectorModel& m, double t) {
  const double s = m.sigma_e;
  if (std::abs(t) * s > 40.0) return 0.0;  // below exp(-800) of the peak
  if (m.hard_step) {
    const double lo = std::max(0.0, m.gap - 12.0 * s), hi = m.gap + 12.0 * s;
    IntegrationRequest req;
    req.integrand = [&](std::span<const double> v) { return energy_profile(m, v[0]) * std::polar(1.0, v[0] * t); };
    req.lower = {lo};
    req.upper = {hi};
    req.rel_tol = 1e-13;
    req.abs_tol = 1e-15 * s;
    req.oscillation_hint = std::abs(t);
    return integrate(req).value;
  }
  const double h = s / 8.0;
  const int n = 96;
  cplx sum = 0.0;
  for (int j = -n; j <= n; ++j) {
    const double xi0 = m.gap + h * j;
    sum += energy_profile(m, xi0) * std::polar(1.0, xi0 * t);
  }
  return sum * h;
}

}  // namespace

cplx kernel_position(const DetectorModel& m, const FourVector& y, std::size_t q) {
  if (y.dim() != m.dim) throw InvalidInput("kernel_position: dimension mismatch");
  const double sp = m.sigma_p;
  const double c = m.pointer.center(q);
  double r2 = 0.0;
  for (int i = 1; i < m.dim; ++i) r2 += y[i] * y[i];
  // spatial factor: product over axes of integral dxi exp(-i xi y) exp(-(xi - c_i)^2 / (2 sp^2))
  const cplx space = std::pow(std::sqrt(2.0 * pi) * sp, m.dim - 1) * std::exp(-0.5 * sp * sp * r2) *
                     std::polar(1.0, -c * y[1]);
  return m.coupling * m.coupling * m.normalization() * energy_transform(m, y.t()) * space;
}

double smearing_fourier(const SamplingFunction& f, const FourVector& k) {
  const double k2 = k.spatial_norm2();
  return std::exp(-0.25 * f.delta_t * f.delta_t * k.t() * k.t() - 0.25 * f.delta_x * f.delta_x * k2);
}

ScaleReport scale_separation_check(const DetectorModel& m) {
  m.validate();
  ScaleReport r;
  r.tau = 1.0 / m.sigma_e;
  r.ell = 1.0 / m.sigma_p;
  r.ok = r.tau <= m.sampling.delta_t / 5.0 && r.ell <= m.sampling.delta_x / 5.0;
  return r;
}

DetectorModel glauber_kernel(const DetectorModel& model) {
  DetectorModel g = model;
  g.hard_step = true;
  g.validate();
  return g;
}

}  // namespace qtp
