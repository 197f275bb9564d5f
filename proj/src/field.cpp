#include "qtp/field.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qtp/error.hpp"

namespace qtp {

using std::numbers::pi;

FieldSpec::FieldSpec(int d, double m, double eps) : dim(d), mass(m), epsilon(eps) { validate(); }

FieldSpec FieldSpec::on_lattice(std::shared_ptr<const ModeSpectrum> lat, double m) {
  FieldSpec s(2, m);
  if (!lat || !lat->is_lattice) throw InvalidInput("FieldSpec::on_lattice: lattice spectrum required");
  s.lattice = std::move(lat);
  return s;
}

void FieldSpec::validate() const {
  require_dimension(dim);
  if (!std::isfinite(mass) || mass < 0.0) throw InvalidInput("FieldSpec: mass must be finite and >= 0");
  if (dim == 2 && !(mass > 0.0)) throw InvalidInput("FieldSpec: D = 2 requires m > 0 (infrared safety)");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidInput("FieldSpec: epsilon must be > 0");
}

double omega(const FieldSpec& spec, std::span<const double> k) {
  double k2 = 0.0;
  for (double c : k) k2 += c * c;
  return std::sqrt(k2 + spec.mass * spec.mass);
}

std::shared_ptr<const ModeSpectrum> make_lattice_spectrum(double mass, double box_length,
                                                          std::span<const int> mode_numbers) {
  if (!(box_length > 0.0)) throw InvalidInput("lattice: box length must be positive");
  if (!(mass > 0.0)) throw InvalidInput("lattice: m > 0 required");
  auto spec = std::make_shared<ModeSpectrum>();
  spec->is_lattice = true;
  spec->box_length = box_length;
  for (std::size_t i = 0; i < mode_numbers.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (mode_numbers[i] == mode_numbers[j]) throw InvalidInput("lattice: momenta must be distinct");
    const double k = 2.0 * pi * mode_numbers[i] / box_length;
    const double w = std::sqrt(k * k + mass * mass);
    spec->nodes.push_back(ModeNode{FourVector(w, k), 1.0 / (2.0 * w * box_length)});
  }
  return spec;
}

ModeSpectrum make_window_spectrum(const FieldSpec& spec, std::span<const double> center, double half_width,
                                  std::size_t points) {
  const int d = spec.dim - 1;
  if (static_cast<int>(center.size()) != d) throw InvalidInput("window spectrum: centre dimension mismatch");
  if (points < 3 || !(half_width > 0.0)) throw InvalidInput("window spectrum: bad resolution");
  const double h = 2.0 * half_width / static_cast<double>(points - 1);
  ModeSpectrum out;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= points;
  out.nodes.reserve(total);
  std::vector<double> k(d);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double tw = 1.0;
    for (int i = d - 1; i >= 0; --i) {
      const std::size_t j = rem % points;
      rem /= points;
      k[i] = center[i] - half_width + h * static_cast<double>(j);
      tw *= (j == 0 || j + 1 == points) ? 0.5 * h : h;
    }
    const double w = omega(spec, k);
    if (!(w > 0.0)) continue;  // massless zero mode carries no measure
    FourVector kv(spec.dim);
    kv[0] = w;
    for (int i = 0; i < d; ++i) kv[i + 1] = k[i];
    out.nodes.push_back(ModeNode{kv, tw / (std::pow(2.0 * pi, d) * 2.0 * w)});
  }
  return out;
}

// ---------------------------------------------------------------------------

WavePacket WavePacket::gaussian(const FieldSpec& spec, std::vector<double> k0, double width,
                                std::size_t points, double span) {
  spec.validate();
  if (static_cast<int>(k0.size()) != spec.dim - 1) throw InvalidInput("WavePacket: momentum dimension mismatch");
  if (!(width > 0.0)) throw InvalidInput("WavePacket: width must be positive");
  WavePacket p;
  p.gaussian_ = true;
  p.k0_ = std::move(k0);
  p.width_ = width;
  p.nodes_ = make_window_spectrum(spec, p.k0_, span * width, points);
  p.amp_.resize(p.nodes_.size());
  double n2 = 0.0;
  for (std::size_t i = 0; i < p.nodes_.size(); ++i) {
    std::vector<double> k(spec.dim - 1);
    for (int j = 0; j < spec.dim - 1; ++j) k[j] = p.nodes_.nodes[i].k[j + 1];
    const cplx v = p.value(k);
    p.amp_[i] = v;
    n2 += p.nodes_.nodes[i].weight * std::norm(v);
  }
  p.norm_const_ = 1.0 / std::sqrt(n2);
  for (auto& a : p.amp_) a *= p.norm_const_;
  return p;
}

WavePacket WavePacket::on_lattice(const FieldSpec& spec, std::vector<cplx> c) {
  if (!spec.lattice) throw InvalidInput("WavePacket::on_lattice: spec has no lattice");
  const auto& nodes = spec.lattice->nodes;
  if (c.size() != nodes.size()) throw InvalidInput("WavePacket::on_lattice: amplitude count mismatch");
  WavePacket p;
  p.nodes_ = *spec.lattice;
  p.amp_.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) p.amp_[i] = c[i] / std::sqrt(nodes[i].weight);
  return p;
}

cplx WavePacket::value(std::span<const double> k) const {
  if (!gaussian_) throw InvalidInput("WavePacket::value: analytic profile only for Gaussian packets");
  double d2 = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) d2 += (k[i] - k0_[i]) * (k[i] - k0_[i]);
  const cplx v = scale_ * norm_const_ * std::exp(-d2 / (4.0 * width_ * width_));
  return conjugate_ ? std::conj(v) : v;
}

double WavePacket::norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < amp_.size(); ++i) s += nodes_.nodes[i].weight * std::norm(amp_[i]);
  return s;
}

WavePacket WavePacket::scaled(cplx factor) const {
  WavePacket p = *this;
  for (auto& a : p.amp_) a *= factor;
  p.scale_ *= conjugate_ ? std::conj(factor) : factor;
  return p;
}

WavePacket WavePacket::conjugated() const {
  WavePacket p = *this;
  for (auto& a : p.amp_) a = std::conj(a);
  p.conjugate_ = !conjugate_;
  return p;
}

cplx overlap(const WavePacket& a, const WavePacket& b) {
  const auto& na = a.nodes().nodes;
  const auto& nb = b.nodes().nodes;
  bool same = na.size() == nb.size();
  for (std::size_t i = 0; same && i < na.size(); ++i) same = na[i].k == nb[i].k;
  cplx s = 0.0;
  if (same) {
    for (std::size_t i = 0; i < na.size(); ++i) s += na[i].weight * std::conj(a.amplitudes()[i]) * b.amplitudes()[i];
    return s;
  }
  // Different windows: sum over the nodes of one packet against the analytic profile of the other.
  if (b.is_gaussian()) {
    std::vector<double> k;
    for (std::size_t i = 0; i < na.size(); ++i) {
      k.clear();
      for (int d = 1; d < na[i].k.dim(); ++d) k.push_back(na[i].k[d]);
      s += na[i].weight * std::conj(a.amplitudes()[i]) * b.value(k);
    }
    return s;
  }
  if (a.is_gaussian()) return std::conj(overlap(b, a));
  throw InvalidInput("overlap: packets live on different node sets");
}

cplx mode_function(const WavePacket& psi, const FourVector& x) {
  const auto& nodes = psi.nodes().nodes;
  const auto amp = psi.amplitudes();
  cplx s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    s += nodes[i].weight * amp[i] * std::polar(1.0, -minkowski_dot(nodes[i].k, x));
  return s;
}

// ---------------------------------------------------------------------------

FieldState::FieldState(Variant v) : v_(std::move(v)) {}

FieldState FieldState::particles(std::vector<WavePacket> packets) {
  if (packets.empty()) return vacuum();
  if (packets.size() > 4) throw InvalidInput("FieldState: at most 4 particles supported");
  return FieldState(Particles{std::move(packets)});
}

FieldState FieldState::coherent(WavePacket profile) { return FieldState(Coherent{std::move(profile)}); }

namespace {

cplx wightman_lattice(const ModeSpectrum& lat, const FourVector& d) {
  cplx s = 0.0;
  for (const auto& n : lat.nodes) s += n.weight * std::polar(1.0, -minkowski_dot(n.k, d));
  return s;
}

}  // namespace

cplx wightman_vacuum(const FieldSpec& spec, const FourVector& x, const FourVector& xp) {
  if (x.dim() != spec.dim || xp.dim() != spec.dim) throw InvalidInput("wightman_vacuum: dimension mismatch");
  if (x == xp) throw InvalidInput("wightman_vacuum: coincident points");
  const FourVector d = x - xp;
  if (spec.lattice) return wightman_lattice(*spec.lattice, d);

  const double dt = d.t();
  const double r2 = d.spatial_norm2();
  const double s2 = r2 - dt * dt;  // > 0 spacelike
  const double scale = std::max(dt * dt, r2);
  const double m = spec.mass;

  if (spec.dim == 4 && m == 0.0) {
    const cplx tt = cplx(dt, -spec.epsilon);
    return -1.0 / (4.0 * pi * pi) / (tt * tt - r2);
  }
  if (std::abs(s2) <= 1e-14 * scale)
    throw NumericalError("wightman_vacuum: null separation, regulator underflow in closed form");

  if (spec.dim == 2) {
    if (s2 > 0.0) return std::cyl_bessel_k(0.0, m * std::sqrt(s2)) / (2.0 * pi);
    const double tau = std::sqrt(-s2);
    const cplx g(-0.25 * std::cyl_neumann(0.0, m * tau), -0.25 * std::cyl_bessel_j(0.0, m * tau));
    return dt > 0.0 ? g : std::conj(g);
  }
  // D = 4, m > 0
  if (s2 > 0.0) {
    const double s = std::sqrt(s2);
    return m * std::cyl_bessel_k(1.0, m * s) / (4.0 * pi * pi * s);
  }
  const double tau = std::sqrt(-s2);
  const double pref = m / (8.0 * pi * tau);
  const cplx g(pref * std::cyl_neumann(1.0, m * tau), pref * std::cyl_bessel_j(1.0, m * tau));
  return dt > 0.0 ? g : std::conj(g);
}

cplx permanent(std::span<const cplx> m, std::size_t n) {
  if (m.size() != n * n) throw InvalidInput("permanent: not square");
  if (n == 0) return 1.0;
  // Ryser's formula.
  cplx total = 0.0;
  const std::size_t subsets = std::size_t{1} << n;
  for (std::size_t s = 1; s < subsets; ++s) {
    cplx prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      cplx row = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (s >> j & 1) row += m[i * n + j];
      prod *= row;
    }
    const int bits = __builtin_popcountll(s);
    total += ((static_cast<int>(n) - bits) % 2 ? -1.0 : 1.0) * prod;
  }
  return total;
}

std::vector<cplx> one_body_coefficients(const Particles& p) {
  const std::size_t n = p.packets.size();
  std::vector<cplx> gram(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) gram[i * n + j] = overlap(p.packets[i], p.packets[j]);
  const cplx norm = permanent(gram, n);
  std::vector<cplx> coef(n * n);
  std::vector<cplx> minor(n > 0 ? (n - 1) * (n - 1) : 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t w = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          if (a != i && b != j) minor[w++] = gram[a * n + b];
      coef[i * n + j] = permanent(minor, n - 1) / norm;
    }
  return coef;
}

double classical_field(const Coherent& c, const FourVector& x) {
  return 2.0 * mode_function(c.profile, x).real();
}

cplx state_two_point(const FieldState& state, const FieldSpec& spec, const FourVector& x, const FourVector& xp) {
  const cplx vac = wightman_vacuum(spec, x, xp);
  return std::visit(
      [&](const auto& s) -> cplx {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Vacuum>) {
          return vac;
        } else if constexpr (std::is_same_v<T, Coherent>) {
          return vac + classical_field(s, x) * classical_field(s, xp);
        } else {
          const std::size_t n = s.packets.size();
          const auto coef = one_body_coefficients(s);
          std::vector<cplx> ux(n), uxp(n);
          for (std::size_t i = 0; i < n; ++i) {
            ux[i] = mode_function(s.packets[i], x);
            uxp[i] = mode_function(s.packets[i], xp);
          }
          cplx extra = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
              extra += coef[i * n + j] * (std::conj(ux[i]) * uxp[j] + ux[j] * std::conj(uxp[i]));
          return vac + extra;
        }
      },
      state.variant());
}

}  // namespace qtp
