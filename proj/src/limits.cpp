#include <cmath>
#include <numbers>

#include "qtp/detector.hpp"
#include "qtp/error.hpp"
#include "qtp/quadrature.hpp"

namespace qtp {

namespace {

/// perm of gram restricted to rows not in `rows` and columns not in `cols`.
cplx reduced_permanent(const std::vector<cplx>& gram, std::size_t n, std::initializer_list<std::size_t> rows,
                       std::initializer_list<std::size_t> cols) {
  auto excluded = [](std::initializer_list<std::size_t> l, std::size_t v) {
    for (auto e : l)
      if (e == v) return true;
    return false;
  };
  const std::size_t k = n - rows.size();
  std::vector<cplx> sub;
  sub.reserve(k * k);
  for (std::size_t a = 0; a < n; ++a) {
    if (excluded(rows, a)) continue;
    for (std::size_t b = 0; b < n; ++b)
      if (!excluded(cols, b)) sub.push_back(gram[a * n + b]);
  }
  return permanent(sub, k);
}

std::vector<cplx> gram_matrix(const Particles& p) {
  const std::size_t n = p.packets.size();
  std::vector<cplx> g(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g[i * n + j] = overlap(p.packets[i], p.packets[j]);
  return g;
}

}  // namespace

double glauber_density(const FieldState& state, const FourVector& x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Vacuum>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, Coherent>) {
          return std::norm(mode_function(s.profile, x));
        } else {
          const std::size_t n = s.packets.size();
          const auto coef = one_body_coefficients(s);
          std::vector<cplx> u(n);
          for (std::size_t i = 0; i < n; ++i) u[i] = mode_function(s.packets[i], x);
          cplx sum = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) sum += coef[i * n + j] * std::conj(u[i]) * u[j];
          return sum.real();
        }
      },
      state.variant());
}

double glauber_joint_density(const FieldState& state, const FourVector& x1, const FourVector& x2) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Vacuum>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, Coherent>) {
          return std::norm(mode_function(s.profile, x1) * mode_function(s.profile, x2));
        } else {
          const std::size_t n = s.packets.size();
          if (n < 2) return 0.0;
          const auto gram = gram_matrix(s);
          const cplx norm = permanent(gram, n);
          std::vector<cplx> u1(n), u2(n);
          for (std::size_t i = 0; i < n; ++i) {
            u1[i] = mode_function(s.packets[i], x1);
            u2[i] = mode_function(s.packets[i], x2);
          }
          cplx sum = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              if (i == j) continue;
              for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b) {
                  if (a == b) continue;
                  sum += std::conj(u1[i] * u2[j]) * u1[a] * u2[b] * reduced_permanent(gram, n, {i, j}, {a, b});
                }
            }
          return (sum / norm).real();
        }
      },
      state.variant());
}

namespace {

// integral_0^T exp(i a tau) dtau
cplx window_integral(double a, double T) {
  if (std::abs(a * T) < 1e-8) return cplx(T, 0.5 * a * T * T);
  return (std::polar(1.0, a * T) - 1.0) / cplx(0.0, a);
}

// integral_0^T exp(i s Omega tau) u(x(tau)) dtau
cplx windowed_mode(const WavePacket& psi, const Worldline& line, double sign_gap, double T) {
  const auto& nodes = psi.nodes().nodes;
  cplx sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double kb = minkowski_dot(nodes[i].k, line.base);
    const double kv = minkowski_dot(nodes[i].k, line.velocity);
    sum += nodes[i].weight * psi.amplitudes()[i] * std::polar(1.0, -kb) * window_integral(sign_gap - kv, T);
  }
  return sum;
}

double vacuum_response(const FieldSpec& spec, const Worldline& line, double gap, double T) {
  auto kernel = [&](double a) {
    const double s = std::sin(0.5 * a * T);
    return std::abs(a) < 1e-12 ? T * T : 4.0 * s * s / (a * a);
  };
  if (spec.lattice) {
    double sum = 0.0;
    for (const auto& n : spec.lattice->nodes) sum += n.weight * kernel(gap + minkowski_dot(n.k, line.velocity));
    return sum;
  }
  // k = m sinh(eta): dmu = d eta / (4 pi); k.v = m cosh(eta - rapidity) for any inertial worldline.
  // The kernel is 2 (1 - cos(aT)) / a^2 with a = gap + m cosh(eta), even in eta. The cosine part is
  // taken along 0 -> i theta -> i theta + infinity, where exp(i a T) decays exponentially.
  const double m = spec.mass, theta = std::numbers::pi / 4.0;
  auto run = [](IntegrationRequest req) {
    req.rel_tol = 1e-10;
    req.abs_tol = 1e-14;
    req.max_subdivisions = 200000;
    const auto r = integrate(req);
    if (!r.converged) throw NumericalError("udw_response: vacuum quadrature did not converge");
    return r.value;
  };
  IntegrationRequest smooth;
  smooth.integrand = [&](std::span<const double> e) {
    const double a = gap + m * std::cosh(e[0]);
    return cplx(1.0 / (a * a));
  };
  smooth.lower = {0.0};
  smooth.upper = {40.0};
  auto phase = [&](cplx eta) {
    const cplx a = gap + m * std::cosh(eta);
    return std::exp(cplx(0.0, T) * a) / (a * a);
  };
  IntegrationRequest rise;
  rise.integrand = [&](std::span<const double> th) { return cplx(0.0, 1.0) * phase(cplx(0.0, th[0])); };
  rise.lower = {0.0};
  rise.upper = {theta};
  rise.oscillation_hint = T * m;
  IntegrationRequest across;
  across.integrand = [&](std::span<const double> e) { return phase(cplx(e[0], theta)); };
  across.lower = {0.0};
  across.upper = {40.0};
  const double oscillating = (run(rise) + run(across)).real();
  return (4.0 * run(smooth).real() - 4.0 * oscillating) / (4.0 * std::numbers::pi);
}

}  // namespace

double udw_response(const FieldSpec& spec, const FieldState& state, const Worldline& line, double gap,
                    double T) {
  spec.validate();
  if (spec.dim != 2) throw InvalidInput("udw_response: sharp-switching response is finite only for D = 2");
  if (line.base.dim() != 2) throw InvalidInput("udw_response: worldline dimension mismatch");
  if (!(gap > 0.0) || !(T > 0.0)) throw InvalidInput("udw_response: gap and total time must be positive");

  const double vac = vacuum_response(spec, line, gap, T);
  const double extra = std::visit(
      [&](const auto& s) -> double {
        using V = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<V, Vacuum>) {
          return 0.0;
        } else if constexpr (std::is_same_v<V, Coherent>) {
          const cplx ap = windowed_mode(s.profile, line, gap, T);
          const cplx am = windowed_mode(s.profile, line, -gap, T);
          return std::norm(ap + std::conj(am));
        } else {
          const std::size_t n = s.packets.size();
          const auto coef = one_body_coefficients(s);
          std::vector<cplx> ap(n), am(n);
          for (std::size_t i = 0; i < n; ++i) {
            ap[i] = windowed_mode(s.packets[i], line, gap, T);
            am[i] = windowed_mode(s.packets[i], line, -gap, T);
          }
          cplx sum = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
              sum += coef[i * n + j] * (std::conj(ap[i]) * ap[j] + am[j] * std::conj(am[i]));
          return sum.real();
        }
      },
      state.variant());
  return vac + extra;
}

}  // namespace qtp
