#include "qtp/quadrature.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <queue>

#include "qtp/error.hpp"

namespace qtp {

namespace {

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK).
constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.0};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Cell {
  std::vector<double> center;
  std::vector<double> half;
  cplx value;
  double error = 0.0;
  std::size_t split_axis = 0;
};

struct CellOrder {
  bool operator()(const Cell& a, const Cell& b) const { return a.error < b.error; }
};

class RuleEvaluator {
 public:
  RuleEvaluator(const Integrand& f, std::size_t dim) : f_(f), dim_(dim), x_(dim) {}

  void apply(Cell& c) {
    if (dim_ == 1)
      gauss_kronrod(c);
    else
      genz_malik(c);
  }
  std::size_t evaluations() const { return evals_; }

 private:
  cplx eval() {
    ++evals_;
    return f_(std::span<const double>(x_));
  }

  void gauss_kronrod(Cell& c) {
    const double m = c.center[0], h = c.half[0];
    x_[0] = m;
    const cplx fc = eval();
    cplx kron = fc * kWgk[7];
    cplx gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
      x_[0] = m - h * kXgk[j];
      const cplx f1 = eval();
      x_[0] = m + h * kXgk[j];
      const cplx f2 = eval();
      kron += kWgk[j] * (f1 + f2);
      if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
    }
    c.value = kron * h;
    c.error = std::abs((kron - gauss) * h);
    c.split_axis = 0;
  }

  void genz_malik(Cell& c) {
    const double l2 = std::sqrt(9.0 / 70.0), l3 = std::sqrt(9.0 / 10.0), l4 = std::sqrt(9.0 / 10.0),
                 l5 = std::sqrt(9.0 / 19.0);
    const double d = static_cast<double>(dim_);
    const double w1 = (12824.0 - 9120.0 * d + 400.0 * d * d) / 19683.0, w2 = 980.0 / 6561.0,
                 w3 = (1820.0 - 400.0 * d) / 19683.0, w4 = 200.0 / 19683.0,
                 w5 = 6859.0 / 19683.0 / std::ldexp(1.0, static_cast<int>(dim_));
    const double e1 = (729.0 - 950.0 * d + 50.0 * d * d) / 729.0, e2 = 245.0 / 486.0,
                 e3 = (265.0 - 100.0 * d) / 1458.0, e4 = 25.0 / 729.0;

    double vol = 1.0;
    for (double h : c.half) vol *= 2.0 * h;

    std::copy(c.center.begin(), c.center.end(), x_.begin());
    const cplx f1 = eval();
    cplx f2 = 0.0, f3 = 0.0, f4 = 0.0, f5 = 0.0;
    double worst = -1.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      x_[i] = c.center[i] - l2 * c.half[i];
      const cplx a = eval();
      x_[i] = c.center[i] + l2 * c.half[i];
      const cplx b = eval();
      x_[i] = c.center[i] - l3 * c.half[i];
      const cplx a3 = eval();
      x_[i] = c.center[i] + l3 * c.half[i];
      const cplx b3 = eval();
      x_[i] = c.center[i];
      f2 += a + b;
      f3 += a3 + b3;
      const double diff = std::abs(a + b - 2.0 * f1 - (l2 * l2 / (l3 * l3)) * (a3 + b3 - 2.0 * f1));
      if (diff > worst + 1e-300 * 0.0 && diff > worst) {
        worst = diff;
        c.split_axis = i;
      }
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = i + 1; j < dim_; ++j) {
        for (int si : {-1, 1})
          for (int sj : {-1, 1}) {
            x_[i] = c.center[i] + si * l4 * c.half[i];
            x_[j] = c.center[j] + sj * l4 * c.half[j];
            f4 += eval();
          }
        x_[i] = c.center[i];
        x_[j] = c.center[j];
      }
    }
    const std::size_t corners = std::size_t{1} << dim_;
    for (std::size_t mask = 0; mask < corners; ++mask) {
      for (std::size_t i = 0; i < dim_; ++i)
        x_[i] = c.center[i] + ((mask >> i) & 1 ? l5 : -l5) * c.half[i];
      f5 += eval();
    }
    std::copy(c.center.begin(), c.center.end(), x_.begin());

    const cplx r7 = vol * (w1 * f1 + w2 * f2 + w3 * f3 + w4 * f4 + w5 * f5);
    const cplx r5 = vol * (e1 * f1 + e2 * f2 + e3 * f3 + e4 * f4);
    c.value = r7;
    c.error = std::abs(r7 - r5);
  }

  const Integrand& f_;
  std::size_t dim_;
  std::vector<double> x_;
  std::size_t evals_ = 0;
};

}  // namespace

IntegrationResult integrate(const IntegrationRequest& req) {
  const std::size_t dim = req.lower.size();
  if (dim == 0 || req.upper.size() != dim) throw InvalidInput("integrate: malformed domain");
  if (!req.integrand) throw InvalidInput("integrate: missing integrand");
  if (req.rel_tol < 0.0 || req.abs_tol < 0.0 || !(req.rel_tol > 0.0 || req.abs_tol > 0.0))
    throw InvalidInput("integrate: tolerances must be nonnegative with at least one positive");
  for (std::size_t i = 0; i < dim; ++i)
    if (!std::isfinite(req.lower[i]) || !std::isfinite(req.upper[i]) || !(req.upper[i] > req.lower[i]))
      throw InvalidInput("integrate: domain must be finite with upper > lower");
  if (dim > 12) throw InvalidInput("integrate: dimension too large for Genz-Malik");

  // Initial partition from the oscillation hint.
  std::vector<std::size_t> pieces(dim, 1);
  if (req.oscillation_hint > 0.0) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double w = req.upper[i] - req.lower[i];
      pieces[i] = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::ceil(req.oscillation_hint * w / std::numbers::pi)), 1, 64);
    }
  }

  RuleEvaluator rule(req.integrand, dim);
  std::priority_queue<Cell, std::vector<Cell>, CellOrder> heap;
  cplx total = 0.0;
  double total_err = 0.0;

  std::size_t n_init = 1;
  for (auto p : pieces) n_init *= p;
  for (std::size_t flat = 0; flat < n_init; ++flat) {
    Cell c;
    c.center.resize(dim);
    c.half.resize(dim);
    std::size_t rem = flat;
    for (std::size_t i = 0; i < dim; ++i) {
      const std::size_t k = rem % pieces[i];
      rem /= pieces[i];
      const double w = (req.upper[i] - req.lower[i]) / static_cast<double>(pieces[i]);
      c.half[i] = 0.5 * w;
      c.center[i] = req.lower[i] + (static_cast<double>(k) + 0.5) * w;
    }
    rule.apply(c);
    total += c.value;
    total_err += c.error;
    heap.push(std::move(c));
  }

  IntegrationResult res;
  auto target = [&] { return std::max(req.abs_tol, req.rel_tol * std::abs(total)); };
  while (total_err > target() && res.subdivisions < req.max_subdivisions) {
    Cell worst = heap.top();
    heap.pop();
    total -= worst.value;
    total_err -= worst.error;
    const std::size_t ax = worst.split_axis;
    Cell left = worst, right = worst;
    left.half[ax] = right.half[ax] = 0.5 * worst.half[ax];
    left.center[ax] = worst.center[ax] - left.half[ax];
    right.center[ax] = worst.center[ax] + right.half[ax];
    rule.apply(left);
    rule.apply(right);
    total += left.value + right.value;
    total_err += left.error + right.error;
    heap.push(std::move(left));
    heap.push(std::move(right));
    ++res.subdivisions;
  }
  // Re-sum to shed accumulated cancellation error from the running totals.
  total = 0.0;
  total_err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_err += heap.top().error;
    heap.pop();
  }
  res.value = total;
  res.error_estimate = total_err;
  res.evaluations = rule.evaluations();
  res.converged = total_err <= std::max(req.abs_tol, req.rel_tol * std::abs(total));
  return res;
}

cplx composite_trapezoid(const std::function<cplx(double)>& f, double a, double b, std::size_t n) {
  if (n < 1) throw InvalidInput("composite_trapezoid: n must be >= 1");
  const double h = (b - a) / static_cast<double>(n);
  cplx s = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < n; ++i) s += f(a + h * static_cast<double>(i));
  return s * h;
}

cplx composite_simpson(const std::function<cplx(double)>& f, double a, double b, std::size_t n) {
  if (n < 2 || n % 2) throw InvalidInput("composite_simpson: n must be even and >= 2");
  const double h = (b - a) / static_cast<double>(n);
  cplx s = f(a) + f(b);
  for (std::size_t i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
  return s * h / 3.0;
}

// ---------------------------------------------------------------------------

std::vector<Axis> GridSpec::axes() const {
  validate();
  std::vector<Axis> out;
  for (std::size_t k = 0; k < points.size(); ++k)
    out.push_back(Axis{lo[k], (hi[k] - lo[k]) / static_cast<double>(points[k] - 1), points[k]});
  return out;
}

void GridSpec::validate() const {
  if (lo.size() != hi.size() || lo.size() != points.size() || lo.empty())
    throw InvalidInput("GridSpec: inconsistent axis counts");
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (points[k] < 8) throw InvalidInput("GridSpec: at least 8 points per axis required");
    if (!(hi[k] > lo[k])) throw InvalidInput("GridSpec: empty extent");
  }
  if (!(padding >= 2.0)) throw InvalidInput("GridSpec: padding must be >= 2");
}

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}
}  // namespace

void fft_nd(std::vector<cplx>& data, std::span<const std::size_t> shape, std::span<const int> signs) {
  std::size_t total = 1;
  for (auto s : shape) total *= s;
  if (total != data.size() || signs.size() != shape.size())
    throw InvalidInput("fft_nd: shape/sign mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (shape[k] <= 1) continue;
    std::size_t inner = 1;
    for (std::size_t j = k + 1; j < shape.size(); ++j) inner *= shape[j];
    const std::size_t outer = total / (inner * shape[k]);
    fftw_iodim dims{static_cast<int>(shape[k]), static_cast<int>(inner), static_cast<int>(inner)};
    fftw_iodim how[2] = {
        {static_cast<int>(outer), static_cast<int>(shape[k] * inner), static_cast<int>(shape[k] * inner)},
        {static_cast<int>(inner), 1, 1}};
    fftw_plan plan;
    {
      std::lock_guard lock(planner_mutex());
      plan = fftw_plan_guru_dft(1, &dims, 2, how, buf, buf, signs[k] < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (!plan) throw NumericalError("fft_nd: FFTW planning failed");
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
}

namespace {

template <class T>
Grid<T> convolve_impl(const Grid<T>& a, const Grid<T>& kernel, double padding) {
  const std::size_t r = a.rank();
  if (kernel.rank() != r) throw InvalidInput("fft_convolve: rank mismatch");
  if (!(padding >= 1.0)) throw InvalidInput("fft_convolve: padding must be >= 1");
  for (std::size_t k = 0; k < r; ++k)
    if (std::abs(a.axes[k].step - kernel.axes[k].step) > 1e-12 * std::abs(a.axes[k].step))
      throw InvalidInput("fft_convolve: grid steps differ");

  std::vector<std::size_t> padded(r);
  std::vector<long> keep(r);  // kernel offsets |d| <= keep survive
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t na = a.axes[k].n;
    padded[k] = next_pow2(static_cast<std::size_t>(std::ceil(padding * static_cast<double>(na))));
    keep[k] = static_cast<long>((padded[k] - na) / 2);
  }

  double kmass = 0.0, lost = 0.0;
  for (std::size_t f = 0; f < kernel.size(); ++f) {
    const auto idx = kernel.unravel(f);
    const double m = std::abs(kernel.values[f]);
    kmass += m;
    for (std::size_t k = 0; k < r; ++k) {
      const long d = static_cast<long>(idx[k]) - static_cast<long>(kernel.axes[k].n / 2);
      if (std::abs(d) > keep[k]) {
        lost += m;
        break;
      }
    }
  }
  if (kmass > 0.0 && lost > 1e-12 * kmass)
    throw NumericalError("fft_convolve: padding insufficient, kernel tail mass would wrap around");

  std::size_t total = 1;
  for (auto p : padded) total *= p;
  std::vector<cplx> fa(total, 0.0), fk(total, 0.0);
  std::vector<std::size_t> pidx(r);
  auto pflat = [&](std::span<const std::size_t> idx) {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < r; ++k) flat = flat * padded[k] + idx[k];
    return flat;
  };
  for (std::size_t f = 0; f < a.size(); ++f) {
    const auto idx = a.unravel(f);
    fa[pflat(idx)] = a.values[f];
  }
  for (std::size_t f = 0; f < kernel.size(); ++f) {
    const auto idx = kernel.unravel(f);
    bool ok = true;
    for (std::size_t k = 0; k < r; ++k) {
      const long d = static_cast<long>(idx[k]) - static_cast<long>(kernel.axes[k].n / 2);
      if (std::abs(d) > keep[k]) ok = false;
      const long p = static_cast<long>(padded[k]);
      pidx[k] = static_cast<std::size_t>(((d % p) + p) % p);
    }
    if (ok) fk[pflat(pidx)] = kernel.values[f];
  }
  std::vector<int> fwd(r, -1), bwd(r, +1);
  fft_nd(fa, padded, fwd);
  fft_nd(fk, padded, fwd);
  for (std::size_t i = 0; i < total; ++i) fa[i] *= fk[i];
  fft_nd(fa, padded, bwd);

  Grid<T> out(a.axes);
  const double scale = kernel.cell_volume() / static_cast<double>(total);
  for (std::size_t f = 0; f < out.size(); ++f) {
    const auto idx = out.unravel(f);
    const cplx v = fa[pflat(idx)] * scale;
    if constexpr (std::is_same_v<T, double>)
      out.values[f] = v.real();
    else
      out.values[f] = v;
  }
  return out;
}

}  // namespace

RealGrid fft_convolve(const RealGrid& a, const RealGrid& kernel, double padding) {
  return convolve_impl(a, kernel, padding);
}

ComplexGrid fft_convolve(const ComplexGrid& a, const ComplexGrid& kernel, double padding) {
  return convolve_impl(a, kernel, padding);
}

ComplexGrid direct_convolve(const ComplexGrid& a, const ComplexGrid& kernel) {
  const std::size_t r = a.rank();
  if (kernel.rank() != r) throw InvalidInput("direct_convolve: rank mismatch");
  ComplexGrid out(a.axes);
  const double vol = kernel.cell_volume();
  // Offset of every kernel cell from the kernel centre, per axis.
  std::vector<long> offset(kernel.size() * r);
  for (std::size_t f = 0; f < kernel.size(); ++f) {
    const auto idx = kernel.unravel(f);
    for (std::size_t k = 0; k < r; ++k)
      offset[f * r + k] = static_cast<long>(idx[k]) - static_cast<long>(kernel.axes[k].n / 2);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto oi = out.unravel(i);
    cplx s = 0.0;
    for (std::size_t f = 0; f < kernel.size(); ++f) {
      std::size_t flat = 0;
      bool ok = true;
      for (std::size_t k = 0; k < r && ok; ++k) {
        const long j = static_cast<long>(oi[k]) - offset[f * r + k];
        ok = j >= 0 && j < static_cast<long>(a.axes[k].n);
        flat = flat * a.axes[k].n + static_cast<std::size_t>(j);
      }
      if (ok) s += a.values[flat] * kernel.values[f];
    }
    out.values[i] = s * vol;
  }
  return out;
}

namespace {

std::vector<Axis> wigner_axes(const ComplexGrid& g) {
  std::vector<Axis> out;
  for (const auto& ax : g.axes) {
    if (ax.n % 2) throw InvalidInput("wigner_transform: even point counts required");
    const double centre = ax.lo + ax.step * static_cast<double>(ax.n / 2);
    if (std::abs(centre) > 1e-9 * ax.step * static_cast<double>(ax.n))
      throw InvalidInput("wigner_transform: relative-coordinate axis must be centred (lo = -n/2 h)");
    const double dxi = 2.0 * std::numbers::pi / (static_cast<double>(ax.n) * ax.step);
    out.push_back(Axis{-dxi * static_cast<double>(ax.n / 2), dxi, ax.n});
  }
  return out;
}

}  // namespace

ComplexGrid wigner_transform(const ComplexGrid& g, double tail_tol) {
  const std::size_t r = g.rank();
  ComplexGrid out(wigner_axes(g));

  double mass = 0.0, edge = 0.0;
  for (std::size_t f = 0; f < g.size(); ++f) {
    const auto idx = g.unravel(f);
    const double m = std::abs(g.values[f]);
    mass += m;
    for (std::size_t k = 0; k < r; ++k)
      if (idx[k] == 0 || idx[k] + 1 == g.axes[k].n) {
        edge += m;
        break;
      }
  }
  if (mass > 0.0 && edge > tail_tol * mass)
    throw NumericalError("wigner_transform: sampled function does not decay at the grid edge");

  std::vector<cplx> data = g.values;
  for (std::size_t f = 0; f < data.size(); ++f) {
    const auto idx = g.unravel(f);
    std::size_t parity = 0;
    for (auto i : idx) parity += i;
    if (parity % 2) data[f] = -data[f];
  }
  std::vector<int> signs(r, -1);
  signs[0] = +1;  // +i xi0 y0, -i xi.y
  const auto shape = g.shape();
  fft_nd(data, shape, signs);
  const double vol = g.cell_volume();
  for (std::size_t f = 0; f < data.size(); ++f) {
    const auto idx = out.unravel(f);
    std::size_t parity = 0;
    for (std::size_t k = 0; k < r; ++k) parity += idx[k] + g.axes[k].n / 2;
    out.values[f] = (parity % 2 ? -1.0 : 1.0) * vol * data[f];
  }
  return out;
}

ComplexGrid direct_wigner_transform(const ComplexGrid& g) {
  const std::size_t r = g.rank();
  ComplexGrid out(wigner_axes(g));
  const double vol = g.cell_volume();
  for (std::size_t m = 0; m < out.size(); ++m) {
    const auto mi = out.unravel(m);
    cplx s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto ji = g.unravel(j);
      double phase = 0.0;
      for (std::size_t k = 0; k < r; ++k) {
        const double xi = out.axes[k].at(mi[k]);
        const double y = g.axes[k].at(ji[k]);
        phase += (k == 0 ? 1.0 : -1.0) * xi * y;
      }
      s += g.values[j] * std::polar(1.0, phase);
    }
    out.values[m] = s * vol;
  }
  return out;
}

}  // namespace qtp
