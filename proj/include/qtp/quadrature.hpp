#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qtp {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Adaptive cubature
// ---------------------------------------------------------------------------

using Integrand = std::function<cplx(std::span<const double>)>;

struct IntegrationRequest {
  Integrand integrand;
  std::vector<double> lower;
  std::vector<double> upper;
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  std::size_t max_subdivisions = 20000;
  /// Dominant angular frequency of the integrand (0 = none). Used to
  /// pre-split each axis so that no initial cell spans more than half a period.
  double oscillation_hint = 0.0;
};

struct IntegrationResult {
  cplx value;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  std::size_t subdivisions = 0;
  bool converged = false;
};

/// Adaptive nested-rule quadrature: Gauss-Kronrod 7/15 in one dimension,
/// Genz-Malik 7/5 in two or more. Cells are bisected in order of their
/// embedded-rule error. A budget overrun returns the partial result with
/// converged = false; InvalidInput is thrown for malformed requests.
IntegrationResult integrate(const IntegrationRequest& req);

/// Fixed composite rules, used for convergence-order checks.
cplx composite_trapezoid(const std::function<cplx(double)>& f, double a, double b, std::size_t n);
cplx composite_simpson(const std::function<cplx(double)>& f, double a, double b, std::size_t n);

// ---------------------------------------------------------------------------
// Uniform grids, FFT convolution and Wigner transforms
// ---------------------------------------------------------------------------

struct Axis {
  double lo = 0.0;
  double step = 1.0;
  std::size_t n = 0;
  double at(std::size_t i) const { return lo + step * static_cast<double>(i); }
  double hi() const { return at(n - 1); }
};

/// Row-major N-dimensional array of samples on a uniform grid.
template <class T>
struct Grid {
  std::vector<Axis> axes;
  std::vector<T> values;

  Grid() = default;
  explicit Grid(std::vector<Axis> ax) : axes(std::move(ax)), values(total(axes)) {}

  static std::size_t total(const std::vector<Axis>& ax) {
    std::size_t n = 1;
    for (const auto& a : ax) n *= a.n;
    return n;
  }
  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return axes.size(); }
  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s;
    for (const auto& a : axes) s.push_back(a.n);
    return s;
  }
  std::vector<std::size_t> unravel(std::size_t flat) const {
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
      idx[k] = flat % axes[k].n;
      flat /= axes[k].n;
    }
    return idx;
  }
  std::size_t ravel(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < axes.size(); ++k) flat = flat * axes[k].n + idx[k];
    return flat;
  }
  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes) v *= a.step;
    return v;
  }
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<cplx>;

struct GridSpec {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::size_t> points;  // powers of two for FFT paths
  double padding = 2.0;             // padded length = padding * n per axis

  std::vector<Axis> axes() const;
  void validate() const;
};

/// In-place multidimensional DFT along every axis with a per-axis sign:
/// out[m] = sum_j in[j] exp(sign[k] * 2 pi i j m / n) (unnormalized).
void fft_nd(std::vector<cplx>& data, std::span<const std::size_t> shape,
            std::span<const int> signs);

/// Linear (non-circular) convolution of `a` with a centered kernel:
///   out[i] = sum_j a[j] * kernel[i - j + c] * cell_volume(kernel),
/// c = kernel center index (n_k / 2 per axis). The result lives on a's grid.
/// Throws NumericalError if the padding would let kernel mass wrap around.
RealGrid fft_convolve(const RealGrid& a, const RealGrid& kernel, double padding = 2.0);
ComplexGrid fft_convolve(const ComplexGrid& a, const ComplexGrid& kernel, double padding = 2.0);

/// Direct O(N^2) version of fft_convolve (oracle for tests).
ComplexGrid direct_convolve(const ComplexGrid& a, const ComplexGrid& kernel);

/// Wigner-type transform W(xi) = integral d^D y exp(i xi.y) G(y) with the
/// Minkowski product xi.y = xi0 y0 - xi.y (axis 0 is time). Input axes must
/// be symmetric uniform grids with an even number of points; the output
/// grid is xi_m = 2 pi m / (n h), m = -n/2 .. n/2 - 1 per axis.
/// Throws NumericalError when the boundary layer carries more than
/// `tail_tol` of the total |G| mass.
ComplexGrid wigner_transform(const ComplexGrid& g, double tail_tol = 1e-6);

/// Direct-sum version of wigner_transform (oracle for tests).
ComplexGrid direct_wigner_transform(const ComplexGrid& g);

}  // namespace qtp
