#include "qtp/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qtp/error.hpp"

namespace qtp {

void require_dimension(int dim) {
  if (dim != 2 && dim != 4) {
    throw InvalidInput("unsupported spacetime dimension " + std::to_string(dim) +
                       " (expected 2 or 4)");
  }
}

FourVector::FourVector(int dim) : dim_(dim) { require_dimension(dim); }

FourVector::FourVector(std::initializer_list<double> comps)
    : dim_(static_cast<int>(comps.size())) {
  require_dimension(dim_);
  std::size_t i = 0;
  for (double v : comps) c_[i++] = v;
}

FourVector::FourVector(double t, double x) : dim_(2), c_{t, x, 0.0, 0.0} {}

FourVector::FourVector(double t, double x, double y, double z)
    : dim_(4), c_{t, x, y, z} {}

double FourVector::spatial_norm2() const {
  double s = 0.0;
  for (int i = 1; i < dim_; ++i) s += c_[i] * c_[i];
  return s;
}

FourVector& FourVector::operator+=(const FourVector& o) {
  if (o.dim_ != dim_) throw InvalidInput("FourVector dimension mismatch");
  for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
  return *this;
}

FourVector& FourVector::operator-=(const FourVector& o) {
  if (o.dim_ != dim_) throw InvalidInput("FourVector dimension mismatch");
  for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
  return *this;
}

FourVector& FourVector::operator*=(double s) {
  for (int i = 0; i < dim_; ++i) c_[i] *= s;
  return *this;
}

bool operator==(const FourVector& a, const FourVector& b) {
  if (a.dim_ != b.dim_) return false;
  for (int i = 0; i < a.dim_; ++i)
    if (a.c_[i] != b.c_[i]) return false;
  return true;
}

bool FourVector::finite() const {
  for (int i = 0; i < dim_; ++i)
    if (!std::isfinite(c_[i])) return false;
  return true;
}

double minkowski_dot(const FourVector& u, const FourVector& v) {
  if (u.dim() != v.dim()) throw InvalidInput("minkowski_dot: dimension mismatch");
  double s = u[0] * v[0];
  for (int i = 1; i < u.dim(); ++i) s -= u[i] * v[i];
  return s;
}

Worldline::Worldline(FourVector b, FourVector v) : base(b), velocity(v) {
  if (base.dim() != velocity.dim()) throw InvalidInput("Worldline: dimension mismatch");
  if (std::abs(minkowski_dot(velocity, velocity) - 1.0) > 1e-12 || velocity.t() <= 0.0)
    throw InvalidInput("Worldline: velocity must be a future-directed unit timelike vector");
}

Worldline Worldline::at_rest(const FourVector& base) {
  FourVector v(base.dim());
  v[0] = 1.0;
  return Worldline(base, v);
}

FourVector Worldline::at(double tau) const { return base + tau * velocity; }

SamplingFunction::SamplingFunction(double dt, double dx, FourVector c)
    : delta_t(dt), delta_x(dx), center(c) {
  if (!(dt > 0.0) || !(dx > 0.0) || !std::isfinite(dt) || !std::isfinite(dx))
    throw InvalidInput("SamplingFunction: delta_t and delta_x must be positive and finite");
  if (!center.finite()) throw InvalidInput("SamplingFunction: non-finite center");
}

namespace {
double gaussian_exponent(const SamplingFunction& f, const FourVector& d) {
  return -d[0] * d[0] / (2.0 * f.delta_t * f.delta_t) -
         d.spatial_norm2() / (2.0 * f.delta_x * f.delta_x);
}
}  // namespace

double sampling_value(const SamplingFunction& f, const FourVector& y) {
  return std::exp(gaussian_exponent(f, y - f.center));
}

double sqrt_sampling_value(const SamplingFunction& f, const FourVector& y) {
  return std::exp(0.5 * gaussian_exponent(f, y));
}

double spacetime_volume(const SamplingFunction& f) {
  using std::numbers::pi;
  switch (f.dim()) {
    case 2:
      return pi * f.delta_t * f.delta_x;
    case 4:
      return pi * pi * f.delta_t * f.delta_x * f.delta_x * f.delta_x;
    default:
      throw InvalidInput("spacetime_volume: unsupported dimension");
  }
}

double smearing_density(const SamplingFunction& f, const FourVector& x) {
  const double v = sampling_value(f, x);
  return v * v / spacetime_volume(f);
}

}  // namespace qtp
