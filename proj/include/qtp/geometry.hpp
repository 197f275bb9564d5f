#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>

namespace qtp {

/// Spacetime point or four-momentum in D = 2 or D = 4 dimensions.
/// Component 0 is time; signature (+, -, -, -), natural units.
class FourVector {
 public:
  static constexpr int kMaxDim = 4;

  FourVector() = default;
  explicit FourVector(int dim);
  FourVector(std::initializer_list<double> comps);
  FourVector(double t, double x);                       // D = 2
  FourVector(double t, double x, double y, double z);   // D = 4

  int dim() const { return dim_; }
  double t() const { return c_[0]; }
  double operator[](std::size_t i) const { return c_[i]; }
  double& operator[](std::size_t i) { return c_[i]; }
  double spatial_norm2() const;

  FourVector& operator+=(const FourVector& o);
  FourVector& operator-=(const FourVector& o);
  FourVector& operator*=(double s);

  friend FourVector operator+(FourVector a, const FourVector& b) { return a += b; }
  friend FourVector operator-(FourVector a, const FourVector& b) { return a -= b; }
  friend FourVector operator*(double s, FourVector a) { return a *= s; }
  friend FourVector operator-(FourVector a) { return a *= -1.0; }
  friend bool operator==(const FourVector& a, const FourVector& b);

  bool finite() const;

 private:
  int dim_ = 2;
  std::array<double, kMaxDim> c_{};
};

/// u^0 v^0 - u.v ; throws InvalidInput on dimension mismatch.
double minkowski_dot(const FourVector& u, const FourVector& v);

void require_dimension(int dim);

/// Inertial worldline x(tau) = base + tau * velocity.
struct Worldline {
  FourVector base;
  FourVector velocity;

  Worldline(FourVector base, FourVector velocity);
  static Worldline at_rest(const FourVector& base);
  FourVector at(double tau) const;
};

/// Gaussian sampling function
///   f(y) = exp[-(y0 - c0)^2 / (2 dt^2) - |y - c|^2 / (2 dx^2)].
struct SamplingFunction {
  double delta_t = 1.0;
  double delta_x = 1.0;
  FourVector center;

  SamplingFunction(double delta_t, double delta_x, FourVector center);
  int dim() const { return center.dim(); }
};

double sampling_value(const SamplingFunction& f, const FourVector& y);

/// sqrt(f) evaluated at a displacement y (centered at the origin).
double sqrt_sampling_value(const SamplingFunction& f, const FourVector& y);

/// Integral of f^2 over spacetime: pi^2 dt dx^3 (D = 4), pi dt dx (D = 2).
double spacetime_volume(const SamplingFunction& f);

/// sigma(x) = f(x)^2 / volume, a normalized density.
double smearing_density(const SamplingFunction& f, const FourVector& x);

}  // namespace qtp
