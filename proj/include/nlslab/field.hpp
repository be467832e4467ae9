#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <vector>

#include "nlslab/grid.hpp"

namespace nlslab {

using Complex = std::complex<double>;

/// Samples of a scalar quantity on every node of a Grid3, x-fastest.
template <class T>
class GridFunction {
 public:
  using value_type = T;

  explicit GridFunction(const Grid3& grid) : grid_(grid), values_(grid.size(), T{}) {}
  GridFunction(const Grid3& grid, std::vector<T> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw Error("GridFunction: expected n^3 samples");
    }
  }

  const Grid3& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  GridFunction& operator+=(const GridFunction& o) {
    require_same_grid(grid_, o.grid_, "GridFunction::operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    require_same_grid(grid_, o.grid_, "GridFunction::operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  template <class S>
  GridFunction& operator*=(S s) {
    for (auto& v : values_) v *= s;
    return *this;
  }

  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  template <class S>
  friend GridFunction operator*(S s, GridFunction a) {
    return a *= s;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](const T& v) {
      if constexpr (std::is_same_v<T, Complex>) {
        return std::isfinite(v.real()) && std::isfinite(v.imag());
      } else {
        return std::isfinite(v);
      }
    });
  }

 private:
  Grid3 grid_;
  std::vector<T> values_;
};

using Field = GridFunction<Complex>;
using RealField = GridFunction<double>;

inline RealField real_part(const Field& u) {
  RealField out(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i].real();
  return out;
}
inline RealField imag_part(const Field& u) {
  RealField out(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i].imag();
  return out;
}
inline Field to_complex(const RealField& f) {
  Field out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
  return out;
}
inline RealField modulus_sq(const Field& u) {
  RealField out(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::norm(u[i]);
  return out;
}

/// Samples f at every node. Throws if any sample is not finite.
template <class F>
  requires std::invocable<F, const Vec3&>
Field sample(const Grid3& grid, F&& f) {
  Field out(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const Vec3 x = grid.position(idx);
    const Complex v = f(x);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      const auto ijk = grid.unravel(idx);
      std::ostringstream msg;
      msg << "sample: non-finite value at node (" << ijk[0] << ", " << ijk[1] << ", " << ijk[2] << ") x=("
          << x[0] << ", " << x[1] << ", " << x[2] << ")";
      throw Error(msg.str());
    }
    out[idx] = v;
  }
  return out;
}

template <class F>
  requires std::invocable<F, const Vec3&>
RealField sample_real(const Grid3& grid, F&& f) {
  RealField out(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const double v = f(grid.position(idx));
    if (!std::isfinite(v)) {
      const auto ijk = grid.unravel(idx);
      std::ostringstream msg;
      msg << "sample_real: non-finite value at node (" << ijk[0] << ", " << ijk[1] << ", " << ijk[2] << ")";
      throw Error(msg.str());
    }
    out[idx] = v;
  }
  return out;
}

// Nodal quadrature: every integral is dx^3 times the nodal sum.

inline double l2_norm_sq(const Field& u) {
  double s = 0.0;
  for (const auto& v : u.values()) s += std::norm(v);
  return s * u.grid().cell_volume();
}
inline double l2_norm_sq(const RealField& u) {
  double s = 0.0;
  for (double v : u.values()) s += v * v;
  return s * u.grid().cell_volume();
}

inline double l4_norm_4(const Field& u) {
  double s = 0.0;
  for (const auto& v : u.values()) {
    const double a = std::norm(v);
    s += a * a;
  }
  return s * u.grid().cell_volume();
}

/// <u, v> = integral of conj(u) v.
inline Complex inner(const Field& u, const Field& v) {
  require_same_grid(u.grid(), v.grid(), "inner");
  Complex s{0.0, 0.0};
  for (std::size_t i = 0; i < u.size(); ++i) s += std::conj(u[i]) * v[i];
  return s * u.grid().cell_volume();
}
inline double inner(const RealField& u, const RealField& v) {
  require_same_grid(u.grid(), v.grid(), "inner");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s * u.grid().cell_volume();
}
/// <f, u> for a real weight f and complex u.
inline Complex inner(const RealField& f, const Field& u) {
  require_same_grid(f.grid(), u.grid(), "inner");
  Complex s{0.0, 0.0};
  for (std::size_t i = 0; i < u.size(); ++i) s += f[i] * u[i];
  return s * u.grid().cell_volume();
}

/// Integral of w |u|^2.
inline double weighted_mass(const RealField& w, const Field& u) {
  require_same_grid(w.grid(), u.grid(), "weighted_mass");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += w[i] * std::norm(u[i]);
  return s * u.grid().cell_volume();
}

inline double max_abs(const Field& u) {
  double m = 0.0;
  for (const auto& v : u.values()) m = std::max(m, std::abs(v));
  return m;
}
inline double max_abs(const RealField& u) {
  double m = 0.0;
  for (double v : u.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace nlslab
