#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nlslab {

/// Base exception for every recoverable failure in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

/// Periodic cubic box [-L, L)^3 sampled with n points per axis.
///
/// Node i on an axis sits at -L + (i + offset) dx, where offset is 0 for the
/// standard grid (which contains the origin) and 1/2 for a staggered grid
/// (which avoids it). Wavenumbers follow the usual FFT layout:
/// k_i = pi m / L with m = i for i < n/2 and m = i - n otherwise.
/// Flat indices are x-fastest: idx = i + n (j + n k).
class Grid3 {
 public:
  Grid3(std::size_t n, double half_width, bool staggered = false)
      : n_(n), half_width_(half_width), staggered_(staggered) {
    if (n < 8 || (n & (n - 1)) != 0) {
      throw Error("Grid3: n must be a power of two >= 8, got " + std::to_string(n));
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
      throw Error("Grid3: half width must be positive and finite");
    }
    dx_ = 2.0 * half_width_ / static_cast<double>(n_);
  }

  std::size_t n() const { return n_; }
  double half_width() const { return half_width_; }
  bool staggered() const { return staggered_; }
  double dx() const { return dx_; }
  std::size_t size() const { return n_ * n_ * n_; }
  double cell_volume() const { return dx_ * dx_ * dx_; }
  double box_volume() const { return std::pow(2.0 * half_width_, 3); }

  double coord(std::size_t i) const {
    return -half_width_ + (static_cast<double>(i) + (staggered_ ? 0.5 : 0.0)) * dx_;
  }

  /// Signed mode number m in [-n/2, n/2).
  long mode(std::size_t i) const {
    const long li = static_cast<long>(i);
    const long ln = static_cast<long>(n_);
    return li < ln / 2 ? li : li - ln;
  }
  double wavenumber(std::size_t i) const {
    return std::numbers::pi * static_cast<double>(mode(i)) / half_width_;
  }
  bool is_nyquist(std::size_t i) const { return i == n_ / 2; }
  double max_wavenumber_sq() const {
    const double kmax = std::numbers::pi * static_cast<double>(n_ / 2) / half_width_;
    return 3.0 * kmax * kmax;
  }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + n_ * (j + n_ * k); }
  std::array<std::size_t, 3> unravel(std::size_t idx) const {
    return {idx % n_, (idx / n_) % n_, idx / (n_ * n_)};
  }
  Vec3 position(std::size_t idx) const {
    const auto ijk = unravel(idx);
    return {coord(ijk[0]), coord(ijk[1]), coord(ijk[2])};
  }

  /// Wraps a displacement into [-L, L) per axis (minimum-image convention).
  Vec3 wrap(Vec3 d) const {
    const double period = 2.0 * half_width_;
    for (double& c : d) {
      c -= period * std::floor((c + half_width_) / period);
    }
    return d;
  }

  friend bool operator==(const Grid3& a, const Grid3& b) {
    return a.n_ == b.n_ && a.half_width_ == b.half_width_ && a.staggered_ == b.staggered_;
  }

 private:
  std::size_t n_;
  double half_width_;
  bool staggered_;
  double dx_;
};

inline void require_same_grid(const Grid3& a, const Grid3& b, const char* where) {
  if (!(a == b)) {
    throw Error(std::string(where) + ": grid mismatch");
  }
}

}  // namespace nlslab
