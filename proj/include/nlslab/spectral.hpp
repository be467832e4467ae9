#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

#include "nlslab/field.hpp"

namespace nlslab {

namespace detail {
// FFTW's planner is not reentrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

using Spectrum = std::vector<Complex>;

/// FFT plans, scratch buffer and wavenumber tables for one grid.
///
/// Plans use FFTW_ESTIMATE so the chosen algorithm (and therefore every bit
/// of output) does not depend on timing measurements. A workspace is owned by
/// one thread at a time; create one per worker.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(const Grid3& grid) : grid_(grid) {
    const std::size_t n = grid.n();
    buffer_ = reinterpret_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * grid.size()));
    if (buffer_ == nullptr) throw Error("SpectralWorkspace: allocation failed");
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      const int ni = static_cast<int>(n);
      forward_ = fftw_plan_dft_3d(ni, ni, ni, buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_3d(ni, ni, ni, buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    k_.resize(n);
    for (std::size_t i = 0; i < n; ++i) k_[i] = grid.wavenumber(i);
    k2_.resize(grid.size());
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
      const auto ijk = grid.unravel(idx);
      k2_[idx] = k_[ijk[0]] * k_[ijk[0]] + k_[ijk[1]] * k_[ijk[1]] + k_[ijk[2]] * k_[ijk[2]];
    }
  }

  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  ~SpectralWorkspace() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
    if (buffer_) fftw_free(buffer_);
  }

  const Grid3& grid() const { return grid_; }
  /// Axis wavenumbers, indexed like the grid axis.
  const std::vector<double>& k() const { return k_; }
  /// |k|^2 for every flat index.
  const std::vector<double>& k_squared() const { return k2_; }

  /// Unnormalized forward DFT.
  Spectrum forward(std::span<const Complex> values) {
    check_size(values.size());
    std::memcpy(buffer_, values.data(), sizeof(fftw_complex) * values.size());
    fftw_execute(forward_);
    Spectrum out(values.size());
    std::memcpy(static_cast<void*>(out.data()), buffer_, sizeof(fftw_complex) * values.size());
    return out;
  }
  Spectrum forward(const Field& u) {
    require_same_grid(u.grid(), grid_, "SpectralWorkspace::forward");
    return forward(u.values());
  }
  Spectrum forward(const RealField& u) {
    require_same_grid(u.grid(), grid_, "SpectralWorkspace::forward");
    auto* b = reinterpret_cast<Complex*>(buffer_);
    for (std::size_t i = 0; i < u.size(); ++i) b[i] = u[i];
    fftw_execute(forward_);
    Spectrum out(u.size());
    std::memcpy(static_cast<void*>(out.data()), buffer_, sizeof(fftw_complex) * u.size());
    return out;
  }

  /// Inverse DFT including the 1/N normalization.
  Field inverse(std::span<const Complex> spectrum) {
    check_size(spectrum.size());
    std::memcpy(buffer_, spectrum.data(), sizeof(fftw_complex) * spectrum.size());
    fftw_execute(backward_);
    Field out(grid_);
    const double scale = 1.0 / static_cast<double>(grid_.size());
    auto* b = reinterpret_cast<const Complex*>(buffer_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = b[i] * scale;
    return out;
  }

  /// In-place transforms used by the propagator (no normalization on either).
  void forward_in_place(Field& u) { execute_in_place(forward_, u); }
  void backward_in_place(Field& u) { execute_in_place(backward_, u); }

  /// Applies a Fourier multiplier m(kx, ky, kz) to u.
  template <class M>
  Field apply(const Field& u, M&& multiplier) {
    Spectrum s = forward(u);
    for (std::size_t idx = 0; idx < s.size(); ++idx) {
      const auto ijk = grid_.unravel(idx);
      s[idx] *= multiplier(k_[ijk[0]], k_[ijk[1]], k_[ijk[2]]);
    }
    return inverse(s);
  }

  /// Spectral partial derivative along one axis of a spectrum, returned in
  /// physical space.
  Field derivative(const Spectrum& s, int axis) {
    Spectrum d(s.size());
    for (std::size_t idx = 0; idx < s.size(); ++idx) {
      const auto ijk = grid_.unravel(idx);
      d[idx] = Complex(0.0, k_[ijk[axis]]) * s[idx];
    }
    return inverse(d);
  }

  std::array<Field, 3> gradient(const Field& u) {
    const Spectrum s = forward(u);
    return {derivative(s, 0), derivative(s, 1), derivative(s, 2)};
  }

  Field laplacian(const Field& u) {
    Spectrum s = forward(u);
    for (std::size_t idx = 0; idx < s.size(); ++idx) s[idx] *= -k2_[idx];
    return inverse(s);
  }

  /// Integral of |grad u|^2, evaluated as a weighted Parseval sum.
  double h1_seminorm_sq(const Field& u) {
    const Spectrum s = forward(u);
    return h1_seminorm_sq(s);
  }
  double h1_seminorm_sq(const Spectrum& s) const {
    double acc = 0.0;
    for (std::size_t idx = 0; idx < s.size(); ++idx) acc += k2_[idx] * std::norm(s[idx]);
    return acc * grid_.cell_volume() / static_cast<double>(grid_.size());
  }
  /// Integral of |u|^2 evaluated in frequency space.
  double l2_norm_sq(const Spectrum& s) const {
    double acc = 0.0;
    for (const auto& c : s) acc += std::norm(c);
    return acc * grid_.cell_volume() / static_cast<double>(grid_.size());
  }

  /// Per-axis multipliers translating a band-limited field by y.
  ///
  /// The Nyquist mode uses cos(k y) so real fields stay real.
  std::array<std::vector<Complex>, 3> shift_factors(const Vec3& y) const {
    std::array<std::vector<Complex>, 3> f;
    const std::size_t n = grid_.n();
    for (int a = 0; a < 3; ++a) {
      f[a].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double ky = k_[i] * y[a];
        f[a][i] = grid_.is_nyquist(i) ? Complex(std::cos(ky), 0.0) : std::polar(1.0, -ky);
      }
    }
    return f;
  }

  /// u(. - y) through the trigonometric interpolant of u.
  Field shift(const Field& u, const Vec3& y) {
    Spectrum s = forward(u);
    shift_spectrum(s, y);
    return inverse(s);
  }
  void shift_spectrum(Spectrum& s, const Vec3& y) const {
    const auto f = shift_factors(y);
    for (std::size_t idx = 0; idx < s.size(); ++idx) {
      const auto ijk = grid_.unravel(idx);
      s[idx] *= f[0][ijk[0]] * f[1][ijk[1]] * f[2][ijk[2]];
    }
  }

  /// Periodic convolution (integral of a(x - z) b(z) dz) of two real fields.
  RealField convolve(const RealField& a, const RealField& b) {
    Spectrum sa = forward(a);
    const Spectrum sb = forward(b);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] *= sb[i];
    Field c = inverse(sa);
    RealField out(grid_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c[i].real() * grid_.cell_volume();
    return out;
  }

 private:
  void check_size(std::size_t n) const {
    if (n != grid_.size()) throw Error("SpectralWorkspace: array size does not match grid");
  }
  void execute_in_place(fftw_plan plan, Field& u) {
    require_same_grid(u.grid(), grid_, "SpectralWorkspace::execute_in_place");
    auto* p = reinterpret_cast<fftw_complex*>(u.data());
    if (fftw_alignment_of(reinterpret_cast<double*>(p)) == fftw_alignment_of(reinterpret_cast<double*>(buffer_))) {
      fftw_execute_dft(plan, p, p);
    } else {
      std::memcpy(buffer_, p, sizeof(fftw_complex) * u.size());
      fftw_execute(plan);
      std::memcpy(p, buffer_, sizeof(fftw_complex) * u.size());
    }
  }

  Grid3 grid_;
  fftw_complex* buffer_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  std::vector<double> k_;
  std::vector<double> k2_;
};

/// Norm of the gradient computed from its components: sum_j ||d_j u||^2.
inline double gradient_l2_sq(const std::array<Field, 3>& g) {
  return l2_norm_sq(g[0]) + l2_norm_sq(g[1]) + l2_norm_sq(g[2]);
}

}  // namespace nlslab
