#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "nlslab/diagnostics.hpp"
#include "nlslab/field.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/spectral.hpp"

namespace nlslab {

/// The orbit {e^{i theta} Q(. - y)} on one grid, generated from the Fourier
/// coefficients of a centered ground state so that translates by any y are
/// exact trigonometric shifts.
class SolitonFamily {
 public:
  /// q: real ground state centered at the origin node.
  explicit SolitonFamily(const RealField& q) : grid_(q.grid()), ws_(q.grid()), q_(q) {
    spectrum_ = ws_.forward(q);
    constants_ = nlslab::constants(q, ws_);
  }

  static SolitonFamily from_profile(const Grid3& grid, const GroundStateProfile& profile) {
    const Field s = nlslab::soliton(grid, profile, 0.0, Vec3{0, 0, 0});
    return SolitonFamily(real_part(s));
  }

  const Grid3& grid() const { return grid_; }
  SpectralWorkspace& workspace() { return ws_; }
  const Spectrum& spectrum() const { return spectrum_; }
  const RealField& centered() const { return q_; }
  /// Norms of the grid ground state itself (not of the continuum profile).
  const GroundStateConstants& constants() const { return constants_; }

  /// Fourier coefficients of Q(. - y).
  Spectrum shifted_spectrum(const Vec3& y) const {
    Spectrum s = spectrum_;
    ws_.shift_spectrum(s, y);
    return s;
  }

  RealField profile_at(const Vec3& y) { return real_part(ws_.inverse(shifted_spectrum(y))); }

  std::array<RealField, 3> gradient_at(const Vec3& y) {
    const Spectrum s = shifted_spectrum(y);
    return {real_part(ws_.derivative(s, 0)), real_part(ws_.derivative(s, 1)), real_part(ws_.derivative(s, 2))};
  }

  RealField laplacian_at(const Vec3& y) {
    Spectrum s = shifted_spectrum(y);
    const auto& k2 = ws_.k_squared();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= -k2[i];
    return real_part(ws_.inverse(s));
  }

  Field soliton(double theta, const Vec3& y) {
    Field f = ws_.inverse(shifted_spectrum(y));
    const Complex ph = std::polar(1.0, theta);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = ph * f[i].real();
    return f;
  }

 private:
  Grid3 grid_;
  mutable SpectralWorkspace ws_;
  RealField q_;
  Spectrum spectrum_;
  GroundStateConstants constants_;
};

/// L+ f = -Laplacian f + f - 3 Q^2 f and L- f = -Laplacian f + f - Q^2 f about Q(. - y).
class LinearizedOps {
 public:
  LinearizedOps(SolitonFamily& family, const Vec3& y) : family_(family), q2_(family.profile_at(y)) {
    for (auto& v : q2_.values()) v *= v;
  }

  const RealField& q_squared() const { return q2_; }

  RealField apply_Lplus(const RealField& f) { return apply(f, 3.0); }
  RealField apply_Lminus(const RealField& f) { return apply(f, 1.0); }

  /// B(g, g) = integral 1/2 |grad g|^2 + 1/2 |g|^2 - (3/2 g1^2 + 1/2 g2^2) Q^2.
  double bilinear_B(const Field& g) {
    SpectralWorkspace& ws = family_.workspace();
    double pot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      pot += (1.5 * g[i].real() * g[i].real() + 0.5 * g[i].imag() * g[i].imag()) * q2_[i];
    }
    pot *= g.grid().cell_volume();
    return 0.5 * ws.h1_seminorm_sq(g) + 0.5 * l2_norm_sq(g) - pot;
  }

  /// The same form as 1/2 <L+ g1, g1> + 1/2 <L- g2, g2>.
  double bilinear_B_operator(const Field& g) {
    const RealField g1 = real_part(g), g2 = imag_part(g);
    return 0.5 * inner(apply_Lplus(g1), g1) + 0.5 * inner(apply_Lminus(g2), g2);
  }

 private:
  RealField apply(const RealField& f, double c) {
    SpectralWorkspace& ws = family_.workspace();
    const Field lap = ws.laplacian(to_complex(f));
    RealField out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = -lap[i].real() + f[i] - c * q2_[i] * f[i];
    return out;
  }

  SolitonFamily& family_;
  RealField q2_;
};

struct ModulationFit {
  explicit ModulationFit(const Grid3& grid) : g(grid), h(grid) {}

  double theta = 0.0;  ///< in (-pi, pi]
  Vec3 y{};
  Field g;
  double alpha = 0.0;
  Field h;
  /// Im<e^{i theta} Q_y, u>, Re<e^{i theta} d_j Q_y, u>, j = 1..3.
  std::array<double, 4> ortho{};
  int iterations = 0;

  double ortho_norm() const {
    return std::sqrt(ortho[0] * ortho[0] + ortho[1] * ortho[1] + ortho[2] * ortho[2] + ortho[3] * ortho[3]);
  }
};

struct FitOptions {
  int max_iterations = 50;
  int refresh_every = 5;
  double tolerance = 1e-10;  ///< on |Phi|, relative to ||Q||_2^2
  double fd_step = 1e-6;
};

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

/// Evaluates Phi(theta, y) from the Fourier coefficients of u in O(n^3)
/// per call (Parseval, no transforms).
class OrthogonalityMap {
 public:
  OrthogonalityMap(SolitonFamily& family, const Field& u) : family_(family), uhat_(family.workspace().forward(u)) {}

  std::array<double, 4> operator()(double theta, const Vec3& y) const {
    const Grid3& grid = family_.grid();
    const auto& ws = family_.workspace();
    const auto f = ws.shift_factors(y);
    const auto& k = ws.k();
    const Spectrum& q = family_.spectrum();
    Complex c0{}, c1{}, c2{}, c3{};
    for (std::size_t idx = 0; idx < q.size(); ++idx) {
      const auto ijk = grid.unravel(idx);
      const Complex w = std::conj(q[idx] * f[0][ijk[0]] * f[1][ijk[1]] * f[2][ijk[2]]) * uhat_[idx];
      c0 += w;
      // conj(i k_j a) = -i k_j conj(a)
      c1 += Complex(0.0, -k[ijk[0]]) * w;
      c2 += Complex(0.0, -k[ijk[1]]) * w;
      c3 += Complex(0.0, -k[ijk[2]]) * w;
    }
    const double scale = grid.cell_volume() / static_cast<double>(grid.size());
    const Complex ph = std::polar(scale, -theta);
    return {(ph * c0).imag(), (ph * c1).real(), (ph * c2).real(), (ph * c3).real()};
  }

 private:
  SolitonFamily& family_;
  Spectrum uhat_;
};

namespace detail {

// Solves the 4x4 system J x = b by Gaussian elimination with partial pivoting.
inline std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b) {
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (a[piv][c] == 0.0) throw Error("fit: singular Jacobian");
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (int r = c + 1; r < 4; ++r) {
      const double m = a[r][c] / a[c][c];
      for (int k = c; k < 4; ++k) a[r][k] -= m * a[c][k];
      b[r] -= m * b[c];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < 4; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

inline double norm4(const std::array<double, 4>& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
}

}  // namespace detail

/// g, alpha and h for fitted parameters:
/// g = e^{-i theta} u - Q_y, alpha = <g1, Lap Q_y> / <Q_y, Lap Q_y>, h = g - alpha Q_y.
inline void decompose(SolitonFamily& family, const Field& u, ModulationFit& fit) {
  const RealField qy = family.profile_at(fit.y);
  const RealField lap = family.laplacian_at(fit.y);
  const Complex ph = std::polar(1.0, -fit.theta);
  fit.g = Field(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) fit.g[i] = ph * u[i] - qy[i];
  fit.alpha = inner(real_part(fit.g), lap) / inner(qy, lap);
  fit.h = fit.g;
  for (std::size_t i = 0; i < u.size(); ++i) fit.h[i] -= fit.alpha * qy[i];
}

/// Newton solve of Phi(theta, y) = 0 starting from (theta0, y0).
///
/// The Jacobian starts as its value at the exact soliton,
/// diag(-||Q||^2, ||d_1 Q||^2, ||d_1 Q||^2, ||d_1 Q||^2), and is replaced by
/// a central-difference Jacobian every `refresh_every` iterations.
inline ModulationFit fit(SolitonFamily& family, const Field& u, double theta0, const Vec3& y0,
                         const FitOptions& opt = {}) {
  require_same_grid(u.grid(), family.grid(), "fit");
  const OrthogonalityMap phi(family, u);
  const auto& qc = family.constants();
  const double tol = opt.tolerance * qc.l2_sq;

  std::array<std::array<double, 4>, 4> jac{};
  jac[0][0] = -qc.l2_sq;
  for (int j = 1; j < 4; ++j) jac[j][j] = qc.h1_sq / 3.0;

  double theta = theta0;
  Vec3 y = y0;
  auto res = phi(theta, y);
  int it = 0;
  while (detail::norm4(res) >= tol) {
    if (it >= opt.max_iterations) {
      throw Error("fit: no convergence in " + std::to_string(opt.max_iterations) +
                  " iterations, last residual " + std::to_string(detail::norm4(res) / qc.l2_sq) +
                  " of ||Q||^2; the field may be too far from the soliton orbit");
    }
    ++it;
    if (opt.refresh_every > 0 && it % opt.refresh_every == 0) {
      const double h = opt.fd_step;
      for (int c = 0; c < 4; ++c) {
        double tp = theta, tm = theta;
        Vec3 yp = y, ym = y;
        if (c == 0) {
          tp += h;
          tm -= h;
        } else {
          yp[c - 1] += h;
          ym[c - 1] -= h;
        }
        const auto fp = phi(tp, yp), fm = phi(tm, ym);
        for (int r = 0; r < 4; ++r) jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
      }
    }
    std::array<double, 4> rhs{-res[0], -res[1], -res[2], -res[3]};
    const auto step = detail::solve4(jac, rhs);
    theta += step[0];
    for (int a = 0; a < 3; ++a) y[a] += step[a + 1];
    res = phi(theta, y);
    if (!std::isfinite(detail::norm4(res))) throw Error("fit: Newton iterate left the finite range");
  }

  ModulationFit out(u.grid());
  out.theta = wrap_angle(theta);
  out.y = y;
  out.ortho = res;
  out.iterations = it;
  decompose(family, u, out);
  return out;
}

/// Starting guess for a field with no history: y from the local-mass
/// maximizer, theta from the phase of <Q_y, u>.
inline std::pair<double, Vec3> initial_guess(SolitonFamily& family, const Field& u) {
  const Vec3 y = spatial_center(u, family.workspace());
  const Complex c = inner(to_complex(family.profile_at(y)), u);
  return {std::arg(c), y};
}

/// H^1 norm: sqrt(||grad g||^2 + ||g||^2).
inline double h1_norm(const Field& g, SpectralWorkspace& ws) { return std::sqrt(ws.h1_seminorm_sq(g) + l2_norm_sq(g)); }

/// alpha^2 ||Q||^2 + 2 alpha ||Q||^2 + 2 (1 + alpha) <Q_y, h1> + ||h||^2, which
/// equals 2 (M(u) - M(Q_y)) and so vanishes on the mass shell M(u) = M(Q).
/// Returned relative to ||Q||_2^2.
inline double mass_constraint_residual(SolitonFamily& family, const ModulationFit& f) {
  const RealField qy = family.profile_at(f.y);
  const double q2 = l2_norm_sq(qy);
  const double a = f.alpha;
  const double val = a * a * q2 + 2.0 * a * q2 + 2.0 * (1.0 + a) * inner(qy, real_part(f.h)) + l2_norm_sq(f.h);
  return val / family.constants().l2_sq;
}

/// Terms of the expansion of E_V + M about the orbit. With
/// u = e^{i theta}(Q_y + g), exactly
///   E_V(u) + M(u) - E_0(Q) - M(Q) = orbit_defect + linear + B(g) + 1/2 integral V|u|^2 - cubic - quartic,
/// so on the threshold B + 1/2 integral V|u|^2 = cubic + quartic - linear - orbit_defect.
struct LyapunovExpansion {
  double bilinear = 0.0;        ///< B(g, g)
  double half_potential = 0.0;  ///< 1/2 integral V |u|^2
  double linear = 0.0;          ///< <g1, -Lap Q_y + Q_y - Q_y^3>
  double cubic = 0.0;           ///< integral Q_y g1 |g|^2
  double quartic = 0.0;         ///< 1/4 integral |g|^4
  double orbit_defect = 0.0;    ///< E_0(Q_y) + M(Q_y) - E_0(Q) - M(Q) on the grid
  double shell_defect = 0.0;    ///< E_V(u) + M(u) - E_0(Q) - M(Q)

  /// B + 1/2 integral V|u|^2, the quantity that must be O(||g||^3).
  double remainder() const { return bilinear + half_potential; }
  /// The right-hand side built term by term.
  double expansion() const { return cubic + quartic - linear - orbit_defect + shell_defect; }
};

inline LyapunovExpansion lyapunov_expansion(SolitonFamily& family, const Field& u, const ModulationFit& f,
                                            const PotentialFields* pf) {
  SpectralWorkspace& ws = family.workspace();
  const auto& qc = family.constants();
  LinearizedOps ops(family, f.y);
  const RealField qy = family.profile_at(f.y);
  const RealField lap = family.laplacian_at(f.y);
  const double dv = u.grid().cell_volume();
  LyapunovExpansion x;
  x.bilinear = ops.bilinear_B(f.g);
  const EnergyParts e = energy_parts(u, pf, ws);
  x.half_potential = 0.5 * e.potential;
  double lin = 0, cub = 0, qua = 0, q4 = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double g1 = f.g[i].real();
    const double m = std::norm(f.g[i]);
    const double q = qy[i];
    lin += g1 * (-lap[i] + q - q * q * q);
    cub += q * g1 * m;
    qua += m * m;
    q4 += q * q * q * q;
  }
  x.linear = lin * dv;
  x.cubic = cub * dv;
  x.quartic = 0.25 * qua * dv;
  const double l2 = l2_norm_sq(qy);
  const double kin = ws.h1_seminorm_sq(to_complex(qy));
  x.orbit_defect = (0.5 * kin - 0.25 * q4 * dv + 0.5 * l2) - (qc.energy + qc.mass);
  x.shell_defect = e.energy() + e.mass() - qc.energy - qc.mass;
  return x;
}

/// B(g) + 1/2 integral V |u|^2 on threshold data; refuses data off the shell.
inline double lyapunov_residual(SolitonFamily& family, const Field& u, const ModulationFit& f,
                                const PotentialFields* pf) {
  const EnergyParts e = energy_parts(u, pf, family.workspace());
  require_threshold_normalization(e, family.constants(), "lyapunov_residual");
  return lyapunov_expansion(family, u, f, pf).remainder();
}

/// One tracked time slice.
struct ModulationRow {
  double t = 0.0;
  double theta = 0.0;
  Vec3 y{};
  double alpha = 0.0;
  double g_h1 = 0.0;
  double delta = 0.0;
  double ratio_g = 0.0;      ///< ||g||_{H^1} / delta
  double ratio_pot = 0.0;    ///< (integral V|u|^2)^{1/2} / delta
  double ratio_decay = 0.0;  ///< (e^{-2|y|} / |y|^2) / delta
  double ydot = 0.0;
  double ydot_over_delta = 0.0;
  double ortho_resid = 0.0;
  Vec3 center{};
};

/// Fits every recorded slice whose delta is below the gate, seeding each fit
/// with the previous one. A failed fit ends the window.
class ModulationTracker {
 public:
  ModulationTracker(SolitonFamily& family, double delta_gate, FitOptions opt = {})
      : family_(family), gate_(delta_gate), opt_(opt) {}

  /// Returns false once the window has closed.
  bool observe(double t, const Field& u, double delta, double potential, const Vec3& center) {
    if (closed_) return false;
    if (!(std::abs(delta) < gate_)) {
      if (!rows_.empty()) close("delta left the gate");
      return !closed_;
    }
    double th;
    Vec3 y;
    if (rows_.empty()) {
      std::tie(th, y) = initial_guess(family_, u);
    } else {
      th = last_theta_;
      y = rows_.back().y;
    }
    std::optional<ModulationFit> fitted;
    try {
      fitted.emplace(fit(family_, u, th, y, opt_));
    } catch (const Error& e) {
      close(std::string("fit failed: ") + e.what());
      return false;
    }
    const ModulationFit& f = *fitted;
    // Unwrapped phase for continuation only.
    last_theta_ = th + wrap_angle(f.theta - th);
    ModulationRow r;
    r.t = t;
    r.theta = f.theta;
    r.y = f.y;
    r.alpha = f.alpha;
    r.g_h1 = h1_norm(f.g, family_.workspace());
    r.delta = delta;
    r.ratio_g = r.g_h1 / delta;
    r.ratio_pot = std::sqrt(std::max(potential, 0.0)) / delta;
    const double ny = norm(f.y);
    r.ratio_decay = ny > 0.0 ? std::exp(-2.0 * ny) / (ny * ny) / delta : std::numeric_limits<double>::infinity();
    r.ortho_resid = f.ortho_norm();
    r.center = center;
    rows_.push_back(r);
    return true;
  }

  /// Fills |dy/dt| by centered differences (one-sided at the window ends).
  void finalize() {
    const std::size_t n = rows_.size();
    for (std::size_t m = 0; m < n && n >= 2; ++m) {
      const std::size_t a = m == 0 ? 0 : m - 1;
      const std::size_t b = m + 1 == n ? m : m + 1;
      const Vec3 d = rows_[b].y - rows_[a].y;
      rows_[m].ydot = norm(d) / (rows_[b].t - rows_[a].t);
      rows_[m].ydot_over_delta = rows_[m].ydot / rows_[m].delta;
    }
  }

  const std::vector<ModulationRow>& rows() const { return rows_; }
  bool closed() const { return closed_; }
  const std::string& close_reason() const { return reason_; }

 private:
  void close(std::string why) {
    closed_ = true;
    reason_ = std::move(why);
  }

  SolitonFamily& family_;
  double gate_;
  FitOptions opt_;
  std::vector<ModulationRow> rows_;
  double last_theta_ = 0.0;
  bool closed_ = false;
  std::string reason_;
};

inline void write_modulation_header(std::ostream& os) {
  os << "t,theta,y_x,y_y,y_z,alpha,g_H1,delta,ratio_g,ratio_pot,ratio_decay,ydot_over_delta,ortho_resid\n";
}

inline void write_modulation_row(std::ostream& os, const ModulationRow& r) {
  os << format_double(r.t);
  for (double v : {r.theta, r.y[0], r.y[1], r.y[2], r.alpha, r.g_h1, r.delta, r.ratio_g, r.ratio_pot, r.ratio_decay,
                   r.ydot_over_delta, r.ortho_resid}) {
    os << ',' << format_double(v);
  }
  os << '\n';
}

}  // namespace nlslab
