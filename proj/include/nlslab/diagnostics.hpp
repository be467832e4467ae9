#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "nlslab/field.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/potential.hpp"
#include "nlslab/spectral.hpp"
#include "nlslab/virial.hpp"

namespace nlslab {

/// M(u) = 1/2 integral |u|^2.
inline double mass(const Field& u) { return 0.5 * l2_norm_sq(u); }

/// The integrals that make up mass and energy.
struct EnergyParts {
  double l2_sq = 0.0;
  double kinetic = 0.0;    ///< integral |grad u|^2
  double potential = 0.0;  ///< integral V |u|^2
  double l4_4 = 0.0;

  double mass() const { return 0.5 * l2_sq; }
  double energy() const { return 0.5 * kinetic + 0.5 * potential - 0.25 * l4_4; }
  double h1v_sq() const { return kinetic + potential; }
};

inline EnergyParts energy_parts(const Field& u, const PotentialFields* pf, SpectralWorkspace& ws) {
  EnergyParts e;
  e.l2_sq = l2_norm_sq(u);
  e.kinetic = ws.h1_seminorm_sq(u);
  e.l4_4 = l4_norm_4(u);
  if (pf != nullptr && !pf->zero) e.potential = weighted_mass(pf->v, u);
  return e;
}

/// E_V(u) = integral 1/2 |grad u|^2 + 1/2 V |u|^2 - 1/4 |u|^4.
inline double energy(const Field& u, const PotentialFields* pf, SpectralWorkspace& ws) {
  return energy_parts(u, pf, ws).energy();
}
inline double energy(const Field& u, const Potential& p, SpectralWorkspace& ws) {
  const PotentialFields pf = eval_on_grid(p, u.grid());
  return energy(u, &pf, ws);
}

/// delta(u) = ||grad Q||^2 - (integral |grad u|^2 + V |u|^2).
inline double delta(const EnergyParts& e, const GroundStateConstants& q) { return q.h1_sq - e.h1v_sq(); }
inline double delta(const Field& u, const PotentialFields* pf, SpectralWorkspace& ws, const GroundStateConstants& q) {
  return delta(energy_parts(u, pf, ws), q);
}

/// Spectrum of the unit-ball indicator as a function of the index offset,
/// so that multiplying by it sums density over B_1(x_i).
inline Spectrum ball_spectrum(SpectralWorkspace& ws) {
  const Grid3& grid = ws.grid();
  RealField ball(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const auto ijk = grid.unravel(idx);
    Vec3 d{};
    for (int a = 0; a < 3; ++a) d[a] = static_cast<double>(grid.mode(ijk[a])) * grid.dx();
    ball[idx] = norm(d) <= 1.0 + 1e-12 ? grid.cell_volume() : 0.0;
  }
  return ws.forward(ball);
}

/// Maximizer of the mass in the closed unit ball B_1(x) over grid nodes x.
///
/// Near-ties (within 1e-12 of the maximum, relatively) go to the node with
/// the smallest |x|, then to the lexicographically smallest (x, y, z).
inline Vec3 spatial_center(const Field& u, SpectralWorkspace& ws, const Spectrum& ball) {
  const Grid3& grid = u.grid();
  const RealField density = modulus_sq(u);
  if (max_abs(density) == 0.0) throw Error("spatial_center: zero field");
  Spectrum s = ws.forward(density);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= ball[i];
  const Field local = ws.inverse(s);
  double best = -std::numeric_limits<double>::infinity();
  for (const Complex& v : local.values()) best = std::max(best, v.real());
  const double tie = 1e-12 * std::abs(best);
  std::size_t arg = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (local[i].real() < best - tie) continue;
    if (arg == grid.size()) {
      arg = i;
      continue;
    }
    const Vec3 a = grid.position(i), b = grid.position(arg);
    const double na = norm(a), nb = norm(b);
    if (na < nb || (na == nb && a < b)) arg = i;
  }
  return grid.position(arg);
}

inline Vec3 spatial_center(const Field& u, SpectralWorkspace& ws) { return spatial_center(u, ws, ball_spectrum(ws)); }

/// Centered-difference check of d/dt P_R = F_R^V on a uniformly sampled
/// series, in units of ||grad Q||^2. Entry m pairs times[m] with the
/// residual; the two end points are skipped.
struct IdentityResidual {
  std::vector<double> times;
  std::vector<double> residual;
  double max_abs() const {
    double m = 0.0;
    for (double r : residual) m = std::max(m, std::abs(r));
    return m;
  }
};

inline IdentityResidual virial_identity_residual(const std::vector<double>& times, const std::vector<double>& p,
                                                 const std::vector<double>& f, double dt, double h1_q) {
  if (times.size() != p.size() || times.size() != f.size()) throw Error("virial_identity_residual: length mismatch");
  if (times.size() < 3) throw Error("virial_identity_residual: need at least three samples");
  IdentityResidual out;
  for (std::size_t m = 1; m + 1 < times.size(); ++m) {
    const double span = times[m + 1] - times[m - 1];
    if (0.5 * span > 10.0 * std::abs(dt) * (1 + 1e-9)) {
      throw Error("virial_identity_residual: sample stride exceeds 10 dt; record P_R more densely");
    }
    out.times.push_back(times[m]);
    out.residual.push_back(((p[m + 1] - p[m - 1]) / span - f[m]) / h1_q);
  }
  return out;
}

/// Tolerance on |M - M(Q)| / M(Q) and |E - E_0(Q)| / E_0(Q) for identities
/// that only hold on the threshold.
inline constexpr double kNormalizationTolerance = 1e-6;

inline void require_threshold_normalization(const EnergyParts& e, const GroundStateConstants& q, const char* where) {
  const double dm = std::abs(e.mass() - q.mass) / q.mass;
  const double de = std::abs(e.energy() - q.energy) / q.energy;
  if (dm > kNormalizationTolerance || de > kNormalizationTolerance) {
    throw Error(std::string(where) + ": data is not threshold-normalized (relative mass error " + std::to_string(dm) +
                ", energy error " + std::to_string(de) + ")");
  }
}

/// Residual of integral |grad u|^2 - 3/4 |u|^4 = delta / 2 - integral V |u|^2,
/// valid when M(u) = M(Q) and E_V(u) = E_0(Q). Relative to ||grad Q||^2.
inline double identity_virial_connect(const Field& u, const PotentialFields* pf, SpectralWorkspace& ws,
                                      const GroundStateConstants& q) {
  const EnergyParts e = energy_parts(u, pf, ws);
  require_threshold_normalization(e, q, "identity_virial_connect");
  const double lhs = e.kinetic - 0.75 * e.l4_4;
  const double rhs = 0.5 * delta(e, q) - e.potential;
  return (lhs - rhs) / q.h1_sq;
}

/// Integral of |u|^5.
inline double l5_norm_5(const Field& u) {
  double s = 0.0;
  for (const auto& v : u.values()) s += std::pow(std::abs(v), 5);
  return s * u.grid().cell_volume();
}

struct ScatteringProxy {
  std::vector<double> cumulative;  ///< trapezoid integral of integral |u|^5 dx up to times[m]
  double total = 0.0;
  double last_quarter_share = 0.0;  ///< increment over the last quarter of the window / total
  bool saturating = false;
  double l4_decay_exponent = 0.0;  ///< slope of log ||u||_4 against log t on the second half
  std::string verdict;
};

inline constexpr double kSaturationShare = 0.01;

inline ScatteringProxy scattering_proxy(const std::vector<double>& times, const std::vector<double>& l5,
                                        const std::vector<double>& l4_4) {
  if (times.size() != l5.size() || times.size() != l4_4.size()) throw Error("scattering_proxy: length mismatch");
  ScatteringProxy sp;
  sp.cumulative.assign(times.size(), 0.0);
  for (std::size_t m = 1; m < times.size(); ++m) {
    sp.cumulative[m] = sp.cumulative[m - 1] + 0.5 * (times[m] - times[m - 1]) * (l5[m] + l5[m - 1]);
  }
  if (times.empty()) {
    sp.verdict = "saturating";
    sp.saturating = true;
    return sp;
  }
  sp.total = sp.cumulative.back();
  const double t0 = times.front(), t1 = times.back();
  const double cut = t1 - 0.25 * (t1 - t0);
  std::size_t q = 0;
  while (q + 1 < times.size() && times[q] < cut) ++q;
  const double inc = sp.total - sp.cumulative[q];
  sp.last_quarter_share = sp.total > 0.0 ? inc / sp.total : 0.0;
  sp.saturating = sp.last_quarter_share < kSaturationShare;
  sp.verdict = sp.saturating ? "saturating" : "growing";

  // Least-squares slope of log ||u||_4 = (1/4) log l4_4 over t in [t_mid, t1].
  const double mid = 0.5 * (t0 + t1);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t m = 0; m < times.size(); ++m) {
    if (times[m] < mid || times[m] <= 0.0 || l4_4[m] <= 0.0) continue;
    const double x = std::log(times[m]);
    const double y = 0.25 * std::log(l4_4[m]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  if (n >= 2 && n * sxx - sx * sx > 0) sp.l4_decay_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return sp;
}

/// One recorded time slice.
struct DiagnosticsRow {
  double t = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double h1v = 0.0;  ///< integral |grad u|^2 + V |u|^2
  double potential = 0.0;
  double l4_4 = 0.0;
  double delta = 0.0;
  std::vector<double> p_r;
  std::vector<double> f_r;
  std::vector<VirialTerms> f_terms;
  double f_inf_0 = 0.0;
  Vec3 center{};
  double l5 = 0.0;
  double kinetic = 0.0;
  double l2_sq = 0.0;
};

/// Evaluates DiagnosticsRow entries for fields on one grid.
class Diagnoser {
 public:
  Diagnoser(const Grid3& grid, const Potential& potential, std::vector<double> radii, const GroundStateConstants& q)
      : ws_(grid), pf_(eval_on_grid(potential, grid)), radii_(std::move(radii)), q_(q) {
    for (double r : radii_) weights_.push_back(build_weight(grid, r));
    ball_ = ball_spectrum(ws_);
  }

  SpectralWorkspace& workspace() { return ws_; }
  const PotentialFields& potential_fields() const { return pf_; }
  const std::vector<double>& radii() const { return radii_; }
  const GroundStateConstants& constants() const { return q_; }

  DiagnosticsRow row(double t, const Field& u) {
    DiagnosticsRow r;
    r.t = t;
    const auto g = ws_.gradient(u);
    r.l2_sq = l2_norm_sq(u);
    r.mass = 0.5 * r.l2_sq;
    r.kinetic = gradient_l2_sq(g);
    r.potential = pf_.zero ? 0.0 : weighted_mass(pf_.v, u);
    r.l4_4 = l4_norm_4(u);
    r.h1v = r.kinetic + r.potential;
    r.energy = 0.5 * r.h1v - 0.25 * r.l4_4;
    r.delta = q_.h1_sq - r.h1v;
    for (const auto& w : weights_) {
      r.p_r.push_back(virial_momentum(u, g, w));
      r.f_terms.push_back(virial_terms(u, g, w, &pf_));
      r.f_r.push_back(r.f_terms.back().total());
    }
    r.f_inf_0 = 8.0 * r.kinetic - 6.0 * r.l4_4;
    r.center = spatial_center(u, ws_, ball_);
    r.l5 = l5_norm_5(u);
    return r;
  }

 private:
  SpectralWorkspace ws_;
  PotentialFields pf_;
  std::vector<double> radii_;
  std::vector<VirialWeight> weights_;
  Spectrum ball_;
  GroundStateConstants q_;
};

inline std::string radius_label(double r) {
  if (std::isinf(r)) return "inf";
  std::string s = std::to_string(r);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

inline void write_diagnostics_header(std::ostream& os, const std::vector<double>& radii) {
  os << "t,M,E_V,H1V,potV,L4,delta";
  for (double r : radii) os << ",P_R" << radius_label(r) << ",F_R" << radius_label(r) << "_V";
  os << ",F_inf_0,xc_x,xc_y,xc_z,l5_increment\n";
}

/// 17 significant digits: round-trips every double exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_diagnostics_row(std::ostream& os, const DiagnosticsRow& r) {
  auto f = [&](double v) { os << ',' << format_double(v); };
  os << format_double(r.t);
  f(r.mass);
  f(r.energy);
  f(r.h1v);
  f(r.potential);
  f(r.l4_4);
  f(r.delta);
  for (std::size_t i = 0; i < r.p_r.size(); ++i) {
    f(r.p_r[i]);
    f(r.f_r[i]);
  }
  f(r.f_inf_0);
  f(r.center[0]);
  f(r.center[1]);
  f(r.center[2]);
  f(r.l5);
  os << '\n';
}

}  // namespace nlslab
