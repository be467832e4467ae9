#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "nlslab/field.hpp"
#include "nlslab/potential.hpp"
#include "nlslab/spectral.hpp"

namespace nlslab {

/// Radial cutoff profile phi: s^2 on [0, 1], 4 on [3, inf), and on (1, 3)
/// the nonic p(t), t = (s - 1) / 2, matching value and four derivatives at
/// both ends, so phi is C^4 and Laplacian^2 w_R has no surface terms.
/// p'(t) = 2 (1 - t)^4 (45t^4 + 80t^3 + 36t^2 + 12t + 2) >= 0.
struct CutoffProfile {
  /// d^m phi / ds^m for m = 0..4.
  static std::array<double, 5> derivatives(double s) {
    if (s <= 1.0) return {s * s, 2.0 * s, 2.0, 0.0, 0.0};
    if (s >= 3.0) return {4.0, 0.0, 0.0, 0.0, 0.0};
    const double t = 0.5 * (s - 1.0);
    const double t2 = t * t;
    const double p = 1 + t * (4 + 4 * t) + t2 * t2 * t * (-42 + t * (56 + t * (-4 + t * (-25 + 10 * t))));
    const double p1 = 4 + 8 * t + t2 * t2 * (-210 + t * (336 + t * (-28 + t * (-200 + 90 * t))));
    const double p2 = 8 + t2 * t * (-840 + t * (1680 + t * (-168 + t * (-1400 + 720 * t))));
    const double p3 = t2 * (-2520 + t * (6720 + t * (-840 + t * (-8400 + 5040 * t))));
    const double p4 = t * (-5040 + t * (20160 + t * (-3360 + t * (-42000 + 30240 * t))));
    return {p, p1 / 2, p2 / 4, p3 / 8, p4 / 16};
  }
};

/// w_R = R^2 phi(|x| / R) and its derivatives sampled on a grid.
/// R = infinity gives w = |x|^2.
struct VirialWeight {
  double radius;
  RealField w;
  std::array<RealField, 3> grad;
  /// Hessian entries in the order xx, yy, zz, xy, xz, yz.
  std::array<RealField, 6> hess;
  RealField lap;
  RealField bilap;

  bool infinite() const { return std::isinf(radius); }
};

inline constexpr std::array<std::array<int, 2>, 6> kHessianPairs{{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};

/// How the derivative fields of a finite-R weight are obtained.
/// Spectral differentiates the sampled w_R (periodic and C^4), which keeps
/// the grid version of d/dt P_R = F_R exact up to time stepping; ClosedForm
/// samples the analytic derivatives. R = infinity, and any R with 3R >= L,
/// always use closed form.
enum class WeightDerivatives { Spectral, ClosedForm };

inline VirialWeight build_weight(const Grid3& grid, double radius,
                                 WeightDerivatives mode = WeightDerivatives::Spectral) {
  if (!(radius >= 1.0)) throw Error("build_weight: R must be >= 1 or infinite");
  VirialWeight vw{radius,
                  RealField(grid),
                  {RealField(grid), RealField(grid), RealField(grid)},
                  {RealField(grid), RealField(grid), RealField(grid), RealField(grid), RealField(grid), RealField(grid)},
                  RealField(grid),
                  RealField(grid)};
  const bool inf = std::isinf(radius);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const Vec3 x = grid.position(idx);
    const double r = norm(x);
    const double s = inf ? 0.0 : r / radius;
    if (inf || s <= 1.0) {
      vw.w[idx] = r * r;
      for (int a = 0; a < 3; ++a) vw.grad[a][idx] = 2.0 * x[a];
      for (int h = 0; h < 6; ++h) vw.hess[h][idx] = h < 3 ? 2.0 : 0.0;
      vw.lap[idx] = 6.0;
      vw.bilap[idx] = 0.0;
      continue;
    }
    const auto d = CutoffProfile::derivatives(s);
    // Radial derivatives of W(r) = R^2 phi(r / R).
    const double w0 = radius * radius * d[0];
    const double w1 = radius * d[1];
    const double w2 = d[2];
    const double w3 = d[3] / radius;
    const double w4 = d[4] / (radius * radius);
    vw.w[idx] = w0;
    for (int a = 0; a < 3; ++a) vw.grad[a][idx] = w1 * x[a] / r;
    for (int h = 0; h < 6; ++h) {
      const int j = kHessianPairs[h][0], k = kHessianPairs[h][1];
      const double xx = x[j] * x[k] / (r * r);
      vw.hess[h][idx] = w2 * xx + (w1 / r) * ((j == k ? 1.0 : 0.0) - xx);
    }
    vw.lap[idx] = w2 + 2.0 * w1 / r;
    vw.bilap[idx] = w4 + 4.0 * w3 / r;
  }
  // Spectral differentiation needs w_R periodic, i.e. flat before the box edge.
  if (!inf && mode == WeightDerivatives::Spectral && 3.0 * radius < grid.half_width()) {
    SpectralWorkspace ws(grid);
    const Spectrum ws_hat = ws.forward(vw.w);
    std::array<Spectrum, 3> g_hat;
    for (int a = 0; a < 3; ++a) {
      const Field ga = ws.derivative(ws_hat, a);
      vw.grad[a] = real_part(ga);
      g_hat[a] = ws.forward(ga);
    }
    for (int h = 0; h < 6; ++h) vw.hess[h] = real_part(ws.derivative(g_hat[kHessianPairs[h][0]], kHessianPairs[h][1]));
    const Field lap = ws.laplacian(to_complex(vw.w));
    vw.lap = real_part(lap);
    vw.bilap = real_part(ws.laplacian(lap));
  }
  return vw;
}

/// P_R[u] = 2 Im integral conj(u) grad u . grad w.
inline double virial_momentum(const Field& u, const std::array<Field, 3>& g, const VirialWeight& vw) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    Complex s = g[0][i] * vw.grad[0][i] + g[1][i] * vw.grad[1][i] + g[2][i] * vw.grad[2][i];
    acc += (std::conj(u[i]) * s).imag();
  }
  return 2.0 * acc * u.grid().cell_volume();
}
inline double virial_momentum(const Field& u, const VirialWeight& vw, SpectralWorkspace& ws) {
  return virial_momentum(u, ws.gradient(u), vw);
}

/// The four integrals making up F_R^V, kept apart so monitors can inspect them.
struct VirialTerms {
  double bilaplacian = 0.0;  ///< integral of -Laplacian^2 w |u|^2
  double hessian = 0.0;      ///< 4 Re integral conj(u_j) u_k d_jk w
  double potential = 0.0;    ///< -2 integral |u|^2 grad V . grad w (>= 0 for repulsive V)
  double quartic = 0.0;      ///< -integral |u|^4 Laplacian w
  double total() const { return bilaplacian + hessian + potential + quartic; }
};

inline VirialTerms virial_terms(const Field& u, const std::array<Field, 3>& g, const VirialWeight& vw,
                                const PotentialFields* pf) {
  const bool use_v = pf != nullptr && !pf->zero;
  double b = 0, h = 0, p = 0, q = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double m = std::norm(u[i]);
    b -= vw.bilap[i] * m;
    double hs = 0.0;
    for (int e = 0; e < 6; ++e) {
      const int j = kHessianPairs[e][0], k = kHessianPairs[e][1];
      const double re = (std::conj(g[j][i]) * g[k][i]).real();
      hs += (j == k ? 1.0 : 2.0) * re * vw.hess[e][i];
    }
    h += 4.0 * hs;
    if (use_v) {
      p -= 2.0 * m *
           (pf->grad_v[0][i] * vw.grad[0][i] + pf->grad_v[1][i] * vw.grad[1][i] + pf->grad_v[2][i] * vw.grad[2][i]);
    }
    q -= m * m * vw.lap[i];
  }
  const double dv = u.grid().cell_volume();
  return {b * dv, h * dv, p * dv, q * dv};
}
inline VirialTerms virial_terms(const Field& u, const VirialWeight& vw, const PotentialFields* pf,
                                SpectralWorkspace& ws) {
  return virial_terms(u, ws.gradient(u), vw, pf);
}

/// F_R^V[u]; pass nullptr (or a zero potential) for F_R^0.
inline double virial_force(const Field& u, const VirialWeight& vw, const PotentialFields* pf, SpectralWorkspace& ws) {
  return virial_terms(u, vw, pf, ws).total();
}

/// F_inf^0[u] = 8 integral |grad u|^2 - 6 integral |u|^4.
inline double virial_force_free(const Field& u, SpectralWorkspace& ws) {
  return 8.0 * ws.h1_seminorm_sq(u) - 6.0 * l4_norm_4(u);
}

}  // namespace nlslab
