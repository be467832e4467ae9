#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "nlslab/diagnostics.hpp"
#include "nlslab/field.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/potential.hpp"
#include "nlslab/spectral.hpp"

namespace nlslab {

/// psi(c + mu (x - c)) from the trigonometric interpolant of psi, one axis
/// at a time (an n x n interpolation matrix per axis, O(n^4) overall).
inline Field rescale(const Field& psi, const Vec3& c, double mu) {
  const Grid3& grid = psi.grid();
  const std::size_t n = grid.n();
  const double L = grid.half_width();
  Field cur = psi;
  for (int axis = 0; axis < 3; ++axis) {
    // Periodic cardinal function for node spacing dx with the Nyquist mode
    // taken as a cosine: D(s) = (1/n)[1 + 2 sum_{m<n/2} cos(k_m s) + cos(k_{n/2} s)].
    std::vector<double> mat(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double target = c[axis] + mu * (grid.coord(i) - c[axis]);
      for (std::size_t j = 0; j < n; ++j) {
        const double th = std::numbers::pi * (target - grid.coord(j)) / L;
        // cos(m th) by the Chebyshev recurrence.
        const double c1 = std::cos(th);
        double cm1 = 1.0, cm = c1, acc = 1.0;
        for (std::size_t m = 1; m < n / 2; ++m) {
          acc += 2.0 * cm;
          const double nx = 2.0 * c1 * cm - cm1;
          cm1 = cm;
          cm = nx;
        }
        acc += cm;
        mat[i * n + j] = acc / static_cast<double>(n);
      }
    }
    Field next(grid);
    std::vector<Complex> line(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        auto idx = [&](std::size_t i) {
          if (axis == 0) return grid.index(i, a, b);
          if (axis == 1) return grid.index(a, i, b);
          return grid.index(a, b, i);
        };
        for (std::size_t j = 0; j < n; ++j) line[j] = cur[idx(j)];
        for (std::size_t i = 0; i < n; ++i) {
          Complex s{};
          const double* row = &mat[i * n];
          for (std::size_t j = 0; j < n; ++j) s += row[j] * line[j];
          next[idx(i)] = s;
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

struct TuningResult {
  std::string mode;  ///< "product" or "exact"
  double lambda = 1.0;
  double mu = 1.0;
  Field field;
  double product_residual = 0.0;  ///< |M E_V - M(Q) E_0(Q)| / (M(Q) E_0(Q))
  double mass_residual = 0.0;     ///< |M - M(Q)| / M(Q)
  double energy_residual = 0.0;   ///< |E_V - E_0(Q)| / E_0(Q)
  double norm_product = 0.0;      ///< ||u||_2 ||u||_{H^1_V}
  double norm_cap = 0.0;          ///< ||Q||_2 ||grad Q||_2
};

namespace detail {

inline void certify(TuningResult& r, const EnergyParts& e, const GroundStateConstants& q) {
  const double target = q.mass_energy;
  r.product_residual = std::abs(e.mass() * e.energy() - target) / target;
  r.mass_residual = std::abs(e.mass() - q.mass) / q.mass;
  r.energy_residual = std::abs(e.energy() - q.energy) / q.energy;
  r.norm_product = std::sqrt(e.l2_sq * e.h1v_sq());
  r.norm_cap = q.norm_cap();
}

inline constexpr double kCapSlack = 1e-12;

}  // namespace detail

/// Amplitude lambda with M(lambda psi) E_V(lambda psi) = M(Q) E_0(Q) and
/// ||lambda psi||_2 ||lambda psi||_{H^1_V} <= ||Q||_2 ||grad Q||_2.
///
/// With s = lambda^2 the product is M(psi)(s^2 A - s^3 B), A = 1/2 ||psi||_{H^1_V}^2,
/// B = 1/4 ||psi||_4^4; it increases up to s* = 2A / (3B), and the norm
/// product is linear in s. The root is bisected on [0, min(s*, s_cap)].
inline TuningResult tune_product(const Field& psi, const PotentialFields* pf, SpectralWorkspace& ws,
                                 const GroundStateConstants& q) {
  const EnergyParts e = energy_parts(psi, pf, ws);
  if (!(e.l2_sq > 0.0)) throw Error("tune_to_threshold: psi must be nonzero");
  const double mpsi = e.mass();
  const double a = 0.5 * e.h1v_sq();
  const double b = 0.25 * e.l4_4;
  const double target = q.mass_energy;
  auto product = [&](double s) { return mpsi * (s * s * a - s * s * s * b); };

  const double s_cap = q.norm_cap() / std::sqrt(e.l2_sq * e.h1v_sq());
  const double s_peak = b > 0.0 ? 2.0 * a / (3.0 * b) : std::numeric_limits<double>::infinity();
  const double hi = std::min(s_cap, s_peak);
  const double top = product(hi);
  double s = hi;
  if (std::abs(top - target) > 1e-13 * target) {
    if (top < target) {
      if (s_cap <= s_peak) {
        throw Error("tune_to_threshold: norm-cap constraint fails; at ||u||_2 ||u||_{H^1_V} = ||Q||_2 ||Q||_{H^1} "
                    "the product M E_V is only " + std::to_string(top / target) + " of M(Q) E_0(Q)");
      }
      throw Error("tune_to_threshold: product constraint fails; M E_V peaks at " + std::to_string(top / target) +
                  " of M(Q) E_0(Q) below the norm cap");
    }
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + s);
      if (mid <= lo || mid >= s) break;
      if (product(mid) < target) {
        lo = mid;
      } else {
        s = mid;
      }
    }
    s = std::abs(product(lo) - target) < std::abs(product(s) - target) ? lo : s;
  }
  const double lam = std::sqrt(s);
  TuningResult r{.mode = "product", .lambda = lam, .mu = 1.0, .field = lam * psi};
  detail::certify(r, energy_parts(r.field, pf, ws), q);
  return r;
}

struct ExactTuningOptions {
  double mu_min = 0.02;
  double mu_max = 50.0;
  int scan_points = 400;            ///< log-spaced points of the model scan
  int local_points = 32;            ///< grid-energy scan resolution: points per factor of 4 in mu
  double energy_tolerance = 1e-13;  ///< relative, for the final polish
  int polish_iterations = 30;
};

/// lambda psi(c + mu (x - c)) with M = M(Q) and E_V = E_0(Q) separately.
///
/// The mass fixes lambda^2 = M(Q) mu^3 / M(psi). Along that curve the
/// kinetic and quartic terms follow the continuum scaling laws and
/// integral V|u|^2 is a change of variables against the samples of psi, so
/// a model E(mu) is cheap and locates the smallest root of E(mu) = E_0(Q)
/// (the branch with ||u||_{H^1_V} below ||grad Q||). On coarse grids the
/// scaling laws are only approximate, so the root is then re-bracketed and
/// solved on the energy of the actual sampled rescaling.
inline TuningResult tune_exact(const Field& psi, const Vec3& c, const Potential& p, SpectralWorkspace& ws,
                               const GroundStateConstants& q, const ExactTuningOptions& opt = {}) {
  const Grid3& grid = psi.grid();
  const PotentialFields pf = eval_on_grid(p, grid);
  const EnergyParts e = energy_parts(psi, &pf, ws);
  if (!(e.l2_sq > 0.0)) throw Error("tune_to_threshold: psi must be nonzero");

  const double ratio = q.l2_sq / e.l2_sq;  // lambda^2 / mu^3
  const RealField dens = modulus_sq(psi);
  auto model_energy = [&](double mu) {
    const double lam2 = ratio * mu * mu * mu;
    double pot = 0.0;
    if (!p.is_zero()) {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (dens[i] == 0.0) continue;
        const Vec3 z = grid.position(i);
        pot += p.value(c + (1.0 / mu) * (z - c)) * dens[i];
      }
      pot *= grid.cell_volume() * lam2 / (mu * mu * mu);
    }
    return 0.5 * lam2 / mu * e.kinetic + 0.5 * pot - 0.25 * lam2 * lam2 / (mu * mu * mu) * e.l4_4;
  };
  auto realize = [&](double m, double& lam) {
    Field u = m == 1.0 ? psi : rescale(psi, c, m);
    lam = std::sqrt(q.l2_sq / l2_norm_sq(u));
    u *= lam;
    return u;
  };
  auto grid_energy = [&](double m) {
    double lam = 1.0;
    return energy_parts(realize(m, lam), &pf, ws).energy();
  };

  const double e0 = q.energy;
  const double e_one = grid_energy(1.0);
  // psi already on the threshold, on the admissible branch or at the fold.
  const bool at_one = std::abs(e_one - e0) <= opt.energy_tolerance * e0 &&
                      grid_energy(1.0 - 1e-4) <= e0 * (1.0 + opt.energy_tolerance);

  double mu = 1.0;
  bool fold = at_one;
  if (!at_one) {
    // Model scan: first crossing, or the peak when there is none.
    const double step = std::log(opt.mu_max / opt.mu_min) / opt.scan_points;
    double guess = 0.0, best_mu = opt.mu_min, best_e = model_energy(opt.mu_min);
    for (int k = 1; k <= opt.scan_points && guess == 0.0; ++k) {
      const double m = opt.mu_min * std::exp(step * k);
      const double en = model_energy(m);
      if (en > best_e) {
        best_e = en;
        best_mu = m;
      }
      if (en >= e0) guess = m;
    }
    if (guess == 0.0) guess = best_mu;

    // Grid energy: step down from the guess until below E_0, then scan upward
    // for the first crossing.
    const double ls = std::log(4.0) / opt.local_points;
    double lo = std::max(opt.mu_min, guess * std::exp(-ls));
    double e_lo = grid_energy(lo);
    while (e_lo >= e0 && lo > opt.mu_min) {
      lo = std::max(opt.mu_min, lo * std::exp(-ls));
      e_lo = grid_energy(lo);
    }
    if (e_lo >= e0) {
      throw Error("tune_to_threshold: energy already exceeds E_0(Q) at the smallest admissible mu");
    }
    double hi = 0.0, peak_mu = lo, peak_e = e_lo;
    for (double m = lo * std::exp(ls); m <= std::min(opt.mu_max, 16.0 * guess); m *= std::exp(ls)) {
      const double en = grid_energy(m);
      if (en >= e0) {
        hi = m;
        break;
      }
      if (en > peak_e) {
        peak_e = en;
        peak_mu = m;
      }
      lo = m;
    }
    if (hi == 0.0) {
      // No crossing: a peak touching E_0 is a double root (psi on the orbit of Q).
      double a = peak_mu * std::exp(-ls), b = peak_mu * std::exp(ls);
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      double m1 = b - g * (b - a), m2 = a + g * (b - a);
      double f1 = grid_energy(m1), f2 = grid_energy(m2);
      for (int it = 0; it < 80 && b - a > 1e-12 * b; ++it) {
        if (f1 < f2) {
          a = m1;
          m1 = m2;
          f1 = f2;
          m2 = a + g * (b - a);
          f2 = grid_energy(m2);
        } else {
          b = m2;
          m2 = m1;
          f2 = f1;
          m1 = b - g * (b - a);
          f1 = grid_energy(m1);
        }
      }
      mu = 0.5 * (a + b);
      const double peak = grid_energy(mu);
      if (std::abs(peak - e0) > 1e-10 * e0) {
        throw Error("tune_to_threshold: energy constraint fails; on the mass shell E_V peaks at " +
                    std::to_string(peak / e0) + " of E_0(Q)");
      }
      fold = true;
    } else {
      // Safeguarded secant (regula falsi, Illinois variant) on the grid energy.
      double f_lo = grid_energy(lo) - e0, f_hi = grid_energy(hi) - e0;
      int side = 0;
      mu = hi;
      for (int it = 0; it < opt.polish_iterations; ++it) {
        mu = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        const double f = grid_energy(mu) - e0;
        if (std::abs(f) <= opt.energy_tolerance * e0) break;
        if (f < 0.0) {
          lo = mu;
          f_lo = f;
          if (side == -1) f_hi *= 0.5;
          side = -1;
        } else {
          hi = mu;
          f_hi = f;
          if (side == 1) f_lo *= 0.5;
          side = 1;
        }
      }
    }
  }

  double lam = 1.0;
  Field u = realize(mu, lam);
  TuningResult r{.mode = "exact", .lambda = lam, .mu = mu, .field = std::move(u)};
  detail::certify(r, energy_parts(r.field, &pf, ws), q);
  if (r.norm_product > r.norm_cap * (1.0 + detail::kCapSlack)) {
    throw Error("tune_to_threshold: norm-cap constraint fails; the tuned data has ||u||_2 ||u||_{H^1_V} = " +
                std::to_string(r.norm_product / r.norm_cap) + " of ||Q||_2 ||Q||_{H^1}");
  }
  return r;
}

}  // namespace nlslab
