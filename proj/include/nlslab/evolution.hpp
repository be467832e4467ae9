#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nlslab/field.hpp"
#include "nlslab/potential.hpp"
#include "nlslab/spectral.hpp"

namespace nlslab {

struct PropagatorConfig {
  double dt = 1e-3;  ///< negative values run the flow backward
  double t_end = 1.0;
  bool dealias = false;  ///< 2/3 rule after each nonlinear phase
  bool nonlinear = true;
  Potential potential;
  int stride = 10;  ///< steps between observer calls
  double blowup_factor = 1e3;
};

struct Blowup {
  double time = 0.0;
  Vec3 location{};
  double peak = 0.0;
  std::string reason;
};

/// Strang splitting for i u_t = (-Laplacian + V) u - |u|^2 u:
/// half kinetic step, full phase e^{i dt (|u|^2 - V)}, half kinetic step.
class Propagator {
 public:
  Propagator(const Grid3& grid, const PropagatorConfig& cfg) : cfg_(cfg), ws_(grid), v_(grid) {
    if (!(cfg.dt != 0.0) || !std::isfinite(cfg.dt)) throw Error("Propagator: dt must be nonzero and finite");
    if (cfg.stride < 1) throw Error("Propagator: stride must be >= 1");
    const double phase = std::abs(cfg.dt) * grid.max_wavenumber_sq();
    if (!(phase < std::numbers::pi)) {
      throw Error("Propagator: dt * max|k|^2 = " + std::to_string(phase) + " exceeds pi; reduce dt");
    }
    if (!cfg.potential.is_zero()) v_ = eval_on_grid(cfg.potential, grid).v;
    has_v_ = !cfg.potential.is_zero();
    const auto& k2 = ws_.k_squared();
    half_.resize(k2.size());
    full_.resize(k2.size());
    const double inv_n = 1.0 / static_cast<double>(grid.size());
    for (std::size_t i = 0; i < k2.size(); ++i) {
      half_[i] = std::polar(inv_n, -0.5 * cfg.dt * k2[i]);
      full_[i] = std::polar(inv_n, -cfg.dt * k2[i]);
    }
    if (cfg.dealias) {
      mask_.assign(grid.size(), 1.0);
      const long cut = static_cast<long>(grid.n()) / 3;
      for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const auto ijk = grid.unravel(idx);
        for (int a = 0; a < 3; ++a) {
          if (std::abs(grid.mode(ijk[a])) > cut) mask_[idx] = 0.0;
        }
      }
    }
  }

  const PropagatorConfig& config() const { return cfg_; }
  SpectralWorkspace& workspace() { return ws_; }

  /// Pointwise phase flow of the nonlinear and potential terms over time tau.
  void nonlinear_substep(Field& u, double tau) const {
    for (std::size_t i = 0; i < u.size(); ++i) {
      double arg = cfg_.nonlinear ? std::norm(u[i]) : 0.0;
      if (has_v_) arg -= v_[i];
      u[i] *= std::polar(1.0, tau * arg);
    }
  }

  void step(Field& u) { advance(u, 1); }

  /// Takes `steps` Strang steps, merging the adjacent kinetic half steps.
  void advance(Field& u, int steps) {
    if (steps <= 0) return;
    kinetic(u, half_);
    for (int s = 0; s < steps; ++s) {
      nonlinear_substep(u, cfg_.dt);
      if (cfg_.dealias) dealias(u);
      kinetic(u, s + 1 < steps ? full_ : half_);
    }
  }

 private:
  void kinetic(Field& u, const std::vector<Complex>& m) {
    ws_.forward_in_place(u);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] *= m[i];
    ws_.backward_in_place(u);
  }
  void dealias(Field& u) {
    ws_.forward_in_place(u);
    const double inv_n = 1.0 / static_cast<double>(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] *= mask_[i] * inv_n;
    ws_.backward_in_place(u);
  }

  PropagatorConfig cfg_;
  SpectralWorkspace ws_;
  RealField v_;
  bool has_v_ = false;
  std::vector<Complex> half_;
  std::vector<Complex> full_;
  std::vector<double> mask_;
};

/// Standing wave of the discrete Strang map itself: returns u0 with
/// S(u0) = e^{i omega dt} u0 for the configured dt and potential, starting
/// from a real profile q close to the ground state.
///
/// Writing the step as K N K (K a kinetic half step, N the phase flow), the
/// field z = N_{1/2} K u0 is real and solves Im(K N_{1/2} z) = 0. The
/// left-hand side divided by dt/2 equals Lap z - omega z - V z + z^3 up to
/// O(dt^2), so z is found by Petviashvili iteration on that split.
inline Field scheme_stationary_state(const RealField& q, const PropagatorConfig& cfg, double omega = 1.0,
                                     double tol = 1e-13, int max_iterations = 500) {
  const Grid3& grid = q.grid();
  SpectralWorkspace ws(grid);
  const auto& k2 = ws.k_squared();
  const double tau = 0.5 * cfg.dt;
  RealField v(grid);
  if (!cfg.potential.is_zero()) v = eval_on_grid(cfg.potential, grid).v;
  std::vector<Complex> half(k2.size());
  for (std::size_t i = 0; i < k2.size(); ++i) half[i] = std::polar(1.0, -tau * k2[i]);

  // Phi(z) = Im(K N_{1/2} z) / tau, real-valued.
  auto phi = [&](const RealField& z) {
    Field w(grid);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double nl = cfg.nonlinear ? z[i] * z[i] : 0.0;
      w[i] = std::polar(z[i], tau * (nl - v[i] - omega));
    }
    Spectrum s = ws.forward(w);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= half[i];
    const Field kw = ws.inverse(s);
    RealField out(grid);
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = kw[i].imag() / tau;
    return out;
  };

  RealField z = q;
  for (int it = 1; it <= max_iterations; ++it) {
    const RealField f = phi(z);
    const Spectrum zs = ws.forward(to_complex(z));
    Spectrum fs = ws.forward(to_complex(f));
    // Nonlinear remainder: F(z) - (Lap - omega) z.
    for (std::size_t i = 0; i < fs.size(); ++i) fs[i] += (k2[i] + omega) * zs[i];
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
      num += (omega + k2[i]) * std::norm(zs[i]);
      den += (std::conj(zs[i]) * fs[i]).real();
    }
    double residual = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      residual = std::max(residual, std::abs(f[i]));
      peak = std::max(peak, std::abs(z[i]));
    }
    if (residual < tol * peak) {
      Field w(grid);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double nl = cfg.nonlinear ? z[i] * z[i] : 0.0;
        w[i] = std::polar(z[i], -tau * (nl - v[i] - omega));
      }
      Spectrum s = ws.forward(w);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] /= half[i];
      return ws.inverse(s);
    }
    const double scale = std::pow(num / den, 1.5);
    for (std::size_t i = 0; i < fs.size(); ++i) fs[i] *= scale / (omega + k2[i]);
    z = real_part(ws.inverse(fs));
  }
  throw Error("scheme_stationary_state: no convergence within " + std::to_string(max_iterations) + " iterations");
}

struct EvolutionResult {
  std::vector<double> times;
  Field final_state;
  std::optional<Blowup> blowup;
};

/// Location and value of max |u|.
inline std::pair<Vec3, double> peak_of(const Field& u) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    if (!(a <= best)) {  // also catches NaN
      best = a;
      arg = i;
      if (std::isnan(a)) break;
    }
  }
  return {u.grid().position(arg), best};
}

/// Runs the flow from u0 to t_end, calling observer(t, u) at t = 0 and after
/// every `stride` steps. Stops early (with a Blowup record) if |u| exceeds
/// blowup_factor * max|u0| or stops being finite.
template <class Observer>
EvolutionResult evolve(const Field& u0, const PropagatorConfig& cfg, Observer&& observer) {
  Propagator prop(u0.grid(), cfg);
  const long total = std::lround(cfg.t_end / std::abs(cfg.dt));
  if (total < 1) throw Error("evolve: t_end shorter than one step");
  const double limit = cfg.blowup_factor * max_abs(u0);

  EvolutionResult res{{}, u0, std::nullopt};
  Field& u = res.final_state;
  res.times.push_back(0.0);
  observer(0.0, static_cast<const Field&>(u));
  long done = 0;
  while (done < total) {
    const int chunk = static_cast<int>(std::min<long>(cfg.stride, total - done));
    prop.advance(u, chunk);
    done += chunk;
    const double t = static_cast<double>(done) * cfg.dt;
    const auto [where, peak] = peak_of(u);
    if (!std::isfinite(peak) || peak > limit) {
      res.blowup = Blowup{t, where, peak, std::isfinite(peak) ? "amplitude threshold exceeded" : "non-finite value"};
      return res;
    }
    res.times.push_back(t);
    observer(t, static_cast<const Field&>(u));
  }
  return res;
}

inline EvolutionResult evolve(const Field& u0, const PropagatorConfig& cfg) {
  return evolve(u0, cfg, [](double, const Field&) {});
}

}  // namespace nlslab
