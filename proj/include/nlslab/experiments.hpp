#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlslab/config.hpp"
#include "nlslab/diagnostics.hpp"
#include "nlslab/evolution.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/modulation.hpp"
#include "nlslab/potential.hpp"
#include "nlslab/tuning.hpp"

namespace nlslab {

/// Everything needed to build initial data and run one trajectory.
struct Scenario {
  std::string name = "custom";
  std::size_t n = 64;
  double half_width = 16.0;
  Potential potential;

  /// "gaussian": amplitude * exp(-|x - center|^2 / (2 width^2)).
  /// "soliton": e^{i theta0} Q(. - y0) + epsilon * phi.
  std::string recipe = "gaussian";
  double amplitude = 1.0;
  double width = 1.0;
  Vec3 center{};
  Vec3 y0{};
  double theta0 = 0.0;
  double epsilon = 0.0;
  /// Replace the soliton by the exact standing wave of the time-stepping map,
  /// so the unstable direction of Q is seeded only by roundoff.
  bool scheme_stationary = false;
  std::string tuning = "none";  ///< none | product | exact

  PropagatorConfig propagator;
  std::vector<double> radii{2.0, 5.0, std::numeric_limits<double>::infinity()};
  double delta_gate = 0.1;  ///< relative to ||grad Q||^2
  bool track_modulation = false;
  std::uint64_t seed = 0;

  double mass_drift_limit = 1e-10;
  double energy_drift_limit = 1e-6;
  double energy_drift_window = 1.0;  ///< energy drift is checked on [0, window]
  bool expect_blowup = false;
};

inline Potential potential_from_config(const Config& cfg, const Grid3& grid) {
  const std::string kind = cfg.string("potential.kind", "zero");
  if (kind == "zero") return Potential::zero();
  if (kind == "gaussian_bump") {
    return Potential::gaussian_bump(cfg.number("potential.c", 1.0), cfg.number("potential.sigma", 1.0));
  }
  if (kind == "inverse_square") {
    return Potential::inverse_square(cfg.number("potential.a", 1.0), cfg.number("potential.eps", 2.0 * grid.dx()));
  }
  throw Error("config: unknown potential.kind '" + kind + "'");
}

inline Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "subthreshold-gaussian") {
    s.potential = Potential::gaussian_bump(1.0, 1.0);
    s.recipe = "gaussian";
    s.amplitude = 1.5;
    s.width = 1.0;
    s.propagator.dt = 1e-3;
    s.propagator.t_end = 4.0;
    s.propagator.stride = 10;
    return s;
  }
  if (name == "soliton-free") {
    s.potential = Potential::zero();
    s.recipe = "soliton";
    s.scheme_stationary = true;
    s.propagator.dt = 1e-3;
    s.propagator.t_end = 2.0;
    s.propagator.stride = 10;
    s.track_modulation = true;
    return s;
  }
  if (name == "threshold-far-soliton") {
    // dx = 0.25: at dx = 0.5 the lattice ground state is a local energy
    // minimum on the mass shell and admits no nearby threshold data.
    s.n = 128;
    s.potential = Potential::gaussian_bump(1.0, 1.0);
    s.recipe = "soliton";
    s.y0 = {8.0, 0.0, 0.0};
    s.epsilon = 0.02;
    s.tuning = "exact";
    s.propagator.dt = 1e-3;
    s.propagator.t_end = 1.0;
    s.propagator.stride = 10;
    s.track_modulation = true;
    return s;
  }
  throw Error("unknown builtin scenario '" + name + "'");
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"subthreshold-gaussian", "soliton-free", "threshold-far-soliton"};
  return names;
}

/// Scenario from a config: [scenario] builtin = "..." starts from a builtin,
/// every other key overrides.
inline Scenario scenario_from_config(const Config& cfg) {
  Scenario s = cfg.has("scenario.builtin") ? builtin_scenario(cfg.string("scenario.builtin", "")) : Scenario{};
  s.name = cfg.string("scenario.name", s.name);
  s.n = static_cast<std::size_t>(cfg.number("grid.n", static_cast<double>(s.n)));
  s.half_width = cfg.number("grid.L", s.half_width);
  const Grid3 grid(s.n, s.half_width);
  if (cfg.has("potential.kind")) s.potential = potential_from_config(cfg, grid);
  s.recipe = cfg.string("initial.recipe", s.recipe);
  s.amplitude = cfg.number("initial.amplitude", s.amplitude);
  s.width = cfg.number("initial.width", s.width);
  s.center = cfg.vec3("initial.center", s.center);
  s.y0 = cfg.vec3("initial.y0", s.y0);
  s.theta0 = cfg.number("initial.theta0", s.theta0);
  s.epsilon = cfg.number("initial.epsilon", s.epsilon);
  s.scheme_stationary = cfg.boolean("initial.scheme_stationary", s.scheme_stationary);
  s.tuning = cfg.string("initial.tuning", s.tuning);
  auto& p = s.propagator;
  p.dt = cfg.number("propagator.dt", p.dt);
  p.t_end = cfg.number("propagator.t_end", p.t_end);
  p.stride = static_cast<int>(cfg.number("propagator.stride", p.stride));
  p.dealias = cfg.boolean("propagator.dealias", p.dealias);
  p.nonlinear = cfg.boolean("propagator.nonlinear", p.nonlinear);
  p.blowup_factor = cfg.number("propagator.blowup_factor", p.blowup_factor);
  s.radii = cfg.array("diagnostics.radii", s.radii);
  s.delta_gate = cfg.number("diagnostics.delta_gate", s.delta_gate);
  s.track_modulation = cfg.boolean("diagnostics.track_modulation", s.track_modulation);
  s.seed = static_cast<std::uint64_t>(cfg.number("scenario.seed", static_cast<double>(s.seed)));
  s.mass_drift_limit = cfg.number("monitors.mass_drift", s.mass_drift_limit);
  s.energy_drift_limit = cfg.number("monitors.energy_drift", s.energy_drift_limit);
  s.energy_drift_window = cfg.number("monitors.energy_window", s.energy_drift_window);
  s.expect_blowup = cfg.boolean("monitors.expect_blowup", s.expect_blowup);
  if (s.recipe != "gaussian" && s.recipe != "soliton") throw Error("config: unknown initial.recipe '" + s.recipe + "'");
  if (s.tuning != "none" && s.tuning != "product" && s.tuning != "exact") {
    throw Error("config: unknown initial.tuning '" + s.tuning + "'");
  }
  return s;
}

/// Ground state of the discrete problem on `grid` (Petviashvili), cached per
/// grid shape for the life of the process.
inline std::shared_ptr<const RealField> lattice_ground_state(const Grid3& grid) {
  static std::mutex m;
  static std::vector<std::pair<Grid3, std::shared_ptr<const RealField>>> cache;
  {
    std::lock_guard lock(m);
    for (const auto& [g, q] : cache) {
      if (g == grid) return q;
    }
  }
  auto q = std::make_shared<const RealField>(real_part(solve_petviashvili(grid).field));
  std::lock_guard lock(m);
  cache.emplace_back(grid, q);
  return q;
}

/// Smooth complex bump near y0, with offset and phase drawn from the seed,
/// made L^2-orthogonal to Q_y0, d_j Q_y0 and Lap Q_y0 and normalized in L^2.
inline Field orthogonal_perturbation(SolitonFamily& family, const Vec3& y0, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Raw 53-bit draws so the values do not depend on the library's distributions.
  auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const Vec3 off{uniform() * 2.0 - 1.0, uniform() * 2.0 - 1.0, uniform() * 2.0 - 1.0};
  const double phase = uniform() * 2.0 * std::numbers::pi;
  const Grid3& grid = family.grid();
  const Vec3 c = y0 + off;
  Field phi = sample(grid, [&](const Vec3& x) {
    const Vec3 d = grid.wrap(x - c);
    return std::polar(std::exp(-0.5 * dot(d, d)), phase + 0.5 * d[0]);
  });
  std::vector<Field> basis;
  basis.push_back(to_complex(family.profile_at(y0)));
  for (const auto& g : family.gradient_at(y0)) basis.push_back(to_complex(g));
  basis.push_back(to_complex(family.laplacian_at(y0)));
  // Gram-Schmidt on the basis, then project phi out (complex coefficients).
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) basis[i] -= inner(basis[j], basis[i]) * basis[j];
    basis[i] *= 1.0 / std::sqrt(l2_norm_sq(basis[i]));
  }
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) phi -= inner(b, phi) * b;
  }
  phi *= 1.0 / std::sqrt(l2_norm_sq(phi));
  return phi;
}

struct MonitorTally {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = std::numeric_limits<double>::infinity();  ///< smallest observed margin
  void record(double margin) {
    ++checked;
    if (!(margin > 0.0)) ++violations;
    worst = std::min(worst, margin);
  }
  bool ok() const { return violations == 0; }
};

struct RunReport {
  std::string name;
  nlohmann::ordered_json json;
  std::vector<DiagnosticsRow> rows;
  std::vector<ModulationRow> modulation;
  std::vector<double> radii;
  std::optional<Field> final_state;
  bool monitors_pass = true;
};

/// Builds the initial field for a scenario. Also returns the tuning record
/// when tuning was requested.
inline Field initial_data(const Scenario& s, SolitonFamily& family, const PotentialFields& pf,
                          std::optional<TuningResult>& tuning) {
  const Grid3& grid = family.grid();
  Field u(grid);
  if (s.recipe == "gaussian") {
    u = sample(grid, [&](const Vec3& x) {
      const Vec3 d = grid.wrap(x - s.center);
      return Complex(s.amplitude * std::exp(-dot(d, d) / (2.0 * s.width * s.width)), 0.0);
    });
  } else {
    if (s.scheme_stationary) {
      PropagatorConfig pc = s.propagator;
      pc.potential = s.potential;
      u = scheme_stationary_state(family.profile_at(s.y0), pc);
      u *= std::polar(1.0, s.theta0);
    } else {
      u = family.soliton(s.theta0, s.y0);
    }
    if (s.epsilon != 0.0) {
      Field phi = orthogonal_perturbation(family, s.y0, s.seed);
      phi *= Complex(s.epsilon, 0.0) * std::polar(1.0, s.theta0);
      u += phi;
    }
  }
  if (s.tuning == "product") {
    tuning.emplace(tune_product(u, &pf, family.workspace(), family.constants()));
    u = tuning->field;
  } else if (s.tuning == "exact") {
    tuning.emplace(tune_exact(u, s.recipe == "gaussian" ? s.center : s.y0, s.potential, family.workspace(),
                              family.constants()));
    u = tuning->field;
  }
  return u;
}

inline nlohmann::ordered_json vec_json(const Vec3& v) { return nlohmann::ordered_json::array({v[0], v[1], v[2]}); }

inline double json_safe(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

/// Runs one scenario end to end and assembles its report (nothing is written).
inline RunReport run(const Scenario& s) {
  const Grid3 grid(s.n, s.half_width);
  RunReport rep;
  rep.name = s.name;
  rep.radii = s.radii;
  auto& j = rep.json;
  j["scenario"] = s.name;
  j["grid"] = {{"n", s.n}, {"L", s.half_width}, {"dx", grid.dx()}};
  j["seed"] = s.seed;

  const PotentialReport pr = validate_class(s.potential, grid, 20000);
  j["potential"] = {{"kind", pr.kind},
                    {"verdict", pr.verdict},
                    {"min_V", pr.min_v},
                    {"max_x_grad_V", pr.max_x_grad_v},
                    {"L32_V", pr.l32_v},
                    {"kato_sup", pr.kato_sup}};

  SolitonFamily family(*lattice_ground_state(grid));
  const GroundStateConstants& qc = family.constants();
  j["ground_state"] = {{"source", "lattice"},
                       {"L2_sq", qc.l2_sq},
                       {"H1_sq", qc.h1_sq},
                       {"L4_4", qc.l4_4},
                       {"E0", qc.energy},
                       {"M_E0", qc.mass_energy}};

  Diagnoser diag(grid, s.potential, s.radii, qc);
  std::optional<TuningResult> tuning;
  const Field u0 = initial_data(s, family, diag.potential_fields(), tuning);
  if (tuning) {
    j["tuning"] = {{"mode", tuning->mode},
                   {"lambda", tuning->lambda},
                   {"mu", tuning->mu},
                   {"product_residual", tuning->product_residual},
                   {"mass_residual", tuning->mass_residual},
                   {"energy_residual", tuning->energy_residual},
                   {"norm_product_over_cap", tuning->norm_product / tuning->norm_cap}};
  }

  PropagatorConfig pc = s.propagator;
  pc.potential = s.potential;
  ModulationTracker tracker(family, s.delta_gate * qc.h1_sq);
  const double cap_sq = qc.norm_cap() * qc.norm_cap();
  MonitorTally delta_pos, squeeze, repulsive, force_ratio;
  const auto result = evolve(u0, pc, [&](double t, const Field& u) {
    DiagnosticsRow r = diag.row(t, u);
    // Hypotheses of the monitored inequalities: strictly below the norm cap.
    if (r.l2_sq * r.h1v < cap_sq * (1.0 - 1e-9)) {
      delta_pos.record(r.delta / qc.h1_sq);
      squeeze.record((4.0 / 3.0 * r.kinetic - r.l4_4) / qc.h1_sq);
      force_ratio.record(r.delta > 0.0 ? r.f_inf_0 / r.delta : -1.0);
    }
    for (const auto& ft : r.f_terms) repulsive.record(ft.potential >= 0.0 ? 1.0 : ft.potential);
    if (s.track_modulation) tracker.observe(t, u, r.delta, r.potential, r.center);
    rep.rows.push_back(std::move(r));
  });
  tracker.finalize();
  rep.final_state.emplace(result.final_state);
  rep.modulation = tracker.rows();

  const auto& rows = rep.rows;
  const double m0 = rows.front().mass, e0 = rows.front().energy;
  double mass_drift = 0.0, energy_drift = 0.0, energy_drift_all = 0.0;
  for (const auto& r : rows) {
    mass_drift = std::max(mass_drift, std::abs(r.mass - m0) / m0);
    const double de = std::abs(r.energy - e0);
    energy_drift_all = std::max(energy_drift_all, de);
    if (r.t <= s.energy_drift_window + 1e-12) energy_drift = std::max(energy_drift, de);
  }
  j["conservation"] = {{"mass_drift_rel", mass_drift},
                       {"energy_drift_abs_window", energy_drift},
                       {"energy_window", s.energy_drift_window},
                       {"energy_drift_abs_full", energy_drift_all}};

  std::vector<double> times, l5, l4;
  for (const auto& r : rows) {
    times.push_back(r.t);
    l5.push_back(r.l5);
    l4.push_back(r.l4_4);
  }
  nlohmann::ordered_json vir = nlohmann::ordered_json::object();
  if (rows.size() >= 3) {
    for (std::size_t k = 0; k < s.radii.size(); ++k) {
      std::vector<double> p, f;
      for (const auto& r : rows) {
        p.push_back(r.p_r[k]);
        f.push_back(r.f_r[k]);
      }
      vir["R=" + radius_label(s.radii[k])] = virial_identity_residual(times, p, f, pc.dt, qc.h1_sq).max_abs();
    }
  }
  j["virial_residual_max"] = vir;

  const ScatteringProxy sp = scattering_proxy(times, l5, l4);
  j["scattering_proxy"] = {{"verdict", sp.verdict},
                           {"classification", sp.saturating ? "scattering-like" : "non-scattering"},
                           {"total", sp.total},
                           {"last_quarter_share", sp.last_quarter_share},
                           {"l4_decay_exponent", sp.l4_decay_exponent}};

  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
  for (const auto& r : rows) {
    dmin = std::min(dmin, r.delta);
    dmax = std::max(dmax, r.delta);
  }
  j["delta"] = {{"min", dmin}, {"max", dmax}, {"all_positive", dmin > 0.0}};

  // x(t): start, end, farthest excursion from the origin.
  double far = 0.0;
  for (const auto& r : rows) far = std::max(far, norm(r.center));
  j["center_path"] = {{"start", vec_json(rows.front().center)},
                      {"end", vec_json(rows.back().center)},
                      {"max_abs", far}};

  auto tally_json = [](const MonitorTally& t) {
    return nlohmann::ordered_json{{"checked", t.checked}, {"violations", t.violations},
                                  {"worst_margin", t.checked ? json_safe(t.worst) : 0.0}};
  };
  const bool blowup_ok = result.blowup.has_value() == s.expect_blowup;
  const bool mass_ok = mass_drift < s.mass_drift_limit;
  const bool energy_ok = energy_drift < s.energy_drift_limit;
  j["monitors"] = {{"delta_positive", tally_json(delta_pos)},
                   {"squeeze", tally_json(squeeze)},
                   {"repulsive_term", tally_json(repulsive)},
                   {"F_inf_over_delta", tally_json(force_ratio)},
                   {"mass_drift_ok", mass_ok},
                   {"energy_drift_ok", energy_ok},
                   {"blowup_as_expected", blowup_ok}};
  rep.monitors_pass = delta_pos.ok() && squeeze.ok() && repulsive.ok() && force_ratio.ok() && mass_ok && energy_ok &&
                      blowup_ok;
  j["monitors_pass"] = rep.monitors_pass;
  if (result.blowup) {
    j["blowup"] = {{"time", result.blowup->time},
                   {"location", vec_json(result.blowup->location)},
                   {"peak", result.blowup->peak},
                   {"reason", result.blowup->reason}};
  }

  if (s.track_modulation) {
    nlohmann::ordered_json mod;
    mod["tracked_slices"] = rep.modulation.size();
    mod["window_closed"] = tracker.closed();
    if (tracker.closed()) mod["close_reason"] = tracker.close_reason();
    auto band = [&](auto get) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& r : rep.modulation) {
        const double v = get(r);
        if (!std::isfinite(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      return nlohmann::ordered_json::array({json_safe(lo), json_safe(hi)});
    };
    mod["ratio_g"] = band([](const ModulationRow& r) { return r.ratio_g; });
    mod["ratio_pot"] = band([](const ModulationRow& r) { return r.ratio_pot; });
    mod["ratio_decay"] = band([](const ModulationRow& r) { return r.ratio_decay; });
    mod["ydot_over_delta"] = band([](const ModulationRow& r) { return r.ydot_over_delta; });
    mod["ortho_resid"] = band([](const ModulationRow& r) { return r.ortho_resid; });
    if (!rep.modulation.empty()) {
      mod["theta_end"] = rep.modulation.back().theta;
      mod["y_end"] = vec_json(rep.modulation.back().y);
    }
    // x(t) against delta(t): rows sorted by delta, split in quartiles.
    std::vector<std::pair<double, double>> pairs;
    for (const auto& r : rep.modulation) pairs.emplace_back(r.delta, norm(r.center));
    std::sort(pairs.begin(), pairs.end());
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    const std::size_t nb = std::min<std::size_t>(4, pairs.size());
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t a0 = b * pairs.size() / nb, a1 = (b + 1) * pairs.size() / nb;
      double sd = 0, sx = 0;
      for (std::size_t i = a0; i < a1; ++i) {
        sd += pairs[i].first;
        sx += pairs[i].second;
      }
      const double cnt = static_cast<double>(a1 - a0);
      table.push_back({{"delta_mean", sd / cnt}, {"abs_x_mean", sx / cnt}, {"count", a1 - a0}});
    }
    mod["x_vs_delta"] = table;
    if (pairs.size() >= 2) {
      double md = 0, mx = 0;
      for (const auto& [d, x] : pairs) {
        md += d;
        mx += x;
      }
      md /= static_cast<double>(pairs.size());
      mx /= static_cast<double>(pairs.size());
      double sdx = 0, sdd = 0, sxx = 0;
      for (const auto& [d, x] : pairs) {
        sdx += (d - md) * (x - mx);
        sdd += (d - md) * (d - md);
        sxx += (x - mx) * (x - mx);
      }
      mod["x_delta_correlation"] = sdd > 0 && sxx > 0 ? sdx / std::sqrt(sdd * sxx) : 0.0;
    }
    j["modulation"] = mod;
  }
  return rep;
}

inline std::string plot_script() {
  return "set datafile separator ','\n"
         "set key autotitle columnhead\n"
         "set terminal pngcairo size 1200,900\n"
         "set output 'diagnostics.png'\n"
         "set multiplot layout 2,2\n"
         "set xlabel 't'\n"
         "plot 'diagnostics.csv' using 1:7 with lines title 'delta'\n"
         "plot 'diagnostics.csv' using 1:3 with lines title 'E_V'\n"
         "plot 'diagnostics.csv' using 1:(column('l5_increment')) with lines title 'int |u|^5'\n"
         "plot 'modulation.csv' using 1:9 with lines title '||g||/delta', "
         "'' using 1:12 with lines title '|ydot|/delta'\n"
         "unset multiplot\n";
}

/// Writes report.json, diagnostics.csv, modulation.csv and plot.gp into dir.
inline void report_emit(const RunReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("report_emit: cannot create " + dir + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream os(fs::path(dir) / name, std::ios::binary);
    if (!os) throw Error(std::string("report_emit: cannot write ") + name);
    return os;
  };
  {
    auto os = open("report.json");
    os << rep.json.dump(2) << '\n';
  }
  {
    auto os = open("diagnostics.csv");
    write_diagnostics_header(os, rep.radii);
    for (const auto& r : rep.rows) write_diagnostics_row(os, r);
  }
  {
    auto os = open("modulation.csv");
    write_modulation_header(os);
    for (const auto& r : rep.modulation) write_modulation_row(os, r);
  }
  {
    auto os = open("plot.gp");
    os << plot_script();
  }
}

}  // namespace nlslab
