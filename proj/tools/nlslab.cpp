// nlslab command line driver.
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlslab/experiments.hpp"
#include "nlslab/snapshot.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace nlslab;

namespace {

void write_json(const ordered_json& j, const std::string& out, const char* name) {
  std::cout << j.dump(2) << '\n';
  if (out.empty()) return;
  fs::create_directories(out);
  std::ofstream os(fs::path(out) / name);
  if (!os) throw Error("cannot write " + (fs::path(out) / name).string());
  os << j.dump(2) << '\n';
}

ordered_json constants_json(const GroundStateConstants& c) {
  return {{"L2_sq", c.l2_sq}, {"H1_sq", c.h1_sq}, {"L4_4", c.l4_4}, {"E0", c.energy},
          {"M", c.mass},      {"M_E0", c.mass_energy}, {"C_GN", c.gn_constant}};
}

int cmd_groundstate(double tol, double rmax, const std::string& cache, const std::string& out) {
  const GroundStateProfile p = solve_shooting(tol, rmax);
  const GroundStateConstants c = constants(p);
  ordered_json j{{"Q0", p.central_value()},
                 {"radial_residual", radial_residual(p)},
                 {"tail_A", p.tail_amplitude()},
                 {"tail_mu", p.tail_rate()},
                 {"r_match", p.matching_radius()},
                 {"constants", constants_json(c)},
                 {"pohozaev_ratio", c.h1_sq / c.l4_4},
                 {"energy_ratio", 3.0 * c.energy / (0.5 * c.h1_sq)}};
  if (!cache.empty()) {
    save_profile(cache, p);
    j["cache"] = cache;
  }
  write_json(j, out, "groundstate.json");
  return 0;
}

int emit_run(const Scenario& s, const std::string& out, bool snapshot) {
  const RunReport rep = run(s);
  report_emit(rep, out);
  if (snapshot && rep.final_state) {
    write_snapshot((fs::path(out) / "final.snap").string(), *rep.final_state, rep.rows.back().t, s.name);
  }
  std::fprintf(stderr, "%s: monitors %s\n", s.name.c_str(), rep.monitors_pass ? "pass" : "FAIL");
  return rep.monitors_pass ? 0 : 1;
}

int cmd_run(std::vector<std::string> names, const std::string& config, const std::string& out, int jobs,
            std::optional<std::uint64_t> seed) {
  std::vector<Scenario> scenarios;
  if (!config.empty()) scenarios.push_back(scenario_from_config(Config::load(config)));
  if (names.empty() && config.empty()) names = builtin_names();
  for (const auto& n : names) scenarios.push_back(builtin_scenario(n));
  if (seed) {
    for (auto& s : scenarios) s.seed = *seed;
  }
  const std::string root = out.empty() ? "runs" : out;
  std::vector<int> status(scenarios.size(), 1);
  std::vector<std::string> errors(scenarios.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        status[i] = emit_run(scenarios[i], (fs::path(root) / scenarios[i].name).string(), false);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(scenarios.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  int rc = 0;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (!errors[i].empty()) std::fprintf(stderr, "%s: error: %s\n", scenarios[i].name.c_str(), errors[i].c_str());
    rc |= status[i];
  }
  return rc;
}

int cmd_validate_potential(const std::string& config, const std::string& out) {
  const Config cfg = config.empty() ? Config{} : Config::load(config);
  const Grid3 grid(static_cast<std::size_t>(cfg.number("grid.n", 64)), cfg.number("grid.L", 16));
  const Potential p = potential_from_config(cfg, grid);
  const PotentialReport r = validate_class(p, grid);
  ordered_json j{{"kind", r.kind},
                 {"min_V", r.min_v},
                 {"max_x_grad_V", r.max_x_grad_v},
                 {"L32_V", r.l32_v},
                 {"L32_x_grad_V", r.l32_x_grad_v},
                 {"tail_share", r.tail_share},
                 {"kato_sup", r.kato_sup},
                 {"sign_conditions", r.sign_conditions},
                 {"decay_conditions", r.decay_conditions},
                 {"inverse_square_identity", r.inverse_square_identity},
                 {"verdict", r.verdict}};
  write_json(j, out, "potential.json");
  return r.sign_conditions ? 0 : 1;
}

int cmd_fit_modulation(const std::string& config, const std::string& snapshot, const std::string& out) {
  const Snapshot snap = read_snapshot(snapshot);
  const Grid3& grid = snap.field.grid();
  const Config cfg = config.empty() ? Config{} : Config::load(config);
  const Potential p = cfg.has("potential.kind") ? potential_from_config(cfg, grid) : Potential::zero();
  SolitonFamily family(*lattice_ground_state(grid));
  auto [th, y] = initial_guess(family, snap.field);
  const ModulationFit f = fit(family, snap.field, th, y);
  const PotentialFields pf = eval_on_grid(p, grid);
  const EnergyParts e = energy_parts(snap.field, &pf, family.workspace());
  const double d = delta(e, family.constants());
  const double gh1 = h1_norm(f.g, family.workspace());
  ordered_json j{{"time", snap.time},
                 {"theta", f.theta},
                 {"y", vec_json(f.y)},
                 {"alpha", f.alpha},
                 {"g_H1", gh1},
                 {"delta", d},
                 {"ratio_g", gh1 / d},
                 {"ortho_resid", f.ortho_norm()},
                 {"iterations", f.iterations}};
  write_json(j, out, "modulation_fit.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nlslab: focusing cubic NLS with repulsive potentials"};
  app.require_subcommand(1);
  std::string config, out;
  int jobs = 1;
  std::uint64_t seed = 0;

  auto* gs = app.add_subcommand("groundstate", "solve for the ground state by shooting");
  double tol = 1e-10, rmax = 25.0;
  std::string cache;
  gs->add_option("--tol", tol, "bisection tolerance on Q(0)");
  gs->add_option("--rmax", rmax, "outer radius of the radial grid");
  gs->add_option("--cache", cache, "write the radial profile to this file");
  gs->add_option("--out", out, "directory for groundstate.json");

  auto* ev = app.add_subcommand("evolve", "evolve one configured scenario");
  ev->add_option("--config", config, "scenario file")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out, "output directory")->required();
  auto* ev_seed = ev->add_option("--seed", seed, "perturbation seed");

  auto* rn = app.add_subcommand("run", "run builtin scenarios (all by default)");
  std::vector<std::string> names;
  rn->add_option("scenarios", names, "builtin scenario names");
  rn->add_option("--config", config, "extra scenario file")->check(CLI::ExistingFile);
  rn->add_option("--out", out, "output root (default runs/)");
  rn->add_option("--jobs", jobs, "scenarios run concurrently")->check(CLI::PositiveNumber);
  auto* rn_seed = rn->add_option("--seed", seed, "perturbation seed for every scenario");

  auto* vp = app.add_subcommand("validate-potential", "check the repulsive-potential hypotheses on a grid");
  vp->add_option("--config", config, "file with [grid] and [potential] sections")->check(CLI::ExistingFile);
  vp->add_option("--out", out, "directory for potential.json");

  auto* fm = app.add_subcommand("fit-modulation", "fit the soliton modulation parameters to a snapshot");
  std::string snap;
  fm->add_option("snapshot", snap, "field snapshot")->required()->check(CLI::ExistingFile);
  fm->add_option("--config", config, "file with an optional [potential] section")->check(CLI::ExistingFile);
  fm->add_option("--out", out, "directory for modulation_fit.json");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gs) return cmd_groundstate(tol, rmax, cache, out);
    if (*ev) {
      Scenario s = scenario_from_config(Config::load(config));
      if (*ev_seed) s.seed = seed;
      return emit_run(s, out, true);
    }
    if (*rn) return cmd_run(names, config, out, jobs, *rn_seed ? std::optional(seed) : std::nullopt);
    if (*vp) return cmd_validate_potential(config, out);
    if (*fm) return cmd_fit_modulation(config, snap, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nlslab: %s\n", e.what());
    return 2;
  }
  return 2;
}
