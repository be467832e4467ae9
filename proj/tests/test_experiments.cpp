#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "nlslab/experiments.hpp"

using namespace nlslab;

namespace {

const Grid3& small_grid() {
  static const Grid3 g(32, 8.0);
  return g;
}

SolitonFamily& family() {
  static SolitonFamily f(*lattice_ground_state(small_grid()));
  return f;
}

Field gaussian(const Grid3& g, double amp, double width) {
  return sample(g, [&](const Vec3& x) { return Complex(amp * std::exp(-dot(x, x) / (width * width)), 0.0); });
}

double max_diff(const Field& a, const Field& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Rescale, IdentityAtUnitScale) {
  const Field u = gaussian(Grid3(32, 8.0), 1.0, 1.5);
  EXPECT_LT(max_diff(rescale(u, {0, 0, 0}, 1.0), u), 1e-12);
}

TEST(Rescale, DilatesAWellResolvedGaussian) {
  // psi(c + mu (x - c)) for psi = exp(-|x - c|^2) is exp(-mu^2 |x - c|^2).
  const Grid3 g(64, 8.0);
  const Vec3 c{0.25, -0.5, 0.0};
  const Field u = sample(g, [&](const Vec3& x) {
    const Vec3 d = x - c;
    return Complex(std::exp(-dot(d, d)), 0.0);
  });
  for (double mu : {0.8, 1.25}) {
    const Field exact = sample(g, [&](const Vec3& x) {
      const Vec3 d = x - c;
      return Complex(std::exp(-mu * mu * dot(d, d)), 0.0);
    });
    EXPECT_LT(max_diff(rescale(u, c, mu), exact), 1e-10) << mu;
  }
}

TEST(TuneProduct, RecoversTheAmplitudeOfScaledGroundState) {
  const Field q = family().soliton(0.0, {0, 0, 0});
  Field half = q;
  half *= 0.5;
  const PotentialFields pf = eval_on_grid(Potential::zero(), small_grid());
  const TuningResult r = tune_product(half, &pf, family().workspace(), family().constants());
  EXPECT_EQ(r.mode, "product");
  EXPECT_NEAR(r.lambda, 2.0, 1e-6);
  EXPECT_LT(r.product_residual, 1e-12);
  EXPECT_LE(r.norm_product, r.norm_cap * (1.0 + 1e-12));
  EXPECT_DOUBLE_EQ(r.mu, 1.0);
}

TEST(TuneProduct, HitsTheThresholdUnderAPotential) {
  const Field u = gaussian(small_grid(), 1.0, 1.2);
  const PotentialFields pf = eval_on_grid(Potential::gaussian_bump(1.0, 1.0), small_grid());
  const TuningResult r = tune_product(u, &pf, family().workspace(), family().constants());
  EXPECT_LT(r.product_residual, 1e-12);
  EXPECT_LE(r.norm_product, r.norm_cap * (1.0 + 1e-12));
  Field expect = u;
  expect *= r.lambda;
  EXPECT_LT(max_diff(r.field, expect), 1e-15);
}

TEST(TuneProduct, RejectsZeroField) {
  const PotentialFields pf = eval_on_grid(Potential::zero(), small_grid());
  try {
    tune_product(Field(small_grid()), &pf, family().workspace(), family().constants());
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("psi must be nonzero"), std::string::npos);
  }
}

TEST(TuneExact, GroundStateIsAlreadyOnTheThreshold) {
  SolitonFamily fine(*lattice_ground_state(Grid3(64, 8.0)));
  const Field q = fine.soliton(0.0, {0, 0, 0});
  const TuningResult r = tune_exact(q, {0, 0, 0}, Potential::zero(), fine.workspace(), fine.constants());
  EXPECT_EQ(r.mode, "exact");
  EXPECT_DOUBLE_EQ(r.mu, 1.0);
  EXPECT_NEAR(r.lambda, 1.0, 1e-14);
  EXPECT_LT(r.mass_residual, 1e-13);
  EXPECT_LT(r.energy_residual, 1e-12);
}

TEST(TuneExact, CoarseGroundStateIsAnEnergyMinimumOnTheMassShell) {
  // At dx = 1/2 the energy rises on both sides of mu = 1, so mu = 1 is not on
  // the admissible branch and the solver moves to the smaller crossing.
  const Field q = family().soliton(0.0, {0, 0, 0});
  const TuningResult r = tune_exact(q, {0, 0, 0}, Potential::zero(), family().workspace(), family().constants());
  EXPECT_LT(r.mu, 0.95);
  EXPECT_LT(r.energy_residual, 1e-11);
  EXPECT_LT(r.mass_residual, 1e-12);
}

TEST(TuneExact, MatchesMassAndEnergySeparately) {
  const Field u = gaussian(small_grid(), 1.0, 1.2);
  const Potential p = Potential::gaussian_bump(1.0, 1.0);
  const TuningResult r = tune_exact(u, {0, 0, 0}, p, family().workspace(), family().constants());
  EXPECT_LT(r.mass_residual, 1e-12);
  EXPECT_LT(r.energy_residual, 1e-11);
  EXPECT_LE(r.norm_product, r.norm_cap * (1.0 + 1e-12));
  // The certificate is recomputed here from the returned field.
  const PotentialFields pf = eval_on_grid(p, small_grid());
  const EnergyParts e = energy_parts(r.field, &pf, family().workspace());
  const GroundStateConstants& q = family().constants();
  EXPECT_NEAR(e.mass(), q.mass, 1e-12 * q.mass);
  EXPECT_NEAR(e.energy(), q.energy, 1e-11 * q.energy);
  EXPECT_THROW(tune_exact(Field(small_grid()), {0, 0, 0}, p, family().workspace(), q), Error);
}

TEST(Config, BuiltinsAndOverrides) {
  for (const auto& name : builtin_names()) EXPECT_EQ(builtin_scenario(name).name, name);
  EXPECT_THROW(builtin_scenario("nope"), Error);
  const Config cfg = Config::parse_string(
      "[scenario]\nbuiltin = \"subthreshold-gaussian\"\nseed = 7\n"
      "[grid]\nn = 32\nL = 6\n"
      "[propagator]\nt_end = 0.5\n"
      "[diagnostics]\nradii = [3, 4]\n");
  const Scenario s = scenario_from_config(cfg);
  EXPECT_EQ(s.name, "subthreshold-gaussian");
  EXPECT_EQ(s.n, 32u);
  EXPECT_DOUBLE_EQ(s.half_width, 6.0);
  EXPECT_DOUBLE_EQ(s.amplitude, 1.5);  // kept from the builtin
  EXPECT_DOUBLE_EQ(s.propagator.t_end, 0.5);
  EXPECT_DOUBLE_EQ(s.propagator.dt, 1e-3);
  EXPECT_EQ(s.radii, (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(s.potential.name(), "gaussian_bump");
}

TEST(Config, PotentialKinds) {
  const Grid3 g(32, 8.0);
  const Potential inv = potential_from_config(Config::parse_string("[potential]\nkind = \"inverse_square\"\n"), g);
  const auto& k = std::get<InverseSquare>(inv.kind());
  EXPECT_DOUBLE_EQ(k.a, 1.0);
  EXPECT_DOUBLE_EQ(k.eps, 2.0 * g.dx());
  const Potential bump = potential_from_config(
      Config::parse_string("[potential]\nkind = \"gaussian_bump\"\nc = 2\nsigma = 0.5\n"), g);
  EXPECT_DOUBLE_EQ(bump.value({0.5, 0, 0}), 2.0 * std::exp(-1.0));
  EXPECT_TRUE(potential_from_config(Config::parse_string(""), g).is_zero());
  EXPECT_THROW(potential_from_config(Config::parse_string("[potential]\nkind = \"well\"\n"), g), Error);
}

TEST(Config, RejectsUnknownChoices) {
  EXPECT_THROW(scenario_from_config(Config::parse_string("[initial]\nrecipe = \"vortex\"\n")), Error);
  EXPECT_THROW(scenario_from_config(Config::parse_string("[initial]\ntuning = \"approx\"\n")), Error);
  EXPECT_THROW(scenario_from_config(Config::parse_string("[scenario]\nbuiltin = \"x\"\n")), Error);
}

TEST(Perturbation, OrthogonalNormalizedAndSeeded) {
  const double h = small_grid().dx();
  const Vec3 y0{2 * h, 0, -h};
  const Field a = orthogonal_perturbation(family(), y0, 11);
  EXPECT_NEAR(l2_norm_sq(a), 1.0, 1e-13);
  std::vector<Field> basis;
  basis.push_back(to_complex(family().profile_at(y0)));
  for (const auto& g : family().gradient_at(y0)) basis.push_back(to_complex(g));
  basis.push_back(to_complex(family().laplacian_at(y0)));
  for (const auto& b : basis) EXPECT_LT(std::abs(inner(b, a)) / std::sqrt(l2_norm_sq(b)), 1e-12);
  const Field again = orthogonal_perturbation(family(), y0, 11);
  EXPECT_EQ(max_diff(a, again), 0.0);
  EXPECT_GT(max_diff(a, orthogonal_perturbation(family(), y0, 12)), 1e-3);
}

TEST(MonitorTally, CountsNonPositiveMargins) {
  MonitorTally t;
  EXPECT_TRUE(t.ok());
  t.record(0.5);
  t.record(0.1);
  EXPECT_TRUE(t.ok());
  EXPECT_DOUBLE_EQ(t.worst, 0.1);
  t.record(0.0);
  t.record(NAN);
  EXPECT_FALSE(t.ok());
  EXPECT_EQ(t.checked, 4u);
  EXPECT_EQ(t.violations, 2u);
}

TEST(Run, SmallScenarioIsDeterministicAndReported) {
  Scenario s;
  s.name = "probe";
  s.n = 32;
  s.half_width = 8.0;
  s.potential = Potential::gaussian_bump(1.0, 1.0);
  s.amplitude = 1.0;
  s.propagator.dt = 2e-3;
  s.propagator.t_end = 0.1;
  s.propagator.stride = 5;
  s.energy_drift_limit = 1e-4;
  const RunReport a = run(s);
  const RunReport b = run(s);
  EXPECT_EQ(a.json.dump(), b.json.dump());
  EXPECT_EQ(max_diff(*a.final_state, *b.final_state), 0.0);
  EXPECT_TRUE(a.monitors_pass) << a.json["monitors"].dump();
  EXPECT_EQ(a.rows.size(), 11u);
  EXPECT_LT(a.json["conservation"]["mass_drift_rel"].get<double>(), 1e-12);
  EXPECT_TRUE(a.json["delta"]["all_positive"].get<bool>());
  EXPECT_EQ(a.json["potential"]["kind"], "gaussian_bump");
  EXPECT_FALSE(a.json.contains("blowup"));

  const auto dir = std::filesystem::temp_directory_path() / "nlslab_report_test";
  std::filesystem::remove_all(dir);
  report_emit(a, dir.string());
  for (const char* f : {"report.json", "diagnostics.csv", "modulation.csv", "plot.gp"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto parsed = nlohmann::ordered_json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(parsed["scenario"], "probe");
  const std::string csv = slurp(dir / "diagnostics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
  std::filesystem::remove_all(dir);
}

TEST(Run, ExpectedBlowupIsAPass) {
  Scenario s;
  s.n = 32;
  s.half_width = 8.0;
  s.amplitude = 4.0;
  s.propagator.dt = 1e-3;
  s.propagator.t_end = 0.5;
  s.propagator.stride = 1;
  s.propagator.blowup_factor = 1.5;
  s.energy_drift_limit = 1e9;
  s.expect_blowup = true;
  const RunReport r = run(s);
  ASSERT_TRUE(r.json.contains("blowup"));
  EXPECT_TRUE(r.json["monitors"]["blowup_as_expected"].get<bool>());
}
