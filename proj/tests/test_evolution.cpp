#include <cmath>

#include <gtest/gtest.h>

#include "nlslab/diagnostics.hpp"
#include "nlslab/evolution.hpp"
#include "nlslab/ground_state.hpp"

using namespace nlslab;

namespace {

Field gaussian(const Grid3& g, double amp, double width, const Vec3& k = {0, 0, 0}) {
  return sample(g, [&](const Vec3& x) { return std::polar(amp * std::exp(-dot(x, x) / (width * width)), dot(k, x)); });
}

double max_diff(const Field& a, const Field& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

}  // namespace

TEST(Propagator, RejectsBadConfig) {
  const Grid3 g(16, 4.0);
  PropagatorConfig c;
  c.dt = 0.0;
  EXPECT_THROW(Propagator(g, c), Error);
  c.dt = NAN;
  EXPECT_THROW(Propagator(g, c), Error);
  c.dt = 1e-3;
  c.stride = 0;
  EXPECT_THROW(Propagator(g, c), Error);
  c.stride = 1;
  c.dt = 1.0;  // dt max|k|^2 > pi
  EXPECT_THROW(Propagator(g, c), Error);
  c.dt = 1e-3;
  c.t_end = 1e-4;
  EXPECT_THROW(evolve(gaussian(g, 1, 1), c), Error);
}

TEST(Evolution, FreeGaussianMatchesClosedForm) {
  // i u_t = -Lap u with u(0) = exp(-|x|^2): u = (1 + 4it)^{-3/2} exp(-|x|^2 / (1 + 4it)).
  const Grid3 g(64, 8.0);
  PropagatorConfig c;
  c.nonlinear = false;
  c.dt = 5e-3;
  c.t_end = 0.25;
  const EvolutionResult r = evolve(gaussian(g, 1.0, 1.0), c);
  const Complex z(1.0, 4.0 * c.t_end);
  const Field exact = sample(g, [&](const Vec3& x) { return std::pow(z, -1.5) * std::exp(-dot(x, x) / z); });
  EXPECT_LT(max_diff(r.final_state, exact), 1e-12);
  EXPECT_FALSE(r.blowup);
  EXPECT_EQ(r.times.size(), 6u);  // 50 steps at stride 10
  EXPECT_NEAR(r.times.back(), 0.25, 1e-15);
}

TEST(Evolution, ConstantPotentialIsAGlobalPhase) {
  // A very wide bump is constant c on the box, so u(t) = e^{-ict} u_free(t).
  const Grid3 g(32, 6.0);
  PropagatorConfig c;
  c.nonlinear = false;
  c.dt = 5e-3;
  c.t_end = 0.2;
  c.potential = Potential::gaussian_bump(0.7, 1e8);
  const Field u0 = gaussian(g, 1.0, 1.0);
  const Field with_v = evolve(u0, c).final_state;
  c.potential = Potential::zero();
  Field free = evolve(u0, c).final_state;
  free *= std::polar(1.0, -0.7 * c.t_end);
  EXPECT_LT(max_diff(with_v, free), 1e-12);
}

TEST(Evolution, MassConservedToRoundoff) {
  const Grid3 g(32, 8.0);
  PropagatorConfig c;
  c.dt = 2e-3;
  c.t_end = 0.2;
  c.potential = Potential::gaussian_bump(1.0, 1.0);
  const Field u0 = gaussian(g, 2.0, 1.0, {0.5, 0, 0});
  const double m0 = mass(u0);
  double worst = 0.0;
  evolve(u0, c, [&](double, const Field& u) { worst = std::max(worst, std::abs(mass(u) - m0) / m0); });
  EXPECT_LT(worst, 1e-13);
}

TEST(Evolution, TimeReversible) {
  const Grid3 g(32, 8.0);
  PropagatorConfig c;
  c.dt = 2e-3;
  c.t_end = 0.1;
  c.potential = Potential::gaussian_bump(1.0, 1.0);
  const Field u0 = gaussian(g, 2.0, 1.2, {0.3, -0.2, 0});
  const Field forward = evolve(u0, c).final_state;
  c.dt = -c.dt;
  const Field back = evolve(forward, c).final_state;
  EXPECT_LT(max_diff(back, u0), 1e-12);
  EXPECT_GT(max_diff(forward, u0), 1e-2);
}

TEST(Evolution, GaugeCovariant) {
  const Grid3 g(32, 8.0);
  PropagatorConfig c;
  c.dt = 2e-3;
  c.t_end = 0.05;
  const Field u0 = gaussian(g, 2.0, 1.0);
  const Complex phase = std::polar(1.0, 1.1);
  Field rotated = u0;
  rotated *= phase;
  Field a = evolve(u0, c).final_state;
  a *= phase;
  EXPECT_LT(max_diff(a, evolve(rotated, c).final_state), 1e-12);
}

TEST(Evolution, EnergyErrorIsSecondOrder) {
  const Grid3 g(32, 8.0);
  SpectralWorkspace ws(g);
  const Potential p = Potential::gaussian_bump(1.0, 1.0);
  const Field u0 = gaussian(g, 1.5, 1.0);
  const double e0 = energy(u0, p, ws);
  std::vector<double> drift;
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    PropagatorConfig c;
    c.dt = dt;
    c.t_end = 0.2;
    c.potential = p;
    drift.push_back(std::abs(energy(evolve(u0, c).final_state, p, ws) - e0));
  }
  EXPECT_NEAR(drift[0] / drift[1], 4.0, 0.4);
  EXPECT_NEAR(drift[1] / drift[2], 4.0, 0.4);
}

TEST(Evolution, DealiasingClearsHighModes) {
  const Grid3 g(32, 8.0);
  PropagatorConfig c;
  c.dt = 2e-3;
  c.t_end = 2e-3;
  c.dealias = true;
  const Field u = evolve(gaussian(g, 3.0, 0.7), c).final_state;
  SpectralWorkspace ws(g);
  const Spectrum s = ws.forward(u);
  double high = 0.0, low = 0.0;
  for (std::size_t idx = 0; idx < s.size(); ++idx) {
    const auto ijk = g.unravel(idx);
    bool cut = false;
    for (int a = 0; a < 3; ++a) cut = cut || std::abs(g.mode(ijk[a])) > 32 / 3;
    double& bucket = cut ? high : low;
    bucket = std::max(bucket, std::abs(s[idx]));
  }
  EXPECT_LT(high, 1e-13 * low);
}

TEST(Evolution, BlowupIsDetected) {
  const Grid3 g(32, 8.0);
  PropagatorConfig c;
  c.dt = 1e-3;
  c.t_end = 0.5;
  c.stride = 1;
  c.blowup_factor = 1.5;
  // Energy well below zero: the peak grows quickly.
  const EvolutionResult r = evolve(gaussian(g, 4.0, 1.0), c);
  ASSERT_TRUE(r.blowup.has_value());
  EXPECT_GT(r.blowup->peak, 6.0);
  EXPECT_LT(norm(r.blowup->location), 0.5);
  EXPECT_EQ(r.blowup->reason, "amplitude threshold exceeded");
  EXPECT_LT(r.blowup->time, c.t_end);
}

TEST(SchemeStationary, IsAStandingWaveOfTheStep) {
  const Grid3 g(32, 8.0);
  PropagatorConfig c;
  c.dt = 1e-3;
  const PetviashviliResult q = solve_petviashvili(g);
  const Field u0 = scheme_stationary_state(real_part(q.field), c);
  // Close to the lattice ground state, O(dt) away.
  EXPECT_LT(max_diff(u0, q.field) / max_abs(q.field), 1e-2);
  Propagator prop(g, c);
  Field u = u0;
  prop.step(u);
  Field expect = u0;
  expect *= std::polar(1.0, c.dt);
  EXPECT_LT(max_diff(u, expect) / max_abs(u0), 1e-12);
  prop.advance(u, 200);
  expect = u0;
  expect *= std::polar(1.0, 201 * c.dt);
  EXPECT_LT(max_diff(u, expect) / max_abs(u0), 1e-10);
}
