#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "nlslab/diagnostics.hpp"
#include "nlslab/evolution.hpp"

using namespace nlslab;
using std::numbers::pi;

namespace {

Field bump(const Grid3& g, double amp, const Vec3& c, const Vec3& k = {0, 0, 0}) {
  return sample(g, [&](const Vec3& x) {
    const Vec3 d = x - c;
    return std::polar(amp * std::exp(-dot(d, d)), dot(k, x));
  });
}

}  // namespace

TEST(Energy, GaussianClosedForm) {
  const Grid3 g(64, 8.0);
  SpectralWorkspace ws(g);
  const double a = 1.3, c = 0.8, s = 1.5;
  const Field u = bump(g, a, {0, 0, 0});
  const PotentialFields pf = eval_on_grid(Potential::gaussian_bump(c, s), g);
  const EnergyParts e = energy_parts(u, &pf, ws);
  const double g32 = std::pow(pi / 2.0, 1.5);
  EXPECT_NEAR(e.l2_sq, a * a * g32, 1e-12);
  EXPECT_NEAR(e.kinetic, 3.0 * a * a * g32, 1e-11);
  EXPECT_NEAR(e.potential, c * a * a * std::pow(pi / (2.0 + 1.0 / (s * s)), 1.5), 1e-12);
  EXPECT_NEAR(e.l4_4, std::pow(a, 4) * std::pow(pi / 4.0, 1.5), 1e-11);
  EXPECT_DOUBLE_EQ(e.energy(), 0.5 * e.kinetic + 0.5 * e.potential - 0.25 * e.l4_4);
  EXPECT_DOUBLE_EQ(mass(u), 0.5 * e.l2_sq);
  EXPECT_DOUBLE_EQ(energy(u, Potential::gaussian_bump(c, s), ws), e.energy());
}

TEST(Energy, GroundStateDeltaAndVirialConnect) {
  const Grid3 g(32, 8.0);
  SpectralWorkspace ws(g);
  const Field q = solve_petviashvili(g).field;
  const GroundStateConstants c = constants(real_part(q), ws);
  EXPECT_NEAR(delta(q, nullptr, ws, c), 0.0, 1e-12);
  // With V = 0 the connection identity reduces to the lattice Pohozaev
  // relation, which the lattice Q_h only meets to discretization accuracy.
  const double resid = identity_virial_connect(q, nullptr, ws, c);
  EXPECT_LT(std::abs(resid), 0.2);
  Field off = q;
  off *= 1.01;
  EXPECT_THROW(identity_virial_connect(off, nullptr, ws, c), Error);
}

TEST(Cutoff, ProfileIsC4AndMonotone) {
  const double h = 1e-5;
  for (double s0 : {1.0, 3.0}) {
    const auto lo = CutoffProfile::derivatives(s0 - 1e-12);
    const auto hi = CutoffProfile::derivatives(s0 + 1e-12);
    for (int m = 0; m <= 4; ++m) EXPECT_NEAR(lo[m], hi[m], 1e-8) << "s=" << s0 << " m=" << m;
  }
  // Sample points avoid the seams, where the fifth derivative jumps and
  // spoils the difference quotient.
  for (double s = 0.005; s < 3.5; s += 0.01) {
    const auto d = CutoffProfile::derivatives(s);
    ASSERT_GE(d[1], -1e-14) << s;
    ASSERT_LE(d[0], 4.0 + 1e-14) << s;
    const auto p = CutoffProfile::derivatives(s + h), m = CutoffProfile::derivatives(s - h);
    for (int k = 0; k < 4; ++k) ASSERT_NEAR(d[k + 1], (p[k] - m[k]) / (2 * h), 1e-5 * (1 + std::abs(d[k + 1]))) << s;
  }
}

TEST(Weight, RejectsSmallRadius) { EXPECT_THROW(build_weight(Grid3(8, 4.0), 0.5), Error); }

TEST(Weight, InfiniteRadiusIsQuadratic) {
  const Grid3 g(16, 4.0);
  const VirialWeight w = build_weight(g, INFINITY);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 x = g.position(i);
    ASSERT_DOUBLE_EQ(w.w[i], dot(x, x));
    ASSERT_EQ(w.lap[i], 6.0);
    ASSERT_EQ(w.bilap[i], 0.0);
  }
}

TEST(Weight, SpectralAndClosedFormDerivativesAgree) {
  const Grid3 g(64, 8.0);
  const VirialWeight s = build_weight(g, 2.0, WeightDerivatives::Spectral);
  const VirialWeight c = build_weight(g, 2.0, WeightDerivatives::ClosedForm);
  double lap = 0.0, bilap = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    lap = std::max(lap, std::abs(s.lap[i] - c.lap[i]));
    bilap = std::max(bilap, std::abs(s.bilap[i] - c.bilap[i]));
    peak = std::max(peak, std::abs(c.bilap[i]));
  }
  // w_R is only C^4 at the seams, so the spectral bilaplacian carries Gibbs
  // ripples of order 10% of its peak at dx = 1/4. The spectral version is the
  // one consistent with the discrete flow; see IdentityHoldsAlongTheFlow.
  EXPECT_LT(lap, 1e-3 * 6.0);
  EXPECT_LT(bilap, 0.1 * peak);
}

TEST(Virial, MomentumOfBoostedGaussian) {
  // P_inf = 2 Im integral conj(u) grad u . 2x = 4 k . c ||a||^2 for u = a(x - c) e^{ik.x}.
  const Grid3 g(64, 8.0);
  SpectralWorkspace ws(g);
  const Vec3 c{0.5, -0.25, 0.75}, k{0.7, 0.3, -0.4};
  const Field u = bump(g, 1.2, c, k);
  // k is not a lattice wavenumber, so the boost has a jump at the box face;
  // it sits where the envelope is below 1e-25.
  const double expect = 4.0 * dot(k, c) * l2_norm_sq(u);
  EXPECT_NEAR(virial_momentum(u, build_weight(g, INFINITY), ws), expect, 1e-8);
  // Inside the ball |x| < R the weight is |x|^2 too; with R = 5 the envelope
  // is negligible beyond R.
  EXPECT_NEAR(virial_momentum(u, build_weight(g, 5.0), ws), expect, 1e-8);
}

TEST(Virial, FreeForceAtInfinity) {
  const Grid3 g(32, 8.0);
  SpectralWorkspace ws(g);
  const Field u = bump(g, 2.0, {0.3, 0, 0}, {0.5, 0, 0});
  const VirialTerms t = virial_terms(u, build_weight(g, INFINITY), nullptr, ws);
  EXPECT_EQ(t.bilaplacian, 0.0);
  EXPECT_EQ(t.potential, 0.0);
  EXPECT_NEAR(t.total(), virial_force_free(u, ws), 1e-10 * std::abs(t.hessian));
  // Ground state: 8 ||grad Q||^2 - 6 ||Q||_4^4 = 0 in the continuum.
  const GroundStateProfile p = solve_shooting();
  const Grid3 fine(128, 9.0);
  SpectralWorkspace wf(fine);
  const Field q = soliton(fine, p, 0.0, {0, 0, 0}, 1e-4);
  EXPECT_LT(std::abs(virial_force_free(q, wf)) / wf.h1_seminorm_sq(q), 1e-7);
}

TEST(Virial, RepulsiveTermHasSign) {
  const Grid3 g(32, 8.0);
  SpectralWorkspace ws(g);
  const PotentialFields pf = eval_on_grid(Potential::gaussian_bump(1.0, 1.0), g);
  for (double r : {2.0, 5.0, double(INFINITY)}) {
    const VirialTerms t = virial_terms(bump(g, 1.0, {0.4, 0.2, 0}), build_weight(g, r), &pf, ws);
    EXPECT_GT(t.potential, 0.0) << r;
  }
}

TEST(Virial, IdentityHoldsAlongTheFlow) {
  // d/dt P_R = F_R^V holds exactly for the semi-discrete flow; what remains
  // is the O(dt^2) splitting error plus the centered difference. At dx = 1/2
  // a spatial floor near 2e-4 hides it; dx = 1/4 pushes the floor below 1e-8.
  const Grid3 g(64, 8.0);
  const Potential pot = Potential::gaussian_bump(1.0, 1.0);
  SpectralWorkspace ws(g);
  const PotentialFields pf = eval_on_grid(pot, g);
  const VirialWeight w = build_weight(g, 2.0);
  std::vector<double> worst;
  for (double dt : {1e-3, 5e-4}) {
    PropagatorConfig cfg;
    cfg.dt = dt;
    cfg.t_end = 0.1;
    cfg.stride = 1;
    cfg.potential = pot;
    std::vector<double> t, p, f;
    evolve(bump(g, 1.5, {0.2, 0, 0}, {0.3, 0, 0}), cfg, [&](double time, const Field& u) {
      t.push_back(time);
      p.push_back(virial_momentum(u, w, ws));
      f.push_back(virial_force(u, w, &pf, ws));
    });
    const IdentityResidual r = virial_identity_residual(t, p, f, cfg.dt, 56.69);
    EXPECT_EQ(r.times.size(), t.size() - 2);
    worst.push_back(r.max_abs());
  }
  EXPECT_LT(worst[0], 5e-6);
  EXPECT_NEAR(worst[0] / worst[1], 4.0, 0.5);
}

TEST(Virial, ResidualSeriesChecks) {
  std::vector<double> t, p, f;
  for (int m = 0; m <= 100; ++m) {
    t.push_back(0.01 * m);
    p.push_back(std::sin(t.back()));
    f.push_back(std::cos(t.back()));
  }
  const IdentityResidual r = virial_identity_residual(t, p, f, 1e-3, 1.0);
  // Centered difference of sin: error h^2 / 6 |cos| <= 1.7e-5.
  EXPECT_LT(r.max_abs(), 1.7e-5);
  EXPECT_GT(r.max_abs(), 1.0e-5);
  EXPECT_THROW(virial_identity_residual(t, p, f, 1e-4, 1.0), Error);
  f.pop_back();
  EXPECT_THROW(virial_identity_residual(t, p, f, 1e-3, 1.0), Error);
}

TEST(Center, FindsBumpAndBreaksTies) {
  const Grid3 g(32, 8.0);
  SpectralWorkspace ws(g);
  const Vec3 c{1.5, -2.0, 0.5};
  const Vec3 found = spatial_center(bump(g, 1.0, c), ws);
  for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(found[a], c[a]);
  // Two equal bumps at equal |x|: the lexicographically smaller wins.
  Field two = bump(g, 1.0, {2, 0, 0});
  two += bump(g, 1.0, {-2, 0, 0});
  const Vec3 tie = spatial_center(two, ws);
  EXPECT_DOUBLE_EQ(tie[0], -2.0);
  EXPECT_DOUBLE_EQ(tie[1], 0.0);
  EXPECT_THROW(spatial_center(Field(g), ws), Error);
}

TEST(Scattering, SaturatingAndGrowing) {
  std::vector<double> t, decaying, flat, l4;
  for (int m = 0; m <= 400; ++m) {
    t.push_back(0.025 * m);
    decaying.push_back(std::exp(-2.0 * t.back()));
    flat.push_back(1.0);
    l4.push_back(std::pow(1.0 + t.back(), -6.0));
  }
  const ScatteringProxy a = scattering_proxy(t, decaying, l4);
  EXPECT_TRUE(a.saturating);
  EXPECT_EQ(a.verdict, "saturating");
  // Trapezoid sum of e^{-2t} with step h, exactly.
  const double h = 0.025;
  EXPECT_NEAR(a.total, 0.5 * h * (1 + std::exp(-2 * h)) / (1 - std::exp(-2 * h)) * (1 - std::exp(-20.0)), 1e-12);
  const ScatteringProxy b = scattering_proxy(t, flat, l4);
  EXPECT_FALSE(b.saturating);
  EXPECT_NEAR(b.last_quarter_share, 0.25, 1e-12);
  // ||u||_4 = (1 + t)^{-3/2}; against log t on [5, 10] the slope is close to -1.5.
  EXPECT_NEAR(b.l4_decay_exponent, -1.5 * 10.0 / 11.0, 0.05);
  EXPECT_THROW(scattering_proxy(t, flat, {1.0}), Error);
}

TEST(Csv, HeaderAndRoundTrip) {
  std::ostringstream os;
  write_diagnostics_header(os, {2.0, 5.0, INFINITY});
  EXPECT_EQ(os.str(),
            "t,M,E_V,H1V,potV,L4,delta,P_R2,F_R2_V,P_R5,F_R5_V,P_Rinf,F_Rinf_V,F_inf_0,xc_x,xc_y,xc_z,l5_increment\n");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(radius_label(2.5), "2.5");
}

TEST(Diagnoser, RowMatchesStandaloneFunctions) {
  const Grid3 g(32, 8.0);
  const Potential pot = Potential::gaussian_bump(1.0, 1.0);
  const GroundStateConstants q = constants(solve_shooting());
  Diagnoser d(g, pot, {2.0, INFINITY}, q);
  const Field u = bump(g, 1.5, {0.5, 0, 0}, {0.2, 0.1, 0});
  const DiagnosticsRow r = d.row(0.5, u);
  SpectralWorkspace ws(g);
  const PotentialFields pf = eval_on_grid(pot, g);
  EXPECT_NEAR(r.energy, energy(u, &pf, ws), 1e-12);
  EXPECT_NEAR(r.delta, delta(u, &pf, ws, q), 1e-11);
  EXPECT_NEAR(r.f_inf_0, virial_force_free(u, ws), 1e-10);
  EXPECT_NEAR(r.p_r[1], virial_momentum(u, build_weight(g, INFINITY), ws), 1e-12);
  EXPECT_NEAR(r.f_r[0], virial_force(u, build_weight(g, 2.0), &pf, ws), 1e-10);
  EXPECT_DOUBLE_EQ(r.center[0], 0.5);
  EXPECT_NEAR(r.l5, l5_norm_5(u), 1e-14);
}
