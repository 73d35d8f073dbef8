#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "support.hpp"
#include "vmsim/error.hpp"
#include "vmsim/vlasov_transport.hpp"

using namespace vmsim;
using vmsim::testing::periodic_slab;
using vmsim::testing::random_distribution;
using vmsim::testing::walled_slab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double mass(const PhaseGrid& g, const Distribution& f) { return kinetic_norm(g, f, 1.0, false, 1.0); }

/// Uniform electric field along x on every container cell.
ForceField uniform_e(const PhaseGrid& g, double ex) {
  ForceField F = ForceField::zeros(g.space_count());
  for (Vec3& e : F.E) e = {ex, 0.0, 0.0};
  return F;
}

}  // namespace

TEST(Reflect, Examples) {
  const PhaseGrid g = periodic_slab(1, 8, 4.0);
  // Cell centres are (2i - 7)/2: index 5 -> 1.5, index 2 -> -1.5.
  const std::size_t v = g.velocity_index(4, 5, 2);
  const std::size_t r = reflect(g, v, 2);
  EXPECT_EQ(r, g.velocity_index(4, 5, 5));
  EXPECT_EQ(reflect(g, g.velocity_index(5, 3, 3), 0), g.velocity_index(2, 3, 3));
  EXPECT_EQ(reflect(Vec3{1, 2, -3}, Vec3{0, 0, 1}), (Vec3{1, 2, 3}));
  EXPECT_EQ(reflect(Vec3{1, 0, 0}, Vec3{1, 0, 0}), (Vec3{-1, 0, 0}));
}

TEST(Reflect, Involution) {
  const PhaseGrid g = periodic_slab(1, 6, 2.0);
  for (std::size_t v = 0; v < g.velocity_count(); ++v)
    for (int axis = 0; axis < 3; ++axis) EXPECT_EQ(reflect(g, reflect(g, v, axis), axis), v);
}

TEST(BoundarySpec, RegimeRules) {
  const PhaseGrid g = walled_slab(4, 2, 1.0);
  EXPECT_NO_THROW(BoundarySpec::reflecting().validate(g, BoundaryRegime::PurelyReflecting));
  EXPECT_THROW(BoundarySpec::absorbing(0.5).validate(g, BoundaryRegime::PurelyReflecting), Error);
  EXPECT_THROW(BoundarySpec::absorbing(1.0).validate(g, BoundaryRegime::PartiallyAbsorbing), Error);
  EXPECT_THROW(BoundarySpec::absorbing(-0.1).validate(g, BoundaryRegime::PartiallyAbsorbing), Error);
  BoundarySpec neg = BoundarySpec::absorbing(0.0);
  neg.inflow.assign(2 * g.velocity_count(), -1.0);
  EXPECT_THROW(neg.validate(g, BoundaryRegime::PartiallyAbsorbing), Error);
  EXPECT_EQ(BoundarySpec::absorbing(0.25).a0(), 0.25);
}

TEST(Transport, ZeroStaysZero) {
  const PhaseGrid g = walled_slab(8, 4, 2.0);
  VlasovTransport tr(g, SpeciesParams{}, BoundarySpec::absorbing(0.5));
  Distribution f = Distribution::zeros(g);
  const ForceField F = uniform_e(g, 0.3);
  for (int n = 0; n < 10; ++n) tr.step(f, &F, 0.5 * tr.stable_dt(&F));
  for (double x : f.values) EXPECT_EQ(x, 0.0);
}

TEST(Transport, RejectsStepAboveStabilityLimit) {
  const PhaseGrid g = walled_slab(8, 4, 2.0);
  VlasovTransport tr(g, SpeciesParams{}, BoundarySpec::absorbing(0.0));
  Distribution f = Distribution::zeros(g);
  try {
    tr.step(f, nullptr, 1.5 * tr.stable_dt());
    FAIL() << "expected CflError";
  } catch (const CflError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CflViolation);
    EXPECT_NEAR(e.dt_max(), tr.stable_dt(), 1e-15);
  }
}

TEST(Transport, ReflectingBoxConservesMassAndMax) {
  const PhaseGrid g = walled_slab(16, 6, 2.0);
  SpeciesParams sp;
  sp.regime = BoundaryRegime::PurelyReflecting;
  VlasovTransport tr(g, sp, BoundarySpec::reflecting());
  Distribution f = random_distribution(g, 11);
  const double m0 = mass(g, f), max0 = f.max();
  const double dt = 0.9 * tr.stable_dt();
  for (int n = 0; n < 200; ++n) tr.step(f, nullptr, dt);
  EXPECT_NEAR(mass(g, f), m0, 1e-12 * m0);
  EXPECT_LE(f.max(), max0);
  EXPECT_GE(f.min(), 0.0);
}

TEST(Transport, PositivityUnderForcesProperty) {
  const PhaseGrid g = walled_slab(8, 6, 2.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    VlasovTransport tr(g, SpeciesParams{"s", seed % 2 ? 1.0 : -1.0, 1.0 + seed % 3, BoundaryRegime::PartiallyAbsorbing},
                       BoundarySpec::absorbing(0.1 * static_cast<double>(seed % 5)));
    Distribution f = random_distribution(g, seed);
    ForceField F = ForceField::zeros(g.space_count());
    for (std::size_t s = 0; s < g.space_count(); ++s) {
      F.E[s] = {std::sin(s + seed), 0.5 * std::cos(s), -0.2};
      F.B[s] = {0.3, -0.7 * std::sin(seed + 0.5 * s), 1.1};
    }
    const double max0 = f.max();
    const double dt = tr.stable_dt(&F);
    for (int n = 0; n < 20; ++n) tr.step(f, &F, dt);
    EXPECT_GE(f.min(), 0.0);
    EXPECT_LE(f.max(), max0);
  }
}

TEST(Transport, FreeStreamingFirstOrder) {
  // Analytic oracle: cell averages of f0(x - v_hat t) for f0 = 1 + 0.5 sin(2 pi x).
  auto error_at = [](int nx) {
    const PhaseGrid g = periodic_slab(nx, 4, 1.0);
    VlasovTransport tr(g, SpeciesParams{"n", 0.0, 1.0, BoundaryRegime::PartiallyAbsorbing}, BoundarySpec::absorbing(0));
    const Kinematics& kin = tr.kinematics();
    const double h = 1.0 / nx, twopi = 2.0 * std::acos(-1.0);
    auto average = [&](int i, double shift) {
      const double a = i * h - shift, b = (i + 1) * h - shift;
      return 1.0 + 0.5 * (std::cos(twopi * a) - std::cos(twopi * b)) / (twopi * h);
    };
    Distribution f = Distribution::zeros(g);
    for (int i = 0; i < nx; ++i)
      for (std::size_t v = 0; v < g.velocity_count(); ++v) f.at(g, i, v) = average(i, 0.0);
    const double T = 0.25;
    const long steps = std::lround(std::ceil(T / (0.5 * tr.stable_dt())));
    const double dt = T / steps;
    for (long n = 0; n < steps; ++n) tr.step(f, nullptr, dt);
    double err = 0.0;
    for (int i = 0; i < nx; ++i)
      for (std::size_t v = 0; v < g.velocity_count(); ++v)
        err += std::abs(f.at(g, i, v) - average(i, kin.v_hat[v][0] * T)) * h * g.dv3();
    return err;
  };
  const double e1 = error_at(32), e2 = error_at(64), e3 = error_at(128);
  EXPECT_GT(std::log2(e1 / e2), 0.8);
  EXPECT_GT(std::log2(e2 / e3), 0.8);
}

TEST(Transport, ChargeBookkeepingClosesExactly) {
  const PhaseGrid g = walled_slab(16, 6, 2.0);
  BoundarySpec bc = BoundarySpec::absorbing(0.4);
  bc.inflow.assign(2 * g.velocity_count(), 0.0);
  const std::vector<WallCell> walls = wall_cells(g);
  const Kinematics kin(g, 1.0);
  for (std::size_t w = 0; w < walls.size(); ++w)
    for (std::size_t v = 0; v < g.velocity_count(); ++v)
      if (kin.v_hat[v][0] * walls[w].side < 0) bc.inflow[w * g.velocity_count() + v] = 0.2;
  VlasovTransport tr(g, SpeciesParams{}, bc);
  Distribution f = random_distribution(g, 5);
  const double m0 = mass(g, f);
  const ForceField F = uniform_e(g, 0.4);
  TransportTally total;
  const double dt = 0.8 * tr.stable_dt(&F);
  for (int n = 0; n < 50; ++n) total.accumulate(tr.step(f, &F, dt));
  const double predicted = m0 - total.out_number + total.in_number - total.leak_number;
  EXPECT_NEAR(mass(g, f), predicted, 1e-13 * m0);
  EXPECT_GT(total.out_number, 0.0);
  EXPECT_GT(total.g_number, 0.0);
}

TEST(Transport, KineticEnergyBalanceWithoutForce) {
  const PhaseGrid g = walled_slab(16, 6, 2.0);
  VlasovTransport tr(g, SpeciesParams{}, BoundarySpec::absorbing(0.3));
  Distribution f = random_distribution(g, 9);
  const double k0 = kinetic_norm(g, f, 1.0, true, 1.0);
  TransportTally total;
  for (int n = 0; n < 40; ++n) total.accumulate(tr.step(f, nullptr, 0.7 * tr.stable_dt()));
  EXPECT_NEAR(kinetic_norm(g, f, 1.0, true, 1.0), k0 - total.out_kin + total.in_kin, 1e-13 * k0);
}

TEST(Transport, FluxesStaySignedByVelocity) {
  const PhaseGrid g = walled_slab(8, 4, 2.0);
  VlasovTransport tr(g, SpeciesParams{}, BoundarySpec::absorbing(0.5));
  Distribution f = random_distribution(g, 2);
  for (int n = 0; n < 10; ++n) tr.step(f, nullptr, 0.5 * tr.stable_dt());
  const std::vector<WallCell>& walls = tr.walls();
  const Kinematics& kin = tr.kinematics();
  const std::size_t nv = g.velocity_count();
  for (std::size_t w = 0; w < walls.size(); ++w)
    for (std::size_t v = 0; v < nv; ++v) {
      const double vn = kin.v_hat[v][walls[w].axis] * walls[w].side;
      if (vn <= 0) EXPECT_EQ(f.outflow_trace[w * nv + v], 0.0);
      if (vn >= 0) EXPECT_EQ(f.inflow_record[w * nv + v], 0.0);
    }
}

TEST(PnormBound, AbsorbingWithAndWithoutInflow) {
  const PhaseGrid g = walled_slab(16, 6, 2.0);
  for (double a0 : {0.0, 0.5}) {
    for (bool inflow : {false, true}) {
      BoundarySpec bc = BoundarySpec::absorbing(a0);
      if (inflow) bc.inflow.assign(2 * g.velocity_count(), 0.3);
      VlasovTransport tr(g, SpeciesParams{}, bc);
      Distribution f = random_distribution(g, 4);
      const Distribution f0 = f;
      TransportTally total;
      const ForceField F = uniform_e(g, -0.25);
      for (int n = 0; n < 30; ++n) total.accumulate(tr.step(f, &F, 0.9 * tr.stable_dt(&F)));
      for (double p : {1.0, 2.0, kInf}) {
        const EstimateResult r = pnorm_bound_check(g, f0, f, total, a0, p);
        EXPECT_TRUE(r.pass) << "a0=" << a0 << " inflow=" << inflow << " p=" << p << " slack=" << r.slack;
      }
    }
  }
}

TEST(PnormBound, ZeroDataBothSidesZero) {
  const PhaseGrid g = walled_slab(4, 2, 1.0);
  const Distribution z = Distribution::zeros(g);
  const EstimateResult r = pnorm_bound_check(g, z, z, TransportTally{}, 0.0, 2.0);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(KineticInequality, FreeReflectingEnergyNonIncreasing) {
  const PhaseGrid g = walled_slab(16, 6, 2.0);
  SpeciesParams sp;
  sp.regime = BoundaryRegime::PurelyReflecting;
  VlasovTransport tr(g, sp, BoundarySpec::reflecting());
  Distribution f = random_distribution(g, 21);
  const Distribution f0 = f;
  TransportTally total;
  const double dt = 0.5 * tr.stable_dt();
  for (int n = 0; n < 50; ++n) total.accumulate(tr.step(f, nullptr, dt, 2.0));
  const EstimateResult r = kinetic_energy_inequality_check(g, f0, f, total, 1.0, 2.0, 1.0, dt);
  EXPECT_LE(r.lhs, r.rhs * (1 + 1e-13));
}

TEST(CurrentL43Bound, ScalingByTwoStillPasses) {
  const PhaseGrid g = walled_slab(16, 6, 2.0);
  Distribution f0 = Distribution::zeros(g);
  for (std::size_t s = 6; s < 10; ++s)
    for (std::size_t v = 100; v < 110; ++v) f0.at(g, s, v) = 0.8;
  for (double lambda : {1.0, 2.0}) {
    Distribution a = f0;
    for (double& x : a.values) x *= lambda;
    const Distribution start = a;
    VlasovTransport tr(g, SpeciesParams{}, BoundarySpec::absorbing(0.0));
    for (int n = 0; n < 10; ++n) tr.step(a, nullptr, 0.5 * tr.stable_dt());
    const EstimateResult r = current_l43_bound_check(g, start, a, 0.0, 0.0, 2.0, 1.0);
    EXPECT_TRUE(r.pass) << "lambda=" << lambda;
  }
  const Distribution z = Distribution::zeros(g);
  const EstimateResult zero = current_l43_bound_check(g, z, z, 0.0, 0.0, 2.0, 1.0);
  EXPECT_EQ(zero.lhs, 0.0);
}
