#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "support.hpp"
#include "vmsim/error.hpp"
#include "vmsim/phase_space.hpp"

using namespace vmsim;
using vmsim::testing::periodic_slab;
using vmsim::testing::walled_slab;

TEST(VelocityMap, ZeroMomentum) {
  const VelocityMap a = velocity_map({0, 0, 0}, 1.0);
  EXPECT_EQ(a.v_hat, (Vec3{0, 0, 0}));
  EXPECT_EQ(a.v0, 1.0);
  const VelocityMap b = velocity_map({0, 0, 0}, 2.0);
  EXPECT_EQ(b.v_hat, (Vec3{0, 0, 0}));
  EXPECT_EQ(b.v0, 2.0);
}

TEST(VelocityMap, SqrtThreeAlongZ) {
  const VelocityMap m = velocity_map({0, 0, std::sqrt(3.0)}, 1.0);
  EXPECT_DOUBLE_EQ(m.v0, 2.0);
  EXPECT_DOUBLE_EQ(m.v_hat[2], std::sqrt(3.0) / 2.0);
  EXPECT_EQ(m.v_hat[0], 0.0);
}

TEST(VelocityMap, SubluminalProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::uniform_real_distribution<double> mass(1.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    const double m = mass(rng);
    const VelocityMap vm = velocity_map(p, m);
    EXPECT_LT(std::sqrt(dot(vm.v_hat, vm.v_hat)), 1.0);
    EXPECT_GE(vm.v0, m);
  }
}

TEST(GammaWeight, Examples) {
  EXPECT_DOUBLE_EQ(gamma_weight({0, 0, std::sqrt(3.0)}, {0, 0, 1}, 1.0), std::sqrt(3.0) / 2.0);
  EXPECT_EQ(gamma_weight({1.5, -2.0, 0.0}, {0, 0, 1}, 1.0), 0.0);
  const Vec3 v{0.3, -1.2, 2.5};
  EXPECT_EQ(gamma_weight(v, {0, 1, 0}, 1.0), gamma_weight({-0.3, 1.2, -2.5}, {0, 1, 0}, 1.0));
}

TEST(SpeciesParams, RestMassBelowOneRejected) {
  SpeciesParams p;
  p.rest_mass = 0.5;
  try {
    p.validate();
    FAIL() << "expected ValidationError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ValidationError);
    EXPECT_NE(std::string(e.what()).find("rest_mass >= 1"), std::string::npos);
  }
}

TEST(PhaseGrid, VelocityGridIsSymmetric) {
  const PhaseGrid g = periodic_slab(4, 16, 3.0);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(g.velocity_center(i), -g.velocity_center(15 - i));
  EXPECT_DOUBLE_EQ(g.dv(), 6.0 / 16);
}

TEST(PhaseGrid, RejectsOddVelocityCells) {
  EXPECT_THROW(periodic_slab(4, 7, 1.0), Error);
}

TEST(PhaseGrid, ContainerMustSitStrictlyInsideWalledAxes) {
  EXPECT_THROW(PhaseGrid(FieldGrid{{8, 1, 1}, {1, 1, 1}, {false, true, true}}, CellBox{{0, 0, 0}, {8, 1, 1}}, 2,
                         1.0, GridMode::Slab1d3v),
               Error);
}

TEST(PhaseGrid, SlabNeedsSingleCellTransverse) {
  EXPECT_THROW(PhaseGrid(FieldGrid{{8, 2, 1}, {1, 1, 1}, {true, true, true}}, CellBox{{0, 0, 0}, {8, 2, 1}}, 2, 1.0,
                         GridMode::Slab1d3v),
               Error);
}

TEST(WallCells, CountAndOrientation) {
  const PhaseGrid slab = walled_slab(10, 4, 1.0);
  const std::vector<WallCell> w = wall_cells(slab);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].side, -1);
  EXPECT_EQ(w[0].space, 0u);
  EXPECT_EQ(w[1].side, 1);
  EXPECT_EQ(w[1].space, 9u);
  const PhaseGrid cube(FieldGrid{{6, 6, 6}, {1, 1, 1}, {false, false, false}}, CellBox{{1, 1, 1}, {5, 5, 5}}, 2, 1.0,
                       GridMode::Full3d3v);
  EXPECT_EQ(wall_cells(cube).size(), 6u * 16u);
  EXPECT_TRUE(wall_cells(periodic_slab(4, 2, 1.0)).empty());
}

TEST(Moments, ZeroDistribution) {
  const PhaseGrid g = periodic_slab(4, 4, 2.0);
  const std::vector<Distribution> f{Distribution::zeros(g)};
  const std::vector<SpeciesParams> sp{SpeciesParams{}};
  const Moments m = moments(g, f, sp);
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    EXPECT_EQ(m.rho[s], 0.0);
    EXPECT_EQ(m.j[s], (Vec3{0, 0, 0}));
  }
}

TEST(Moments, EvenDistributionCarriesNoCurrent) {
  const PhaseGrid g = periodic_slab(3, 6, 2.0);
  Distribution f = Distribution::zeros(g);
  const int n = g.velocity_cells();
  for (std::size_t s = 0; s < g.space_count(); ++s)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          const double r2 = (a - 2.5) * (a - 2.5) + (b - 2.5) * (b - 2.5) + 2.0 * (c - 2.5) * (c - 2.5);
          f.at(g, s, g.velocity_index(a, b, c)) = std::exp(-r2 / (s + 1.0));
        }
  const std::vector<Distribution> fs{f};
  const std::vector<SpeciesParams> sp{SpeciesParams{}};
  const Moments m = moments(g, fs, sp);
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    EXPECT_GT(m.rho[s], 0.0);
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(m.j[s][d], 0.0, 1e-15);
  }
}

TEST(Moments, ConstantOnVelocityBox) {
  // f = c on the velocity cells covering [-1, 1]^3: rho = c * 8 exactly for midpoint quadrature.
  const PhaseGrid g = periodic_slab(1, 8, 2.0);
  Distribution f = Distribution::zeros(g);
  const double c = 0.3;
  for (std::size_t v = 0; v < g.velocity_count(); ++v) {
    const Vec3 p = g.velocity(v);
    if (std::abs(p[0]) < 1 && std::abs(p[1]) < 1 && std::abs(p[2]) < 1) f.values[v] = c;
  }
  const std::vector<Distribution> fs{f};
  const std::vector<SpeciesParams> sp{SpeciesParams{}};
  EXPECT_NEAR(moments(g, fs, sp).rho[0], c * 8.0, 1e-14);
}

TEST(Moments, CutoffDropsTailShell) {
  const PhaseGrid g = periodic_slab(2, 8, 2.0);
  const Distribution f = vmsim::testing::random_distribution(g, 3);
  const std::vector<Distribution> fs{f};
  const std::vector<SpeciesParams> sp{SpeciesParams{}};
  const Moments full = moments(g, fs, sp);
  const Moments cut = moments(g, fs, sp, 1.0);
  const Kinematics kin(g, 1.0);
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    double tail = 0.0;
    for (std::size_t v = 0; v < g.velocity_count(); ++v)
      if (kin.speed[v] >= 1.0) tail += f.at(g, s, v) * g.dv3();
    EXPECT_LT(cut.rho[s], full.rho[s]);
    EXPECT_NEAR(full.rho[s] - cut.rho[s], tail, 1e-13);
  }
}

TEST(KineticNorm, ZeroAndIndicator) {
  const PhaseGrid g = periodic_slab(4, 4, 1.0);
  Distribution f = Distribution::zeros(g);
  for (double p : {1.0, 4.0 / 3.0, 2.0, std::numeric_limits<double>::infinity()})
    EXPECT_EQ(kinetic_norm(g, f, p, false, 1.0), 0.0);
  f.values[5] = 1.0;
  EXPECT_DOUBLE_EQ(kinetic_norm(g, f, 1.0, false, 1.0), g.phase_cell_volume());
  EXPECT_EQ(kinetic_norm(g, f, std::numeric_limits<double>::infinity(), false, 1.0), 1.0);
}

TEST(KineticNorm, WeightedDominatesUnweighted) {
  const PhaseGrid g = periodic_slab(3, 6, 2.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Distribution f = vmsim::testing::random_distribution(g, seed);
    EXPECT_GE(kinetic_norm(g, f, 1.0, true, 1.0), kinetic_norm(g, f, 1.0, false, 1.0));
  }
}

TEST(KineticNorm, RejectsExponentBelowOne) {
  const PhaseGrid g = periodic_slab(2, 2, 1.0);
  EXPECT_THROW(kinetic_norm(g, Distribution::zeros(g), 0.5, false, 1.0), Error);
}
