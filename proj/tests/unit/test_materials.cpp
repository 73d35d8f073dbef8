#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "vmsim/error.hpp"
#include "vmsim/materials.hpp"

using namespace vmsim;

namespace {

FieldGrid slab_box(int nx) { return FieldGrid{{nx, 1, 1}, {1.0 / nx, 1.0 / nx, 1.0 / nx}, {false, true, true}}; }

MaterialField step_material(int nx, const CellBox& container) {
  const std::vector<MaterialRegion> regions{
      {CellBox{{0, 0, 0}, {container.lo[0], 1, 1}}, Sym3::scalar(4.0), Sym3::identity()},
      {CellBox{{container.hi[0], 0, 0}, {nx, 1, 1}}, Sym3::scalar(2.0), Sym3::scalar(3.0)}};
  return MaterialField::from_regions(slab_box(nx), container, regions, 1.0, 4.0);
}

}  // namespace

TEST(EigenRange, DiagonalAndFull) {
  const auto d = eigen_range(Sym3::diagonal(2.0, 3.0, 5.0));
  EXPECT_EQ(d[0], 2.0);
  EXPECT_EQ(d[1], 5.0);
  // [[2,1,0],[1,2,0],[0,0,5]] has eigenvalues 1, 3, 5.
  const auto f = eigen_range(Sym3{{2.0, 1.0, 0.0, 2.0, 0.0, 5.0}});
  EXPECT_NEAR(f[0], 1.0, 1e-14);
  EXPECT_NEAR(f[1], 5.0, 1e-14);
}

TEST(ValidateSpd, IdentityField) {
  const FieldGrid g = slab_box(8);
  const MaterialField m = MaterialField::from_regions(g, CellBox{{1, 0, 0}, {7, 1, 1}}, {}, 1.0, 1.0);
  const SpdReport r = validate_spd(m);
  EXPECT_EQ(r.min_eig, 1.0);
  EXPECT_EQ(r.max_eig, 1.0);
  EXPECT_TRUE(r.identity_on_container);
}

TEST(ValidateSpd, DiagonalOutsideContainer) {
  const FieldGrid g = slab_box(8);
  const std::vector<MaterialRegion> regions{
      {CellBox{{0, 0, 0}, {1, 1, 1}}, Sym3::diagonal(2.0, 3.0, 5.0), Sym3::identity()}};
  const MaterialField m = MaterialField::from_regions(g, CellBox{{1, 0, 0}, {7, 1, 1}}, regions, 1.0, 5.0);
  EXPECT_EQ(validate_spd(m).max_eig, 5.0);
}

TEST(ValidateSpd, EigenvalueBelowSigma) {
  const FieldGrid g = slab_box(8);
  const std::vector<MaterialRegion> regions{
      {CellBox{{0, 0, 0}, {1, 1, 1}}, Sym3::diagonal(0.5, 1.0, 1.0), Sym3::identity()}};
  const MaterialField m = MaterialField::from_regions(g, CellBox{{1, 0, 0}, {7, 1, 1}}, regions, 1.0, 1.0);
  try {
    validate_spd(m);
    FAIL() << "expected SpdViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SpdViolation);
  }
}

TEST(ValidateSpd, ContainerMustBeVacuum) {
  const FieldGrid g = slab_box(8);
  const std::vector<MaterialRegion> regions{
      {CellBox{{2, 0, 0}, {3, 1, 1}}, Sym3::scalar(2.0), Sym3::identity()}};
  const MaterialField m = MaterialField::from_regions(g, CellBox{{1, 0, 0}, {7, 1, 1}}, regions, 1.0, 2.0);
  try {
    validate_spd(m);
    FAIL() << "expected ContainerNotVacuum";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ContainerNotVacuum);
  }
}

TEST(MollifierKernel, UnitMass) {
  const FieldGrid g = slab_box(64);
  for (double w : {1.0 / 64, 3.0 / 64, 0.1, 0.3}) {
    const MollifierKernel k = mollifier_kernel(g, w);
    EXPECT_NEAR(std::accumulate(k.weights.begin(), k.weights.end(), 0.0), 1.0, 1e-14);
    for (double x : k.weights) EXPECT_GE(x, 0.0);
  }
}

TEST(Mollify, ConstantFieldIsFixed) {
  const FieldGrid g = slab_box(32);
  const std::vector<Sym3> field(g.cell_count(), Sym3::scalar(2.5));
  const std::vector<Sym3> out = mollify_tensor(g, field, 1.0, mollifier_kernel(g, 0.2));
  for (const Sym3& m : out)
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(m.c[i], field[0].c[i], 1e-14);
}

TEST(Mollify, StepLadderStaysInBoundsAndMeetsTolerance) {
  const MaterialField mat = step_material(64, CellBox{{16, 0, 0}, {48, 1, 1}});
  for (int k : {1, 2, 4, 8}) {
    const MollifiedMaterial m = mollify_material(mat, k);
    EXPECT_LT(m.error, 1.0 / k) << "k=" << k;
    EXPECT_EQ(m.tolerance, 1.0 / k);
    EXPECT_TRUE(m.field.mollified);
    for (std::size_t c = 0; c < m.field.eps.size(); ++c) {
      for (const Sym3* t : {&m.field.eps[c], &m.field.mu[c]}) {
        const auto r = eigen_range(*t);
        EXPECT_GE(r[0], mat.sigma_lo - 1e-12);
        EXPECT_LE(r[1], mat.sigma_hi + 1e-12);
      }
    }
  }
}

TEST(Mollify, WidthShrinksWithLadderIndex) {
  const MaterialField mat = step_material(64, CellBox{{16, 0, 0}, {48, 1, 1}});
  double previous = 1e300;
  for (int k : {1, 2, 4, 8}) {
    const double w = mollify_material(mat, k).width;
    EXPECT_LE(w, previous);
    previous = w;
  }
}

TEST(Mollify, RejectsNonPositiveIndex) {
  const MaterialField mat = step_material(16, CellBox{{4, 0, 0}, {12, 1, 1}});
  EXPECT_THROW(mollify_material(mat, 0), Error);
}
