#pragma once

#include <array>
#include <vector>

#include "vmsim/phase_space.hpp"

namespace vmsim {

/// Symmetric 3x3 matrix stored as (xx, xy, xz, yy, yz, zz).
struct Sym3 {
  std::array<double, 6> c{1.0, 0.0, 0.0, 1.0, 0.0, 1.0};

  static Sym3 identity() { return {}; }
  static Sym3 diagonal(double a, double b, double d) { return {{a, 0.0, 0.0, b, 0.0, d}}; }
  static Sym3 scalar(double a) { return diagonal(a, a, a); }

  double operator()(int r, int s) const;
  double diag(int axis) const { return c[axis == 0 ? 0 : axis == 1 ? 3 : 5]; }
  bool is_diagonal() const { return c[1] == 0.0 && c[2] == 0.0 && c[4] == 0.0; }
  bool operator==(const Sym3&) const = default;
};

/// Smallest and largest eigenvalue of a symmetric matrix.
std::array<double, 2> eigen_range(const Sym3& m);

/// Axis-aligned region of the field box carrying constant material tensors.
struct MaterialRegion {
  CellBox box;
  Sym3 eps;
  Sym3 mu;
  bool operator==(const MaterialRegion&) const = default;
};

/// Cellwise permittivity and permeability with their spectral bounds.
struct MaterialField {
  FieldGrid grid;
  CellBox container;
  std::vector<Sym3> eps;
  std::vector<Sym3> mu;
  double sigma_lo = 1.0;
  double sigma_hi = 1.0;
  bool mollified = false;

  /// Identity everywhere, then each region overwrites its cells in order.
  static MaterialField from_regions(const FieldGrid& grid, const CellBox& container,
                                    const std::vector<MaterialRegion>& regions, double sigma_lo,
                                    double sigma_hi);
  bool is_diagonal() const;
};

struct SpdReport {
  double min_eig = 0.0;
  double max_eig = 0.0;
  bool identity_on_container = true;
};

/// Checks sigma_lo <= eig <= sigma_hi in every cell and, for unmollified
/// fields, that both tensors are the identity on the container.
/// Throws SpdViolation or ContainerNotVacuum.
SpdReport validate_spd(const MaterialField& mat);

/// Discrete bump kernel of radius s on the field grid, normalised to unit mass.
struct MollifierKernel {
  std::vector<Index3> offsets;
  std::vector<double> weights;
};
MollifierKernel mollifier_kernel(const FieldGrid& grid, double width);

/// Applies the kernel to (A - sigma I) and adds sigma I back. Values
/// beyond a bounded edge of the box are taken from the nearest cell.
std::vector<Sym3> mollify_tensor(const FieldGrid& grid, const std::vector<Sym3>& field,
                                 double sigma, const MollifierKernel& kernel);

/// Discrete L2 distance over the whole box, Frobenius norm per cell.
double tensor_l2_distance(const FieldGrid& grid, const std::vector<Sym3>& a,
                          const std::vector<Sym3>& b);

struct MollifyOptions {
  double min_width_cells = 1.0;  ///< floor of the bisection, in units of the smallest spacing
  double start_width = 0.0;      ///< 0 selects a quarter of the largest box edge
  int bisection_steps = 40;
};

struct MollifiedMaterial {
  MaterialField field;
  double width = 0.0;
  double error = 0.0;  ///< max of the eps and mu L2 errors
  double tolerance = 0.0;
};

/// Ladder member k: largest kernel width found by bisection whose L2
/// error is below 1/k. Throws ToleranceUnreachable when even the floor fails.
MollifiedMaterial mollify_material(const MaterialField& mat, int k, const MollifyOptions& opt = {});

}  // namespace vmsim
