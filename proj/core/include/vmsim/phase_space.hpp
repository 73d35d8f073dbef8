#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vmsim {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

enum class BoundaryRegime { PartiallyAbsorbing, PurelyReflecting };
enum class GridMode { Slab1d3v, Full3d3v };

std::string to_string(BoundaryRegime regime);
std::string to_string(GridMode mode);

/// Charge, rest mass and wall behaviour of one particle species.
struct SpeciesParams {
  std::string name = "species";
  double charge = 1.0;
  double rest_mass = 1.0;  ///< normalised so that every species has m >= 1
  BoundaryRegime regime = BoundaryRegime::PartiallyAbsorbing;

  void validate() const;
};

/// Half-open range of cells [lo, hi) on each axis.
struct CellBox {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};

  int extent(int axis) const { return hi[axis] - lo[axis]; }
  bool contains(int i, int j, int k) const {
    return i >= lo[0] && i < hi[0] && j >= lo[1] && j < hi[1] && k >= lo[2] && k < hi[2];
  }
  bool operator==(const CellBox&) const = default;
};

/// Uniform Cartesian field box. Fields live on a staggered (Yee) lattice
/// whose node extent per axis is n (periodic) or n+1 (bounded).
struct FieldGrid {
  Index3 cells{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  std::array<bool, 3> periodic{false, true, true};

  int nodes(int axis) const { return cells[axis] + (periodic[axis] ? 0 : 1); }
  std::size_t node_count() const {
    return static_cast<std::size_t>(nodes(0)) * nodes(1) * nodes(2);
  }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(cells[0]) * cells[1] * cells[2];
  }
  std::size_t node(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * nodes(1) + j) * nodes(2) + k;
  }
  std::size_t cell(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * cells[1] + j) * cells[2] + k;
  }
  double cell_volume() const { return spacing[0] * spacing[1] * spacing[2]; }
  double min_spacing() const;
  bool operator==(const FieldGrid&) const = default;
};

/// Phase-space grid: the container cells of the field box times a
/// cell-centred momentum cube [-R, R]^3 with an even number of cells per axis.
class PhaseGrid {
 public:
  PhaseGrid() = default;
  PhaseGrid(FieldGrid field, CellBox container, int velocity_cells, double velocity_radius,
            GridMode mode);

  const FieldGrid& field() const { return field_; }
  const CellBox& container() const { return container_; }
  GridMode mode() const { return mode_; }
  int velocity_cells() const { return nv_; }
  double velocity_radius() const { return vmax_; }
  double dv() const { return dv_; }
  double dv3() const { return dv_ * dv_ * dv_; }
  double dx(int axis) const { return field_.spacing[axis]; }
  double cell_volume() const { return field_.cell_volume(); }
  double phase_cell_volume() const { return cell_volume() * dv3(); }

  int space_extent(int axis) const { return container_.extent(axis); }
  std::size_t space_count() const { return space_count_; }
  std::size_t velocity_count() const { return static_cast<std::size_t>(nv_) * nv_ * nv_; }
  std::size_t size() const { return space_count_ * velocity_count(); }

  /// Local container index (C order) of a space cell.
  std::size_t space_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * space_extent(1) + j) * space_extent(2) + k;
  }
  Index3 space_coords(std::size_t s) const;
  /// Field-box cell index of a container cell.
  std::size_t field_cell(std::size_t s) const;

  std::size_t velocity_index(int a, int b, int c) const {
    return (static_cast<std::size_t>(a) * nv_ + b) * nv_ + c;
  }
  Index3 velocity_coords(std::size_t v) const;
  /// Centre of velocity cell i on one axis; exactly antisymmetric under i -> nv-1-i.
  double velocity_center(int i) const { return (2 * i - nv_ + 1) * (0.5 * dv_); }
  Vec3 velocity(std::size_t v) const;

  /// True if the container is bounded by walls on this axis. An axis without
  /// walls must span a periodic field axis completely.
  bool has_walls(int axis) const { return walls_[axis]; }

  bool operator==(const PhaseGrid& o) const {
    return field_ == o.field_ && container_ == o.container_ && nv_ == o.nv_ && vmax_ == o.vmax_ &&
           mode_ == o.mode_;
  }

 private:
  FieldGrid field_{};
  CellBox container_{};
  int nv_ = 2;
  double vmax_ = 1.0;
  double dv_ = 1.0;
  GridMode mode_ = GridMode::Slab1d3v;
  std::size_t space_count_ = 0;
  std::array<bool, 3> walls_{true, false, false};
};

/// One wall face cell of the container: the boundary side of a container cell.
struct WallCell {
  int axis = 0;
  int side = -1;  ///< -1 low wall (normal -e_axis), +1 high wall (normal +e_axis)
  std::size_t space = 0;
};

/// Enumeration of all container wall face cells in a fixed order.
std::vector<WallCell> wall_cells(const PhaseGrid& grid);

/// Gridded phase-space density of one species together with the
/// time-integrated boundary traces on the container walls.
struct Distribution {
  std::vector<double> values;          ///< [space][velocity], C order
  std::vector<double> outflow_trace;   ///< [wall cell][velocity]: sum dt * f_+ on v.n > 0
  std::vector<double> inflow_record;   ///< [wall cell][velocity]: sum dt * (aKf_+ + g) on v.n < 0

  static Distribution zeros(const PhaseGrid& grid);
  double& at(const PhaseGrid& g, std::size_t s, std::size_t v) { return values[s * g.velocity_count() + v]; }
  double at(const PhaseGrid& g, std::size_t s, std::size_t v) const {
    return values[s * g.velocity_count() + v];
  }
  double min() const;
  double max() const;
};

struct VelocityMap {
  Vec3 v_hat;
  double v0;
};

/// Relativistic velocity v/sqrt(m^2+|v|^2) and kinetic weight sqrt(m^2+|v|^2).
VelocityMap velocity_map(const Vec3& momentum, double rest_mass);

/// |v_hat . n|, the density of the boundary measure for momentum v at a face with unit normal n.
double gamma_weight(const Vec3& momentum, const Vec3& normal, double rest_mass);

/// Per-velocity-cell kinematic tables for one species on one grid.
struct Kinematics {
  std::vector<Vec3> v_hat;
  std::vector<double> v0;
  std::vector<double> speed;  ///< |v| at cell centres

  Kinematics(const PhaseGrid& grid, double rest_mass);
};

struct Moments {
  std::vector<double> rho;  ///< per container cell
  std::vector<Vec3> j;      ///< per container cell
};

/// Charge and current densities of all species by midpoint quadrature over
/// the velocity cells; when cutoff > 0 only cells with |v| < cutoff contribute.
Moments moments(const PhaseGrid& grid, std::span<const Distribution> f,
                std::span<const SpeciesParams> species, double cutoff = 0.0);

/// Discrete L^p norm over container x velocity box. p = infinity is
/// requested with std::numeric_limits<double>::infinity(); with `weighted`
/// the integrand is multiplied by v0 (finite p only).
double kinetic_norm(const PhaseGrid& grid, const Distribution& f, double p, bool weighted,
                    double rest_mass);

}  // namespace vmsim
