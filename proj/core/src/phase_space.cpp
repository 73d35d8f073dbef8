#include "vmsim/phase_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vmsim/error.hpp"

namespace vmsim {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::CflViolation: return "CflViolation";
    case ErrorKind::NegativeDensity: return "NegativeDensity";
    case ErrorKind::NonDiagonalMaterial: return "NonDiagonalMaterial";
    case ErrorKind::SpdViolation: return "SpdViolation";
    case ErrorKind::ContainerNotVacuum: return "ContainerNotVacuum";
    case ErrorKind::ToleranceUnreachable: return "ToleranceUnreachable";
    case ErrorKind::InitialConstraintViolation: return "InitialConstraintViolation";
    case ErrorKind::CounterexampleFound: return "CounterexampleFound";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingHistory: return "MissingHistory";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string to_string(BoundaryRegime regime) {
  return regime == BoundaryRegime::PurelyReflecting ? "reflecting" : "absorbing";
}

std::string to_string(GridMode mode) { return mode == GridMode::Slab1d3v ? "slab1d3v" : "full3d3v"; }

void SpeciesParams::validate() const {
  if (!(rest_mass >= 1.0)) {
    throw Error(ErrorKind::ValidationError,
                "species '" + name + "': rest_mass >= 1 required, got " + std::to_string(rest_mass));
  }
  if (!std::isfinite(charge)) {
    throw Error(ErrorKind::ValidationError, "species '" + name + "': charge must be finite");
  }
}

double FieldGrid::min_spacing() const {
  double h = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (cells[a] > 1 || !periodic[a]) h = std::min(h, spacing[a]);
  }
  return std::isfinite(h) ? h : spacing[0];
}

PhaseGrid::PhaseGrid(FieldGrid field, CellBox container, int velocity_cells, double velocity_radius,
                     GridMode mode)
    : field_(field), container_(container), nv_(velocity_cells), vmax_(velocity_radius), mode_(mode) {
  if (nv_ < 2 || nv_ % 2 != 0) {
    throw Error(ErrorKind::ValidationError, "velocity_cells must be even and >= 2");
  }
  if (!(vmax_ > 0.0)) throw Error(ErrorKind::ValidationError, "velocity_radius must be positive");
  for (int a = 0; a < 3; ++a) {
    if (field_.cells[a] < 1 || !(field_.spacing[a] > 0.0)) {
      throw Error(ErrorKind::ValidationError, "field grid needs positive extents and spacings");
    }
    if (container_.lo[a] < 0 || container_.hi[a] > field_.cells[a] ||
        container_.lo[a] >= container_.hi[a]) {
      throw Error(ErrorKind::ValidationError, "container must be a non-empty box inside the field box");
    }
    const bool spans = container_.lo[a] == 0 && container_.hi[a] == field_.cells[a];
    walls_[a] = !(spans && field_.periodic[a]);
    if (walls_[a] && (container_.lo[a] < 1 || container_.hi[a] > field_.cells[a] - 1)) {
      throw Error(ErrorKind::ValidationError,
                  "container must be strictly inside the field box on walled axis " + std::to_string(a));
    }
  }
  if (mode_ == GridMode::Slab1d3v) {
    if (field_.cells[1] != 1 || field_.cells[2] != 1 || !field_.periodic[1] || !field_.periodic[2]) {
      throw Error(ErrorKind::ValidationError, "slab1d3v mode requires one periodic cell in y and z");
    }
  }
  dv_ = 2.0 * vmax_ / nv_;
  space_count_ = static_cast<std::size_t>(container_.extent(0)) * container_.extent(1) * container_.extent(2);
}

Index3 PhaseGrid::space_coords(std::size_t s) const {
  const auto nz = static_cast<std::size_t>(space_extent(2));
  const auto ny = static_cast<std::size_t>(space_extent(1));
  return {static_cast<int>(s / (ny * nz)), static_cast<int>((s / nz) % ny), static_cast<int>(s % nz)};
}

std::size_t PhaseGrid::field_cell(std::size_t s) const {
  const Index3 c = space_coords(s);
  return field_.cell(c[0] + container_.lo[0], c[1] + container_.lo[1], c[2] + container_.lo[2]);
}

Index3 PhaseGrid::velocity_coords(std::size_t v) const {
  const auto n = static_cast<std::size_t>(nv_);
  return {static_cast<int>(v / (n * n)), static_cast<int>((v / n) % n), static_cast<int>(v % n)};
}

Vec3 PhaseGrid::velocity(std::size_t v) const {
  const Index3 c = velocity_coords(v);
  return {velocity_center(c[0]), velocity_center(c[1]), velocity_center(c[2])};
}

std::vector<WallCell> wall_cells(const PhaseGrid& grid) {
  std::vector<WallCell> out;
  for (int axis = 0; axis < 3; ++axis) {
    if (!grid.has_walls(axis)) continue;
    for (int side : {-1, 1}) {
      const int fixed = side < 0 ? 0 : grid.space_extent(axis) - 1;
      for (int i = 0; i < grid.space_extent(0); ++i)
        for (int j = 0; j < grid.space_extent(1); ++j)
          for (int k = 0; k < grid.space_extent(2); ++k) {
            const Index3 c{i, j, k};
            if (c[axis] != fixed) continue;
            out.push_back({axis, side, grid.space_index(i, j, k)});
          }
    }
  }
  return out;
}

Distribution Distribution::zeros(const PhaseGrid& grid) {
  Distribution d;
  d.values.assign(grid.size(), 0.0);
  const std::size_t walls = wall_cells(grid).size();
  d.outflow_trace.assign(walls * grid.velocity_count(), 0.0);
  d.inflow_record.assign(walls * grid.velocity_count(), 0.0);
  return d;
}

double Distribution::min() const {
  return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
}
double Distribution::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

VelocityMap velocity_map(const Vec3& momentum, double rest_mass) {
  const double v0 = std::sqrt(rest_mass * rest_mass + dot(momentum, momentum));
  return {{momentum[0] / v0, momentum[1] / v0, momentum[2] / v0}, v0};
}

double gamma_weight(const Vec3& momentum, const Vec3& normal, double rest_mass) {
  return std::abs(dot(velocity_map(momentum, rest_mass).v_hat, normal));
}

Kinematics::Kinematics(const PhaseGrid& grid, double rest_mass) {
  const std::size_t nv = grid.velocity_count();
  v_hat.resize(nv);
  v0.resize(nv);
  speed.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3 p = grid.velocity(v);
    const VelocityMap m = velocity_map(p, rest_mass);
    v_hat[v] = m.v_hat;
    v0[v] = m.v0;
    speed[v] = std::sqrt(dot(p, p));
  }
}

Moments moments(const PhaseGrid& grid, std::span<const Distribution> f,
                std::span<const SpeciesParams> species, double cutoff) {
  Moments m;
  m.rho.assign(grid.space_count(), 0.0);
  m.j.assign(grid.space_count(), Vec3{0.0, 0.0, 0.0});
  const std::size_t nv = grid.velocity_count();
  const double w = grid.dv3();
  for (std::size_t a = 0; a < species.size(); ++a) {
    const Kinematics kin(grid, species[a].rest_mass);
    const double e = species[a].charge;
    for (std::size_t s = 0; s < grid.space_count(); ++s) {
      const double* fs = f[a].values.data() + s * nv;
      double n = 0.0;
      Vec3 flux{0.0, 0.0, 0.0};
      for (std::size_t v = 0; v < nv; ++v) {
        if (cutoff > 0.0 && !(kin.speed[v] < cutoff)) continue;
        n += fs[v];
        flux[0] += kin.v_hat[v][0] * fs[v];
        flux[1] += kin.v_hat[v][1] * fs[v];
        flux[2] += kin.v_hat[v][2] * fs[v];
      }
      m.rho[s] += e * n * w;
      for (int d = 0; d < 3; ++d) m.j[s][d] += e * flux[d] * w;
    }
  }
  return m;
}

double kinetic_norm(const PhaseGrid& grid, const Distribution& f, double p, bool weighted,
                    double rest_mass) {
  if (std::isinf(p)) return f.values.empty() ? 0.0 : std::max(0.0, std::max(f.max(), -f.min()));
  if (!(p >= 1.0)) throw Error(ErrorKind::InvalidArgument, "kinetic_norm needs p >= 1");
  const std::size_t nv = grid.velocity_count();
  std::vector<double> weight(nv, 1.0);
  if (weighted) weight = Kinematics(grid, rest_mass).v0;
  double sum = 0.0;
  for (std::size_t s = 0; s < grid.space_count(); ++s) {
    const double* fs = f.values.data() + s * nv;
    for (std::size_t v = 0; v < nv; ++v) {
      const double a = std::abs(fs[v]);
      if (a == 0.0) continue;
      sum += weight[v] * (p == 1.0 ? a : std::pow(a, p));
    }
  }
  sum *= grid.phase_cell_volume();
  return p == 1.0 ? sum : std::pow(sum, 1.0 / p);
}

}  // namespace vmsim
