#include "vmsim/materials.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "vmsim/error.hpp"

namespace vmsim {

namespace {

constexpr double kSpdSlack = 1e-12;

Eigen::Matrix3d to_eigen(const Sym3& m) {
  Eigen::Matrix3d a;
  a << m.c[0], m.c[1], m.c[2], m.c[1], m.c[3], m.c[4], m.c[2], m.c[4], m.c[5];
  return a;
}

int wrap_or_clamp(int i, int n, bool periodic) {
  if (periodic) return ((i % n) + n) % n;
  return std::clamp(i, 0, n - 1);
}

}  // namespace

double Sym3::operator()(int r, int s) const {
  static constexpr int map[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  return c[map[r][s]];
}

std::array<double, 2> eigen_range(const Sym3& m) {
  if (m.is_diagonal()) {
    return {std::min({m.c[0], m.c[3], m.c[5]}), std::max({m.c[0], m.c[3], m.c[5]})};
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(to_eigen(m), Eigen::EigenvaluesOnly);
  return {es.eigenvalues()(0), es.eigenvalues()(2)};
}

MaterialField MaterialField::from_regions(const FieldGrid& grid, const CellBox& container,
                                          const std::vector<MaterialRegion>& regions,
                                          double sigma_lo, double sigma_hi) {
  MaterialField m;
  m.grid = grid;
  m.container = container;
  m.sigma_lo = sigma_lo;
  m.sigma_hi = sigma_hi;
  m.eps.assign(grid.cell_count(), Sym3::identity());
  m.mu.assign(grid.cell_count(), Sym3::identity());
  for (const auto& r : regions) {
    for (int a = 0; a < 3; ++a) {
      if (r.box.lo[a] < 0 || r.box.hi[a] > grid.cells[a] || r.box.lo[a] >= r.box.hi[a]) {
        throw Error(ErrorKind::ValidationError, "material region outside the field box");
      }
    }
    for (int i = r.box.lo[0]; i < r.box.hi[0]; ++i)
      for (int j = r.box.lo[1]; j < r.box.hi[1]; ++j)
        for (int k = r.box.lo[2]; k < r.box.hi[2]; ++k) {
          m.eps[grid.cell(i, j, k)] = r.eps;
          m.mu[grid.cell(i, j, k)] = r.mu;
        }
  }
  return m;
}

bool MaterialField::is_diagonal() const {
  return std::all_of(eps.begin(), eps.end(), [](const Sym3& s) { return s.is_diagonal(); }) &&
         std::all_of(mu.begin(), mu.end(), [](const Sym3& s) { return s.is_diagonal(); });
}

SpdReport validate_spd(const MaterialField& mat) {
  if (!(mat.sigma_lo > 0.0) || mat.sigma_hi < mat.sigma_lo) {
    throw Error(ErrorKind::ValidationError, "material bounds need 0 < sigma_lo <= sigma_hi");
  }
  SpdReport rep;
  rep.min_eig = std::numeric_limits<double>::infinity();
  rep.max_eig = -std::numeric_limits<double>::infinity();
  const double lo = mat.sigma_lo * (1.0 - kSpdSlack);
  const double hi = mat.sigma_hi * (1.0 + kSpdSlack);
  for (std::size_t c = 0; c < mat.eps.size(); ++c) {
    for (const Sym3* m : {&mat.eps[c], &mat.mu[c]}) {
      const auto r = eigen_range(*m);
      rep.min_eig = std::min(rep.min_eig, r[0]);
      rep.max_eig = std::max(rep.max_eig, r[1]);
      if (r[0] < lo || r[1] > hi) {
        std::ostringstream os;
        os << "cell " << c << " has eigenvalues in [" << r[0] << ", " << r[1] << "], outside ["
           << mat.sigma_lo << ", " << mat.sigma_hi << "]";
        throw Error(ErrorKind::SpdViolation, os.str());
      }
    }
  }
  const CellBox& b = mat.container;
  for (int i = b.lo[0]; i < b.hi[0]; ++i)
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int k = b.lo[2]; k < b.hi[2]; ++k) {
        const std::size_t c = mat.grid.cell(i, j, k);
        if (!(mat.eps[c] == Sym3::identity()) || !(mat.mu[c] == Sym3::identity())) {
          rep.identity_on_container = false;
        }
      }
  if (!rep.identity_on_container && !mat.mollified) {
    throw Error(ErrorKind::ContainerNotVacuum, "eps and mu must be the identity inside the container");
  }
  return rep;
}

MollifierKernel mollifier_kernel(const FieldGrid& grid, double width) {
  MollifierKernel k;
  std::array<int, 3> reach{};
  for (int a = 0; a < 3; ++a) {
    reach[a] = grid.cells[a] == 1 ? 0 : static_cast<int>(std::floor(width / grid.spacing[a]));
  }
  for (int i = -reach[0]; i <= reach[0]; ++i)
    for (int j = -reach[1]; j <= reach[1]; ++j)
      for (int l = -reach[2]; l <= reach[2]; ++l) {
        const double x = i * grid.spacing[0], y = j * grid.spacing[1], z = l * grid.spacing[2];
        const double q = (x * x + y * y + z * z) / (width * width);
        if (q >= 1.0) continue;
        k.offsets.push_back({i, j, l});
        k.weights.push_back(std::exp(-1.0 / (1.0 - q)));
      }
  if (k.weights.empty()) {
    k.offsets.push_back({0, 0, 0});
    k.weights.push_back(1.0);
  }
  double sum = 0.0;
  for (double w : k.weights) sum += w;
  for (double& w : k.weights) w /= sum;
  return k;
}

std::vector<Sym3> mollify_tensor(const FieldGrid& grid, const std::vector<Sym3>& field,
                                 double sigma, const MollifierKernel& kernel) {
  std::vector<Sym3> out(field.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < grid.cells[0]; ++i) {
    for (int j = 0; j < grid.cells[1]; ++j)
      for (int l = 0; l < grid.cells[2]; ++l) {
        std::array<double, 6> acc{};
        for (std::size_t q = 0; q < kernel.weights.size(); ++q) {
          const Index3& o = kernel.offsets[q];
          const int a = wrap_or_clamp(i + o[0], grid.cells[0], grid.periodic[0]);
          const int b = wrap_or_clamp(j + o[1], grid.cells[1], grid.periodic[1]);
          const int c = wrap_or_clamp(l + o[2], grid.cells[2], grid.periodic[2]);
          const Sym3& m = field[grid.cell(a, b, c)];
          const double w = kernel.weights[q];
          for (int e = 0; e < 6; ++e) acc[e] += w * (m.c[e] - ((e == 0 || e == 3 || e == 5) ? sigma : 0.0));
        }
        Sym3 r;
        for (int e = 0; e < 6; ++e) r.c[e] = acc[e] + ((e == 0 || e == 3 || e == 5) ? sigma : 0.0);
        out[grid.cell(i, j, l)] = r;
      }
  }
  return out;
}

double tensor_l2_distance(const FieldGrid& grid, const std::vector<Sym3>& a,
                          const std::vector<Sym3>& b) {
  static constexpr double mult[6] = {1.0, 2.0, 2.0, 1.0, 2.0, 1.0};
  double sum = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c)
    for (int e = 0; e < 6; ++e) {
      const double d = a[c].c[e] - b[c].c[e];
      sum += mult[e] * d * d;
    }
  return std::sqrt(sum * grid.cell_volume());
}

MollifiedMaterial mollify_material(const MaterialField& mat, int k, const MollifyOptions& opt) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "ladder index k must be >= 1");
  const FieldGrid& g = mat.grid;
  const double tol = 1.0 / k;
  auto attempt = [&](double s) {
    const MollifierKernel ker = mollifier_kernel(g, s);
    MollifiedMaterial m;
    m.field = mat;
    m.field.mollified = true;
    m.field.eps = mollify_tensor(g, mat.eps, mat.sigma_lo, ker);
    m.field.mu = mollify_tensor(g, mat.mu, mat.sigma_lo, ker);
    m.width = s;
    m.error = std::max(tensor_l2_distance(g, mat.eps, m.field.eps),
                       tensor_l2_distance(g, mat.mu, m.field.mu));
    m.tolerance = tol;
    return m;
  };
  double longest = 0.0;
  for (int a = 0; a < 3; ++a) longest = std::max(longest, g.cells[a] * g.spacing[a]);
  const double floor_width = opt.min_width_cells * g.min_spacing();
  double hi = opt.start_width > 0.0 ? opt.start_width : 0.25 * longest;
  hi = std::max(hi, floor_width);

  MollifiedMaterial best = attempt(hi);
  if (best.error < tol) return best;
  MollifiedMaterial low = attempt(floor_width);
  if (!(low.error < tol)) {
    std::ostringstream os;
    os << "ladder member k=" << k << " needs L2 error < " << tol << " but the finest admissible width "
       << floor_width << " gives " << low.error;
    throw Error(ErrorKind::ToleranceUnreachable, os.str());
  }
  double lo = floor_width;
  best = low;
  for (int it = 0; it < opt.bisection_steps; ++it) {
    const double mid = 0.5 * (lo + hi);
    MollifiedMaterial m = attempt(mid);
    if (m.error < tol) {
      lo = mid;
      best = std::move(m);
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-3 * g.min_spacing()) break;
  }
  return best;
}

}  // namespace vmsim
