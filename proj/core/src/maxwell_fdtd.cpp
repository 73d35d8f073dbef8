#include "vmsim/maxwell_fdtd.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "vmsim/error.hpp"

namespace vmsim {

namespace {

constexpr double kPi = std::numbers::pi;

int e_extent(const FieldGrid& g, int m, int d) { return d == m ? g.nodes(d) : g.cells[d]; }
int h_extent(const FieldGrid& g, int m, int d) { return d == m ? g.cells[d] : g.nodes(d); }

int wrap(int i, int n) { return i < 0 ? i + n : (i >= n ? i - n : i); }

/// Index shifted by +1 along axis d; valid only where the caller knows it exists.
std::size_t up(const FieldGrid& g, Index3 p, int d) {
  p[d] = g.periodic[d] ? wrap(p[d] + 1, g.cells[d]) : p[d] + 1;
  return g.node(p[0], p[1], p[2]);
}

template <class Fn>
void for_each_e(const FieldGrid& g, int m, Fn&& fn) {
  const int n0 = e_extent(g, m, 0), n1 = e_extent(g, m, 1), n2 = e_extent(g, m, 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j)
      for (int k = 0; k < n2; ++k) fn(Index3{i, j, k});
}

template <class Fn>
void for_each_h(const FieldGrid& g, int m, Fn&& fn) {
  const int n0 = h_extent(g, m, 0), n1 = h_extent(g, m, 1), n2 = h_extent(g, m, 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j)
      for (int k = 0; k < n2; ++k) fn(Index3{i, j, k});
}

/// Serial variant for reductions so sums are evaluated in a fixed order.
template <class Fn>
void for_each_e_serial(const FieldGrid& g, int m, Fn&& fn) {
  for (int i = 0; i < e_extent(g, m, 0); ++i)
    for (int j = 0; j < e_extent(g, m, 1); ++j)
      for (int k = 0; k < e_extent(g, m, 2); ++k) fn(Index3{i, j, k});
}

template <class Fn>
void for_each_h_serial(const FieldGrid& g, int m, Fn&& fn) {
  for (int i = 0; i < h_extent(g, m, 0); ++i)
    for (int j = 0; j < h_extent(g, m, 1); ++j)
      for (int k = 0; k < h_extent(g, m, 2); ++k) fn(Index3{i, j, k});
}

/// Backward difference of E_q along axis d at an integer position of an H
/// point. Beyond a bounded edge the ghost value is the negated interior one.
/// Sets `edge` when a ghost was used.
double back_diff(const FieldGrid& g, const std::vector<double>& Eq, Index3 p, int d, bool& edge) {
  const double h = g.spacing[d];
  if (g.periodic[d]) {
    Index3 q = p;
    q[d] = wrap(p[d] - 1, g.cells[d]);
    return (Eq[g.node(p[0], p[1], p[2])] - Eq[g.node(q[0], q[1], q[2])]) / h;
  }
  if (p[d] == 0) {
    edge = true;
    return 2.0 * Eq[g.node(p[0], p[1], p[2])] / h;
  }
  Index3 q = p;
  q[d] = p[d] - 1;
  const double below = Eq[g.node(q[0], q[1], q[2])];
  if (p[d] == g.cells[d]) {
    edge = true;
    return -2.0 * below / h;
  }
  return (Eq[g.node(p[0], p[1], p[2])] - below) / h;
}

double cell_average(const MaterialField& mat, int i0, int i1, int j0, int j1, int k0, int k1,
                    bool use_eps, int comp) {
  const FieldGrid& g = mat.grid;
  double sum = 0.0;
  int count = 0;
  auto fix = [&](int v, int d) {
    if (g.periodic[d]) return wrap(v, g.cells[d]);
    return v;
  };
  for (int i = i0; i <= i1; ++i)
    for (int j = j0; j <= j1; ++j)
      for (int k = k0; k <= k1; ++k) {
        const int a = fix(i, 0), b = fix(j, 1), c = fix(k, 2);
        if (a < 0 || a >= g.cells[0] || b < 0 || b >= g.cells[1] || c < 0 || c >= g.cells[2]) continue;
        const Sym3& s = use_eps ? mat.eps[g.cell(a, b, c)] : mat.mu[g.cell(a, b, c)];
        sum += comp >= 0 ? s.diag(comp) : (s.c[0] + s.c[3] + s.c[5]) / 3.0;
        ++count;
      }
  return sum / count;
}

}  // namespace

StaggeredField staggered_zeros(const FieldGrid& grid) {
  StaggeredField f;
  for (auto& c : f) c.assign(grid.node_count(), 0.0);
  return f;
}

bool e_point_valid(const FieldGrid& g, int m, int i, int j, int k) {
  const Index3 p{i, j, k};
  for (int d = 0; d < 3; ++d)
    if (p[d] < 0 || p[d] >= e_extent(g, m, d)) return false;
  return true;
}

bool h_point_valid(const FieldGrid& g, int m, int i, int j, int k) {
  const Index3 p{i, j, k};
  for (int d = 0; d < 3; ++d)
    if (p[d] < 0 || p[d] >= h_extent(g, m, d)) return false;
  return true;
}

double e_point_weight(const FieldGrid& g, int m, int i, int j, int k) {
  double w = g.cell_volume();
  const Index3 p{i, j, k};
  if (!g.periodic[m] && (p[m] == 0 || p[m] == g.cells[m])) w *= 0.5;
  return w;
}

double h_point_weight(const FieldGrid& g, int m, int i, int j, int k) {
  double w = g.cell_volume();
  const Index3 p{i, j, k};
  for (int d = 0; d < 3; ++d) {
    if (d == m || g.periodic[d]) continue;
    if (p[d] == 0 || p[d] == g.cells[d]) w *= 0.5;
  }
  return w;
}

EmField EmField::zeros(const FieldGrid& grid) {
  EmField f;
  f.grid = grid;
  f.E = staggered_zeros(grid);
  f.H = staggered_zeros(grid);
  f.H_prev = staggered_zeros(grid);
  return f;
}

YeeMaterial yee_material(const MaterialField& mat) {
  if (!mat.is_diagonal()) {
    throw Error(ErrorKind::NonDiagonalMaterial,
                "the field solver accepts only diagonal eps and mu tensors");
  }
  const FieldGrid& g = mat.grid;
  YeeMaterial y;
  y.grid = g;
  y.sigma_lo = mat.sigma_lo;
  y.sigma_hi = mat.sigma_hi;
  y.eps = staggered_zeros(g);
  y.mu = staggered_zeros(g);
  y.impedance = staggered_zeros(g);
  for (int m = 0; m < 3; ++m) {
    for_each_e_serial(g, m, [&](Index3 p) {
      Index3 lo = p, hi = p;
      lo[m] = p[m] - 1;
      y.eps[m][g.node(p[0], p[1], p[2])] =
          cell_average(mat, lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], true, m);
    });
    for_each_h_serial(g, m, [&](Index3 p) {
      Index3 lo = p, hi = p;
      for (int d = 0; d < 3; ++d)
        if (d != m) lo[d] = p[d] - 1;
      const std::size_t n = g.node(p[0], p[1], p[2]);
      y.mu[m][n] = cell_average(mat, lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], false, m);
      const double eps_iso = cell_average(mat, lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], true, -1);
      y.impedance[m][n] = std::sqrt(y.mu[m][n] / eps_iso);
    });
  }
  double speed = 0.0;
  for (std::size_t c = 0; c < mat.eps.size(); ++c) {
    const Sym3& e = mat.eps[c];
    const Sym3& u = mat.mu[c];
    const double emin = std::min({e.c[0], e.c[3], e.c[5]});
    const double umin = std::min({u.c[0], u.c[3], u.c[5]});
    speed = std::max(speed, 1.0 / std::sqrt(emin * umin));
  }
  y.max_speed = speed;
  return y;
}

double maxwell_stable_dt(const YeeMaterial& mat) {
  const FieldGrid& g = mat.grid;
  double s = 0.0;
  for (int d = 0; d < 3; ++d) {
    if (g.cells[d] > 1 || !g.periodic[d]) s += 1.0 / (g.spacing[d] * g.spacing[d]);
  }
  return 1.0 / (mat.max_speed * std::sqrt(s));
}

StaggeredField curl_h(const FieldGrid& g, const StaggeredField& H) {
  StaggeredField out = staggered_zeros(g);
  for (int m = 0; m < 3; ++m) {
    const int p = (m + 1) % 3, q = (m + 2) % 3;
    for_each_e(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      out[m][n] = (H[q][up(g, x, p)] - H[q][n]) / g.spacing[p] -
                  (H[p][up(g, x, q)] - H[p][n]) / g.spacing[q];
    });
  }
  return out;
}

StaggeredField curl_e(const FieldGrid& g, const StaggeredField& E) {
  StaggeredField out = staggered_zeros(g);
  for (int m = 0; m < 3; ++m) {
    const int p = (m + 1) % 3, q = (m + 2) % 3;
    for_each_h(g, m, [&](Index3 x) {
      bool edge = false;
      out[m][g.node(x[0], x[1], x[2])] = back_diff(g, E[q], x, p, edge) - back_diff(g, E[p], x, q, edge);
    });
  }
  return out;
}

void start_leapfrog(EmField& fld, const YeeMaterial& mat, double dt) {
  const FieldGrid& g = fld.grid;
  const StaggeredField c = curl_e(g, fld.E);
  fld.H_prev = fld.H;
  for (int m = 0; m < 3; ++m) {
    for_each_h_serial(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      const double dh = 0.5 * dt * c[m][n] / mat.mu[m][n];
      fld.H[m][n] -= dh;
      fld.H_prev[m][n] += dh;
    });
  }
}

MaxwellStepWork maxwell_step(EmField& fld, const YeeMaterial& mat, const StaggeredField& j, double dt,
                             double cfl_number) {
  const FieldGrid& g = fld.grid;
  const double dt_max = cfl_number * maxwell_stable_dt(mat);
  if (!(dt > 0.0) || dt > dt_max) throw CflError("maxwell_step", dt, dt_max);

  const StaggeredField ch = curl_h(g, fld.H);
  StaggeredField e_mid = fld.E;
  for (int m = 0; m < 3; ++m) {
    for_each_e(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      fld.E[m][n] += dt / mat.eps[m][n] * (ch[m][n] - 4.0 * kPi * j[m][n]);
      e_mid[m][n] = 0.5 * (e_mid[m][n] + fld.E[m][n]);
    });
  }
  MaxwellStepWork work;
  work.midpoint = dt * e_points_dot(g, e_mid, j);
  fld.H_prev.swap(fld.H);
  // fld.H now holds H^{n-1/2}; overwrite it with H^{n+3/2} computed from H^{n+1/2} = H_prev.
  for (int m = 0; m < 3; ++m) {
    const int p = (m + 1) % 3, q = (m + 2) % 3;
    for_each_h(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      bool edge_p = false, edge_q = false;
      const double curl = back_diff(g, fld.E[q], x, p, edge_p) - back_diff(g, fld.E[p], x, q, edge_q);
      const double damp = 2.0 * mat.impedance[m][n] *
                          ((edge_p ? 1.0 / g.spacing[p] : 0.0) + (edge_q ? 1.0 / g.spacing[q] : 0.0));
      const double a = mat.mu[m][n] / dt;
      fld.H[m][n] = (fld.H_prev[m][n] * (a - 0.5 * damp) - curl) / (a + 0.5 * damp);
    });
  }
  fld.time += dt;
  return work;
}

double e_points_dot(const FieldGrid& g, const StaggeredField& a, const StaggeredField& b) {
  double sum = 0.0;
  for (int m = 0; m < 3; ++m) {
    for_each_e_serial(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      sum += e_point_weight(g, m, x[0], x[1], x[2]) * a[m][n] * b[m][n];
    });
  }
  return sum;
}

double e_points_norm(const FieldGrid& g, const StaggeredField& v) { return std::sqrt(e_points_dot(g, v, v)); }

double em_energy(const EmField& fld, const YeeMaterial& mat) {
  const FieldGrid& g = fld.grid;
  double sum = 0.0;
  for (int m = 0; m < 3; ++m) {
    for_each_e_serial(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      sum += e_point_weight(g, m, x[0], x[1], x[2]) * mat.eps[m][n] * fld.E[m][n] * fld.E[m][n];
    });
    for_each_h_serial(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      sum += h_point_weight(g, m, x[0], x[1], x[2]) * mat.mu[m][n] * fld.H_prev[m][n] * fld.H[m][n];
    });
  }
  return sum / (8.0 * kPi);
}

double field_norm(const EmField& fld) {
  const FieldGrid& g = fld.grid;
  double sum = 0.0;
  for (int m = 0; m < 3; ++m) {
    for_each_e_serial(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      sum += e_point_weight(g, m, x[0], x[1], x[2]) * fld.E[m][n] * fld.E[m][n];
    });
    for_each_h_serial(g, m, [&](Index3 x) {
      const std::size_t n = g.node(x[0], x[1], x[2]);
      sum += h_point_weight(g, m, x[0], x[1], x[2]) * fld.H_prev[m][n] * fld.H[m][n];
    });
  }
  return std::sqrt(std::max(sum, 0.0));
}

std::vector<double> div_eps_e(const YeeMaterial& mat, const StaggeredField& E) {
  const FieldGrid& g = mat.grid;
  std::vector<double> out(g.cell_count(), 0.0);
  for (int i = 0; i < g.cells[0]; ++i)
    for (int j = 0; j < g.cells[1]; ++j)
      for (int k = 0; k < g.cells[2]; ++k) {
        const Index3 x{i, j, k};
        const std::size_t n = g.node(i, j, k);
        double d = 0.0;
        for (int m = 0; m < 3; ++m) {
          const std::size_t u = up(g, x, m);
          d += (mat.eps[m][u] * E[m][u] - mat.eps[m][n] * E[m][n]) / g.spacing[m];
        }
        out[g.cell(i, j, k)] = d;
      }
  return out;
}

std::vector<double> div_mu_h(const YeeMaterial& mat, const StaggeredField& H) {
  const FieldGrid& g = mat.grid;
  std::array<int, 3> lo{}, hi{};
  for (int d = 0; d < 3; ++d) {
    lo[d] = g.periodic[d] ? 0 : 1;
    hi[d] = g.cells[d];
  }
  std::vector<double> out;
  for (int i = lo[0]; i < hi[0]; ++i)
    for (int j = lo[1]; j < hi[1]; ++j)
      for (int k = lo[2]; k < hi[2]; ++k) {
        const Index3 x{i, j, k};
        const std::size_t n = g.node(i, j, k);
        double d = 0.0;
        for (int m = 0; m < 3; ++m) {
          Index3 b = x;
          b[m] = g.periodic[m] ? wrap(x[m] - 1, g.cells[m]) : x[m] - 1;
          const std::size_t nb = g.node(b[0], b[1], b[2]);
          d += (mat.mu[m][n] * H[m][n] - mat.mu[m][nb] * H[m][nb]) / g.spacing[m];
        }
        out.push_back(d);
      }
  return out;
}

DivergenceResiduals divergence_residuals(const EmField& fld, const YeeMaterial& mat,
                                         const std::vector<double>& rho) {
  const FieldGrid& g = fld.grid;
  DivergenceResiduals r;
  double s = 0.0;
  for (double d : div_mu_h(mat, fld.H)) s += d * d;
  r.divB_norm = std::sqrt(s * g.cell_volume());
  const std::vector<double> de = div_eps_e(mat, fld.E);
  s = 0.0;
  for (std::size_t c = 0; c < de.size(); ++c) {
    const double res = de[c] - 4.0 * kPi * rho[c];
    s += res * res;
  }
  r.gauss_residual_norm = std::sqrt(s * g.cell_volume());
  return r;
}

StaggeredField solve_poisson(const YeeMaterial& mat, const std::vector<double>& rho, double tolerance) {
  const FieldGrid& g = mat.grid;
  const auto nc = static_cast<Eigen::Index>(g.cell_count());
  if (rho.size() != g.cell_count()) throw Error(ErrorKind::ShapeMismatch, "rho must have one value per cell");
  std::vector<Eigen::Triplet<double>> trip;
  bool singular = true;
  for (int i = 0; i < g.cells[0]; ++i)
    for (int j = 0; j < g.cells[1]; ++j)
      for (int k = 0; k < g.cells[2]; ++k) {
        const Index3 x{i, j, k};
        const auto c = static_cast<Eigen::Index>(g.cell(i, j, k));
        for (int m = 0; m < 3; ++m) {
          if (g.periodic[m] && g.cells[m] == 1) continue;
          const double h2 = g.spacing[m] * g.spacing[m];
          for (int side : {0, 1}) {
            Index3 face = x;
            face[m] = x[m] + side;
            if (g.periodic[m]) face[m] = wrap(face[m], g.cells[m]);
            const double kf = mat.eps[m][g.node(face[0], face[1], face[2])] / h2;
            Index3 nb = x;
            nb[m] = x[m] + (side ? 1 : -1);
            trip.emplace_back(c, c, kf);
            if (g.periodic[m]) {
              nb[m] = wrap(nb[m], g.cells[m]);
            } else if (nb[m] < 0 || nb[m] >= g.cells[m]) {
              singular = false;
              continue;
            }
            trip.emplace_back(c, static_cast<Eigen::Index>(g.cell(nb[0], nb[1], nb[2])), -kf);
          }
        }
      }
  Eigen::SparseMatrix<double> A(nc, nc);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd b(nc);
  for (Eigen::Index c = 0; c < nc; ++c) b(c) = 4.0 * kPi * rho[static_cast<std::size_t>(c)];
  if (singular) b.array() -= b.mean();
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(tolerance);
  cg.setMaxIterations(std::max<Eigen::Index>(1000, 20 * nc));
  cg.compute(A);
  Eigen::VectorXd phi = b.norm() > 0.0 ? Eigen::VectorXd(cg.solve(b)) : Eigen::VectorXd::Zero(nc);
  if (singular) phi.array() -= phi.mean();

  StaggeredField E = staggered_zeros(g);
  auto phi_at = [&](Index3 c) -> double {
    for (int d = 0; d < 3; ++d) {
      if (g.periodic[d]) c[d] = wrap(c[d], g.cells[d]);
      else if (c[d] < 0 || c[d] >= g.cells[d]) return 0.0;
    }
    return phi(static_cast<Eigen::Index>(g.cell(c[0], c[1], c[2])));
  };
  for (int m = 0; m < 3; ++m) {
    for_each_e_serial(g, m, [&](Index3 x) {
      Index3 below = x;
      below[m] = x[m] - 1;
      E[m][g.node(x[0], x[1], x[2])] = -(phi_at(x) - phi_at(below)) / g.spacing[m];
    });
  }
  return E;
}

}  // namespace vmsim
