#include "vmsim/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vmsim/error.hpp"

namespace vmsim {

namespace {

constexpr double kPi = std::numbers::pi;

int wrap(int i, int n) { return ((i % n) + n) % n; }

std::size_t shifted(const FieldGrid& g, Index3 p, int d) {
  p[d] = g.periodic[d] ? wrap(p[d] + 1, g.cells[d]) : p[d] + 1;
  return g.node(p[0], p[1], p[2]);
}

/// E and H (or mu H) averaged to the centre of field cell c. H is taken at
/// integer time, the mean of H_prev and H.
void cell_centre(const FieldGrid& g, const EmField& fld, const YeeMaterial* mat, const Index3& c, Vec3& E,
                 Vec3& H) {
  for (int m = 0; m < 3; ++m) {
    const std::size_t a = g.node(c[0], c[1], c[2]);
    E[m] = 0.5 * (fld.E[m][a] + fld.E[m][shifted(g, c, m)]);
    const int d1 = (m + 1) % 3, d2 = (m + 2) % 3;
    double sum = 0.0;
    for (int s1 = 0; s1 < 2; ++s1)
      for (int s2 = 0; s2 < 2; ++s2) {
        Index3 p = c;
        if (s1 != 0) p[d1] = g.periodic[d1] ? wrap(p[d1] + 1, g.cells[d1]) : p[d1] + 1;
        if (s2 != 0) p[d2] = g.periodic[d2] ? wrap(p[d2] + 1, g.cells[d2]) : p[d2] + 1;
        const std::size_t n = g.node(p[0], p[1], p[2]);
        const double h = 0.5 * (fld.H_prev[m][n] + fld.H[m][n]);
        sum += mat != nullptr ? mat->mu[m][n] * h : h;
      }
    H[m] = 0.25 * sum;
  }
}

void add_into(StaggeredField& a, const StaggeredField& b, double scale = 1.0) {
  for (int m = 0; m < 3; ++m)
    for (std::size_t i = 0; i < a[m].size(); ++i) a[m][i] += scale * b[m][i];
}

double area_of(const PhaseGrid& g, int axis) { return g.cell_volume() / g.dx(axis); }

SpeciesSample sample_species(const PhaseGrid& g, const SpeciesParams& sp, const Distribution& f,
                             const TransportTally& tally, double R, const std::vector<WallCell>& walls) {
  const Kinematics kin(g, sp.rest_mass);
  const std::size_t nv = g.velocity_count();
  SpeciesSample out;
  double p1 = 0.0, p43 = 0.0, p2 = 0.0, ke = 0.0, keR = 0.0, l43 = 0.0, fmax = 0.0;
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    const double* fs = f.values.data() + s * nv;
    double dens = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
      const double x = fs[v];
      const double a = std::abs(x);
      p1 += a;
      p43 += std::pow(a, 4.0 / 3.0);
      p2 += a * a;
      fmax = std::max(fmax, a);
      ke += kin.v0[v] * x;
      if (kin.speed[v] < R) {
        keR += kin.v0[v] * x;
        dens += x;
      }
    }
    dens *= g.dv3();
    l43 += std::pow(std::abs(dens), 4.0 / 3.0);
  }
  const double w = g.phase_cell_volume();
  out.mass = p1 * w;
  out.ke = ke * w;
  out.ke_R = keR * w;
  out.density_l43_R = std::pow(l43 * g.cell_volume(), 0.75);
  out.f_min = f.min();
  out.f_max = f.max();
  out.pnorm = {p1 * w, std::pow(p43 * w, 0.75), std::sqrt(p2 * w), fmax};
  out.tally = tally;
  for (std::size_t wi = 0; wi < walls.size(); ++wi) {
    const int axis = walls[wi].axis;
    const double scale = area_of(g, axis) * g.dv3();
    for (std::size_t v = 0; v < nv; ++v) {
      const double c = std::abs(kin.v_hat[v][axis]) * scale;
      out.trace_out += c * f.outflow_trace[wi * nv + v];
      out.trace_in += c * f.inflow_record[wi * nv + v];
    }
  }
  return out;
}

/// Field cells excluded from the interior Gauss residual: within one cell of
/// the container surface on a walled axis, on either side.
bool near_surface(const PhaseGrid& g, const Index3& c) {
  const CellBox& box = g.container();
  for (int d = 0; d < 3; ++d) {
    if (!g.has_walls(d)) continue;
    const int i = c[d];
    if (i == box.lo[d] - 1 || i == box.lo[d] || i == box.hi[d] - 1 || i == box.hi[d]) return true;
  }
  return false;
}

StaggeredField scaled(const StaggeredField& f, double s) {
  StaggeredField out = f;
  for (auto& comp : out)
    for (double& x : comp) x *= s;
  return out;
}

}  // namespace

double Waveform::operator()(double t) const {
  switch (kind) {
    case WaveformKind::Constant: return amplitude;
    case WaveformKind::Sine: return amplitude * std::sin(omega * t + phase);
    case WaveformKind::Ramp: return amplitude * std::clamp(t / ramp_time, 0.0, 1.0);
  }
  return 0.0;
}

bool ExternalCurrent::empty() const {
  for (const auto& c : profile)
    for (double x : c)
      if (x != 0.0) return false;
  return true;
}

StaggeredField ExternalCurrent::at(double t) const { return scaled(profile, waveform(t)); }

ExternalCurrent ExternalCurrent::none(const FieldGrid& grid) {
  ExternalCurrent u;
  u.profile = staggered_zeros(grid);
  u.rho_u_init.assign(grid.cell_count(), 0.0);
  u.rho_u = u.rho_u_init;
  return u;
}

namespace {

void check_region(const FieldGrid& grid, const CellBox& region) {
  for (int d = 0; d < 3; ++d) {
    if (region.lo[d] < 0 || region.hi[d] > grid.cells[d] || region.lo[d] >= region.hi[d]) {
      throw Error(ErrorKind::ValidationError, "external current region must be a non-empty box inside the field box");
    }
  }
}

}  // namespace

ExternalCurrent ExternalCurrent::loop(const FieldGrid& grid, const CellBox& region, int normal_axis,
                                      const Waveform& waveform) {
  check_region(grid, region);
  if (normal_axis < 0 || normal_axis > 2) throw Error(ErrorKind::ValidationError, "loop axis must be 0, 1 or 2");
  const int a = normal_axis, p = (a + 1) % 3, q = (a + 2) % 3;
  if (region.extent(p) < 2 || region.extent(q) < 2) {
    throw Error(ErrorKind::ValidationError, "loop region needs at least two cells across the loop axis");
  }
  StaggeredField A = staggered_zeros(grid);
  for (int i = region.lo[a]; i < region.hi[a]; ++i)
    for (int j = region.lo[p] + 1; j < region.hi[p]; ++j)
      for (int k = region.lo[q] + 1; k < region.hi[q]; ++k) {
        Index3 x{};
        x[a] = i;
        x[p] = j;
        x[q] = k;
        A[a][grid.node(x[0], x[1], x[2])] = 1.0;
      }
  ExternalCurrent u = none(grid);
  u.region = region;
  u.waveform = waveform;
  u.profile = curl_h(grid, A);
  // curl of a unit indicator is +-1/h; rescale to unit current.
  for (int m = 0; m < 3; ++m) {
    if (m == a) continue;
    const int d = 3 - a - m;
    for (double& x : u.profile[m]) x *= grid.spacing[d];
  }
  return u;
}

ExternalCurrent ExternalCurrent::box(const FieldGrid& grid, const CellBox& region, const Vec3& direction,
                                     const Waveform& waveform) {
  check_region(grid, region);
  ExternalCurrent u = none(grid);
  u.region = region;
  u.waveform = waveform;
  for (int m = 0; m < 3; ++m) {
    if (direction[m] == 0.0) continue;
    Index3 lo = region.lo, hi = region.hi;
    hi[(m + 1) % 3] -= 1;
    hi[(m + 2) % 3] -= 1;
    for (int i = lo[0]; i <= hi[0]; ++i)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int k = lo[2]; k <= hi[2]; ++k) {
          Index3 x{i, j, k};
          if (grid.periodic[m]) x[m] = wrap(x[m], grid.cells[m]);
          u.profile[m][grid.node(x[0], x[1], x[2])] = direction[m];
        }
  }
  return u;
}

std::vector<double> face_divergence(const FieldGrid& grid, const StaggeredField& u) {
  std::vector<double> div(grid.cell_count(), 0.0);
  for (int i = 0; i < grid.cells[0]; ++i)
    for (int j = 0; j < grid.cells[1]; ++j)
      for (int k = 0; k < grid.cells[2]; ++k) {
        const Index3 c{i, j, k};
        const std::size_t n = grid.node(i, j, k);
        double sum = 0.0;
        for (int m = 0; m < 3; ++m) sum += (u[m][shifted(grid, c, m)] - u[m][n]) / grid.spacing[m];
        div[grid.cell(i, j, k)] = sum;
      }
  return div;
}

void evolve_external_charge(ExternalCurrent& u, const FieldGrid& grid, double t, double dt) {
  if (u.rho_u.size() != grid.cell_count()) u.rho_u.assign(grid.cell_count(), 0.0);
  const double w = u.waveform(t + 0.5 * dt);
  if (w == 0.0) return;
  const std::vector<double> div = face_divergence(grid, u.profile);
  for (std::size_t c = 0; c < div.size(); ++c) u.rho_u[c] -= dt * w * div[c];
}

ForceField cell_forces(const PhaseGrid& grid, const EmField& fld, const YeeMaterial& mat) {
  ForceField F = ForceField::zeros(grid.space_count());
  const FieldGrid& g = grid.field();
  const CellBox& box = grid.container();
  for (std::size_t s = 0; s < grid.space_count(); ++s) {
    const Index3 l = grid.space_coords(s);
    const Index3 c{l[0] + box.lo[0], l[1] + box.lo[1], l[2] + box.lo[2]};
    cell_centre(g, fld, &mat, c, F.E[s], F.B[s]);
  }
  return F;
}

StaggeredField face_current(const PhaseGrid& grid, const std::vector<Vec3>& j_cells) {
  const FieldGrid& g = grid.field();
  const CellBox& box = grid.container();
  StaggeredField J = staggered_zeros(g);
  for (std::size_t s = 0; s < grid.space_count(); ++s) {
    const Index3 l = grid.space_coords(s);
    for (int m = 0; m < 3; ++m) {
      Index3 nl = l;
      nl[m] += 1;
      if (nl[m] == grid.space_extent(m)) {
        if (grid.has_walls(m)) continue;
        nl[m] = 0;
      }
      const std::size_t n = grid.space_index(nl[0], nl[1], nl[2]);
      Index3 c{nl[0] + box.lo[0], nl[1] + box.lo[1], nl[2] + box.lo[2]};
      J[m][g.node(c[0], c[1], c[2])] = 0.5 * (j_cells[s][m] + j_cells[n][m]);
    }
  }
  return J;
}

StaggeredField cutoff_current(const PhaseGrid& grid, std::span<const Distribution> f,
                              std::span<const SpeciesParams> species, double R, const ExternalCurrent& u,
                              double t) {
  const Moments mom = moments(grid, f, species, R);
  StaggeredField J = face_current(grid, mom.j);
  add_into(J, u.at(t));
  return J;
}

long RunSetup::steps() const {
  if (!(dt > 0.0)) return 0;
  return std::max(0L, std::lround(std::ceil(t_end / dt - 1e-9)));
}

void RunSetup::validate() const {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw Error(ErrorKind::ValidationError, "dt must be positive and t_end >= 0");
  if (cadence < 1) throw Error(ErrorKind::ValidationError, "cadence must be >= 1");
  if (species.size() != boundaries.size() || species.size() != f0.size()) {
    throw Error(ErrorKind::ValidationError, "species, boundaries and initial data must have the same length");
  }
  for (std::size_t a = 0; a < species.size(); ++a) {
    species[a].validate();
    boundaries[a].validate(grid, species[a].regime);
    if (f0[a].values.size() != grid.size()) throw Error(ErrorKind::ShapeMismatch, "initial distribution size");
  }
  if (!(material.grid == grid.field())) throw Error(ErrorKind::ValidationError, "material grid differs from the field grid");
  if (!(field0.grid == grid.field())) throw Error(ErrorKind::ValidationError, "initial field grid differs");
  if (external.profile[0].size() != grid.field().node_count()) {
    throw Error(ErrorKind::ShapeMismatch, "external current profile does not match the field grid");
  }
}

DiagnosticsRecord measure_record(const RunSetup& setup, const YeeMaterial& mat, double t, long step,
                                 std::span<const Distribution> f, const std::vector<TransportTally>& tallies,
                                 const EmField& fld, const std::vector<double>& rho_u,
                                 const std::vector<double>& S_faces, const std::vector<double>& T_faces) {
  const PhaseGrid& g = setup.grid;
  const FieldGrid& fg = g.field();
  const std::vector<WallCell> walls = wall_cells(g);
  const double R = setup.effective_cutoff();
  DiagnosticsRecord r;
  r.t = t;
  r.step = step;
  for (std::size_t a = 0; a < setup.species.size(); ++a) {
    r.species.push_back(sample_species(g, setup.species[a], f[a], tallies[a], R, walls));
    r.boundary_out += setup.species[a].charge * tallies[a].out_number;
    r.boundary_in += setup.species[a].charge * tallies[a].in_number;
  }
  r.em_energy = em_energy(fld, mat);
  r.field_norm = field_norm(fld);

  const Moments mom = moments(g, f, setup.species);
  double l43 = 0.0, q = 0.0;
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    l43 += std::pow(std::sqrt(dot(mom.j[s], mom.j[s])), 4.0 / 3.0);
    q += mom.rho[s];
  }
  r.jint_l43 = std::pow(l43 * g.cell_volume(), 0.75);
  r.charge_int = q * g.cell_volume();
  for (std::size_t w = 0; w < walls.size(); ++w) {
    const double dA = area_of(g, walls[w].axis);
    if (w < S_faces.size()) r.S_total += S_faces[w] * dA;
    if (w < T_faces.size()) r.T_total += T_faces[w] * dA;
  }

  std::vector<double> rho(fg.cell_count(), 0.0);
  for (std::size_t s = 0; s < g.space_count(); ++s) rho[g.field_cell(s)] += mom.rho[s];
  for (std::size_t c = 0; c < rho.size() && c < rho_u.size(); ++c) rho[c] += rho_u[c];
  for (double x : rho_u) r.rho_u_total += x * fg.cell_volume();
  const DivergenceResiduals plain = divergence_residuals(fld, mat, rho);
  std::vector<double> layered = rho;
  for (std::size_t w = 0; w < walls.size() && w < S_faces.size(); ++w) {
    layered[g.field_cell(walls[w].space)] += S_faces[w] / g.dx(walls[w].axis);
  }
  const DivergenceResiduals full = divergence_residuals(fld, mat, layered);
  r.divB_norm = full.divB_norm;
  r.gauss_residual = full.gauss_residual_norm;
  r.gauss_residual_no_layer = plain.gauss_residual_norm;

  const std::vector<double> de = div_eps_e(mat, fld.E);
  double interior = 0.0;
  for (int i = 0; i < fg.cells[0]; ++i)
    for (int j = 0; j < fg.cells[1]; ++j)
      for (int k = 0; k < fg.cells[2]; ++k) {
        if (near_surface(g, {i, j, k})) continue;
        const std::size_t c = fg.cell(i, j, k);
        const double res = de[c] - 4.0 * kPi * layered[c];
        interior += res * res;
      }
  r.gauss_interior = std::sqrt(interior * fg.cell_volume());
  return r;
}

RunResult coupled_run(const RunSetup& setup, const RecordObserver& observer) {
  setup.validate();
  const PhaseGrid& g = setup.grid;
  const FieldGrid& fg = g.field();
  const double dt = setup.dt;
  const long N = setup.steps();
  const YeeMaterial mat = yee_material(setup.material);

  RunResult out;
  EmField& fld = out.field;
  fld = setup.field0;
  fld.time = 0.0;
  start_leapfrog(fld, mat, dt);
  out.f = setup.f0;
  std::vector<Distribution>& f = out.f;

  std::vector<VlasovTransport> transport;
  for (std::size_t a = 0; a < setup.species.size(); ++a) transport.emplace_back(g, setup.species[a], setup.boundaries[a]);
  ExternalCurrent u = setup.external;
  if (u.rho_u.size() != fg.cell_count()) u.rho_u = u.rho_u_init;
  if (u.rho_u.size() != fg.cell_count()) u.rho_u.assign(fg.cell_count(), 0.0);

  RunHistory& hist = out.history;
  hist.grid = g;
  hist.species = setup.species;
  hist.dt = dt;
  hist.cutoff = setup.effective_cutoff();
  hist.sigma_lo = mat.sigma_lo;
  hist.sigma_hi = mat.sigma_hi;
  for (const BoundarySpec& bc : setup.boundaries) {
    hist.a0.push_back(bc.a0());
    hist.g_max.push_back(bc.inflow.empty() ? 0.0 : *std::max_element(bc.inflow.begin(), bc.inflow.end()));
  }

  const std::size_t nw = wall_cells(g).size();
  std::vector<double> S(nw, 0.0), T(nw, 0.0), net;
  std::vector<TransportTally> tallies(setup.species.size());
  double work_mid = 0.0, work_trap = 0.0, j_l1l2 = 0.0, u_l1l2 = 0.0;

  auto record = [&](long n) {
    DiagnosticsRecord r = measure_record(setup, mat, fld.time, n, f, tallies, fld, u.rho_u, S, T);
    r.work_midpoint = work_mid;
    r.work_trapezoid = work_trap;
    r.j_l1l2 = j_l1l2;
    r.u_l1l2 = u_l1l2;
    hist.records.push_back(r);
    hist.S_faces.push_back(S);
    hist.T_faces.push_back(T);
    if (observer) observer(hist.records.back(), f, fld);
  };

  Moments m_prev = moments(g, f, setup.species);
  StaggeredField J_now = face_current(g, m_prev.j);
  add_into(J_now, u.at(0.0));
  double P_prev = e_points_dot(fg, fld.E, J_now);
  record(0);

  for (long n = 0; n < N; ++n) {
    const double t = static_cast<double>(n) * dt;
    const ForceField F = cell_forces(g, fld, mat);
    std::fill(T.begin(), T.end(), 0.0);
    for (std::size_t a = 0; a < transport.size(); ++a) {
      tallies[a].accumulate(transport[a].step(f[a], &F, dt, hist.cutoff, &net));
      for (std::size_t w = 0; w < nw; ++w) T[w] += setup.species[a].charge * net[w];
    }
    const Moments m_new = moments(g, f, setup.species);
    std::vector<Vec3> j_half(g.space_count());
    for (std::size_t s = 0; s < j_half.size(); ++s)
      for (int d = 0; d < 3; ++d) j_half[s][d] = 0.5 * (m_prev.j[s][d] + m_new.j[s][d]);
    StaggeredField J = face_current(g, j_half);
    const StaggeredField Ju = u.at(t + 0.5 * dt);
    add_into(J, Ju);
    j_l1l2 += dt * e_points_norm(fg, J);
    u_l1l2 += dt * e_points_norm(fg, Ju);

    work_mid += maxwell_step(fld, mat, J, dt).midpoint;
    evolve_external_charge(u, fg, t, dt);
    for (std::size_t w = 0; w < nw; ++w) S[w] += dt * T[w];

    StaggeredField J_next = face_current(g, m_new.j);
    add_into(J_next, u.at(t + dt));
    const double P_next = e_points_dot(fg, fld.E, J_next);
    work_trap += 0.5 * dt * (P_prev + P_next);
    P_prev = P_next;
    m_prev = m_new;
    if ((n + 1) % setup.cadence == 0 || n + 1 == N) record(n + 1);
  }
  return out;
}

double current_l1l2(const FieldGrid& grid, const std::vector<StaggeredField>& j, double dt) {
  double sum = 0.0;
  for (const StaggeredField& x : j) sum += dt * e_points_norm(grid, x);
  return sum;
}

namespace {

std::vector<double> bump_weights(double width) {
  const int reach = static_cast<int>(std::ceil(width)) - 1;
  std::vector<double> w;
  if (reach <= 0) return {1.0};
  double total = 0.0;
  for (int r = -reach; r <= reach; ++r) {
    const double s = r / width;
    const double x = std::abs(s) < 1.0 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0;
    w.push_back(x);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

/// Convolution along axis d of one staggered component with zero extension
/// outside its valid range (wrapping on periodic axes).
std::vector<double> convolve_axis(const FieldGrid& g, int m, int d, const std::vector<double>& src,
                                  const std::vector<double>& w) {
  const int reach = static_cast<int>(w.size() / 2);
  if (reach == 0 || g.cells[d] == 1) return src;
  std::vector<double> dst(src.size(), 0.0);
  Index3 ext{};
  for (int e = 0; e < 3; ++e) ext[e] = e == m ? g.nodes(e) : g.cells[e];
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k) {
        const Index3 p{i, j, k};
        double sum = 0.0;
        for (int r = -reach; r <= reach; ++r) {
          Index3 q = p;
          q[d] += r;
          if (g.periodic[d]) q[d] = wrap(q[d], g.cells[d]);
          else if (q[d] < 0 || q[d] >= ext[d]) continue;
          sum += w[static_cast<std::size_t>(r + reach)] * src[g.node(q[0], q[1], q[2])];
        }
        dst[g.node(i, j, k)] = sum;
      }
  return dst;
}

std::vector<StaggeredField> smooth_with(const FieldGrid& g, const std::vector<StaggeredField>& j, double width) {
  const std::vector<double> w = bump_weights(width);
  std::vector<StaggeredField> space(j.size());
  for (std::size_t n = 0; n < j.size(); ++n)
    for (int m = 0; m < 3; ++m) {
      std::vector<double> c = j[n][m];
      for (int d = 0; d < 3; ++d) c = convolve_axis(g, m, d, c, w);
      space[n][m] = std::move(c);
    }
  const int reach = static_cast<int>(w.size() / 2);
  if (reach == 0) return space;
  const long N = static_cast<long>(j.size());
  std::vector<StaggeredField> out(j.size(), staggered_zeros(g));
  for (long n = 0; n < N; ++n)
    for (int r = -reach; r <= reach; ++r) {
      const long q = n + r;
      if (q < 0 || q >= N) continue;
      add_into(out[static_cast<std::size_t>(n)], space[static_cast<std::size_t>(q)],
               w[static_cast<std::size_t>(r + reach)]);
    }
  return out;
}

double smoothing_error(const FieldGrid& g, const std::vector<StaggeredField>& j,
                       const std::vector<StaggeredField>& jbar, double dt) {
  double sum = 0.0;
  for (std::size_t n = 0; n < j.size(); ++n) {
    StaggeredField d = j[n];
    add_into(d, jbar[n], -1.0);
    sum += dt * e_points_norm(g, d);
  }
  return 4.0 * kPi * sum;
}

}  // namespace

SmoothingCertificate smooth_current(const FieldGrid& grid, const std::vector<StaggeredField>& j, double dt,
                                    int k, std::vector<StaggeredField>& jbar, const SmoothOptions& opt) {
  SmoothingCertificate cert;
  cert.tolerance = 1.0 / (k + 1);
  auto attempt = [&](double width, std::vector<StaggeredField>& result) {
    result = smooth_with(grid, j, width);
    return smoothing_error(grid, j, result, dt);
  };
  std::vector<StaggeredField> trial;
  double err = attempt(opt.start_width, trial);
  if (err < cert.tolerance) {
    cert.width = opt.start_width;
    cert.error = err;
    jbar = std::move(trial);
    return cert;
  }
  std::vector<StaggeredField> best;
  double best_err = attempt(opt.min_width, best);
  if (!(best_err < cert.tolerance)) {
    throw Error(ErrorKind::ToleranceUnreachable,
                "current smoothing error " + std::to_string(best_err) + " exceeds 1/(k+1) at the finest width");
  }
  double lo = opt.min_width, hi = opt.start_width;
  for (int it = 0; it < opt.bisection_steps && hi - lo > 1e-3; ++it) {
    const double mid = 0.5 * (lo + hi);
    err = attempt(mid, trial);
    if (err < cert.tolerance) {
      lo = mid;
      best = std::move(trial);
      best_err = err;
    } else {
      hi = mid;
    }
  }
  cert.width = lo;
  cert.error = best_err;
  jbar = std::move(best);
  return cert;
}

namespace {

long window_steps(const RunSetup& setup, double window) {
  return std::min(setup.steps(), std::max(0L, std::lround(std::ceil(window / setup.dt - 1e-9))));
}

void field_cells(const FieldGrid& g, const EmField& fld, std::vector<Vec3>& E, std::vector<Vec3>& H) {
  E.assign(g.cell_count(), Vec3{});
  H.assign(g.cell_count(), Vec3{});
  for (int i = 0; i < g.cells[0]; ++i)
    for (int j = 0; j < g.cells[1]; ++j)
      for (int k = 0; k < g.cells[2]; ++k) {
        const std::size_t c = g.cell(i, j, k);
        cell_centre(g, fld, nullptr, {i, j, k}, E[c], H[c]);
      }
}

double cells_l2_diff(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double dV) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c)
    for (int d = 0; d < 3; ++d) s += (a[c][d] - b[c][d]) * (a[c][d] - b[c][d]);
  return std::sqrt(s * dV);
}

template <class T>
const T& clamp_at(const std::vector<T>& v, std::size_t n) {
  return v[std::min(n, v.size() - 1)];
}

/// Cell-centred averages of a face field over the field box.
std::vector<Vec3> face_to_cells(const FieldGrid& g, const StaggeredField& J) {
  std::vector<Vec3> out(g.cell_count(), Vec3{});
  for (int i = 0; i < g.cells[0]; ++i)
    for (int j = 0; j < g.cells[1]; ++j)
      for (int k = 0; k < g.cells[2]; ++k) {
        const Index3 c{i, j, k};
        for (int m = 0; m < 3; ++m)
          out[g.cell(i, j, k)][m] = 0.5 * (J[m][g.node(i, j, k)] + J[m][shifted(g, c, m)]);
      }
  return out;
}

}  // namespace

IterationState initial_iteration_state(const RunSetup& setup, double R) {
  setup.validate();
  IterationState st;
  st.k = 0;
  st.R = R;
  st.window = std::min(R, setup.t_end);
  st.steps = window_steps(setup, st.window);
  for (const BoundarySpec& bc : setup.boundaries) st.reflection.push_back(bc.a0());
  EmField fld = setup.field0;
  fld.H_prev = fld.H;
  const YeeMaterial mat = yee_material(setup.material);
  st.forces.push_back(cell_forces(setup.grid, fld, mat));
  st.e_cells.emplace_back();
  st.h_cells.emplace_back();
  field_cells(setup.grid.field(), fld, st.e_cells.back(), st.h_cells.back());
  st.field_final = fld;
  st.f_final = setup.f0;
  return st;
}

IterationState iterate_once(const RunSetup& setup, const IterationState& prev, const IterationOptions& opt) {
  const PhaseGrid& g = setup.grid;
  const FieldGrid& fg = g.field();
  const double dt = setup.dt;
  const double R = prev.R;
  IterationState st;
  st.k = prev.k + 1;
  st.R = R;
  st.window = prev.window;
  st.steps = prev.steps;
  const long N = st.steps;

  // Vlasov solve in the previous fields.
  std::vector<VlasovTransport> transport;
  std::vector<SpeciesParams> species = setup.species;
  for (std::size_t a = 0; a < species.size(); ++a) {
    BoundarySpec bc = setup.boundaries[a];
    if (species[a].regime == BoundaryRegime::PurelyReflecting) {
      bc.reflection = static_cast<double>(st.k) / (st.k + 1);
      bc.reflection_table.clear();
      species[a].regime = BoundaryRegime::PartiallyAbsorbing;
    }
    st.reflection.push_back(bc.a0());
    transport.emplace_back(g, species[a], bc);
  }
  std::vector<Distribution> f = setup.f0;
  std::vector<TransportTally> tallies(species.size());
  ExternalCurrent u = setup.external;
  u.rho_u = u.rho_u_init;
  if (u.rho_u.size() != fg.cell_count()) u.rho_u.assign(fg.cell_count(), 0.0);

  RunHistory& hist = st.history;
  hist.grid = g;
  hist.species = setup.species;
  hist.dt = dt;
  hist.cutoff = R;
  for (std::size_t a = 0; a < species.size(); ++a) {
    hist.a0.push_back(st.reflection[a]);
    const auto& in = setup.boundaries[a].inflow;
    hist.g_max.push_back(in.empty() ? 0.0 : *std::max_element(in.begin(), in.end()));
  }
  std::vector<long> record_steps;
  std::vector<std::vector<SpeciesSample>> samples;
  const std::vector<WallCell> walls = wall_cells(g);
  auto sample = [&](long n) {
    std::vector<SpeciesSample> ss;
    for (std::size_t a = 0; a < species.size(); ++a) ss.push_back(sample_species(g, species[a], f[a], tallies[a], R, walls));
    samples.push_back(std::move(ss));
    record_steps.push_back(n);
  };

  std::vector<StaggeredField> J(static_cast<std::size_t>(N));
  Moments m_prev = moments(g, f, species, R);
  sample(0);
  for (long n = 0; n < N; ++n) {
    const ForceField& F = clamp_at(prev.forces, static_cast<std::size_t>(n));
    for (std::size_t a = 0; a < transport.size(); ++a) tallies[a].accumulate(transport[a].step(f[a], &F, dt, R));
    const Moments m_new = moments(g, f, species, R);
    std::vector<Vec3> jh(g.space_count());
    for (std::size_t s = 0; s < jh.size(); ++s)
      for (int d = 0; d < 3; ++d) jh[s][d] = 0.5 * (m_prev.j[s][d] + m_new.j[s][d]);
    J[static_cast<std::size_t>(n)] = face_current(g, jh);
    add_into(J[static_cast<std::size_t>(n)], u.at((n + 0.5) * dt));
    st.j_cells.push_back(std::move(jh));
    m_prev = m_new;
    if ((n + 1) % setup.cadence == 0 || n + 1 == N) sample(n + 1);
  }

  // Smoothed current and mollified material for the field solve.
  std::vector<StaggeredField> jbar;
  st.certificate = N > 0 ? smooth_current(fg, J, dt, st.k, jbar, opt.smooth) : SmoothingCertificate{};
  const MollifiedMaterial mm = mollify_material(setup.material, st.k, opt.mollify);
  st.material_width = mm.width;
  st.material_error = mm.error;
  const YeeMaterial mat = yee_material(mm.field);
  hist.sigma_lo = mat.sigma_lo;
  hist.sigma_hi = mat.sigma_hi;

  EmField fld = setup.field0;
  fld.time = 0.0;
  start_leapfrog(fld, mat, dt);
  std::vector<double> S(walls.size(), 0.0), T(walls.size(), 0.0);
  std::size_t next_record = 0;
  double work_mid = 0.0, j_l1l2 = 0.0;
  auto push_record = [&](long n) {
    DiagnosticsRecord r;
    r.t = n * dt;
    r.step = n;
    r.species = samples[next_record];
    r.em_energy = em_energy(fld, mat);
    r.field_norm = field_norm(fld);
    r.work_midpoint = work_mid;
    r.j_l1l2 = j_l1l2;
    for (std::size_t a = 0; a < species.size(); ++a) {
      r.boundary_out += species[a].charge * r.species[a].tally.out_number;
      r.boundary_in += species[a].charge * r.species[a].tally.in_number;
    }
    hist.records.push_back(std::move(r));
    hist.S_faces.push_back(S);
    hist.T_faces.push_back(T);
    ++next_record;
  };
  auto snapshot_fields = [&]() {
    st.e_cells.emplace_back();
    st.h_cells.emplace_back();
    field_cells(fg, fld, st.e_cells.back(), st.h_cells.back());
  };
  push_record(0);
  snapshot_fields();
  for (long n = 0; n < N; ++n) {
    st.forces.push_back(cell_forces(g, fld, mat));
    const StaggeredField& Jn = jbar[static_cast<std::size_t>(n)];
    j_l1l2 += dt * e_points_norm(fg, Jn);
    work_mid += maxwell_step(fld, mat, Jn, dt).midpoint;
    st.jbar_cells.push_back(face_to_cells(fg, Jn));
    snapshot_fields();
    if (next_record < record_steps.size() && record_steps[next_record] == n + 1) push_record(n + 1);
  }

  // Convergence metrics against the previous member.
  const double dV = fg.cell_volume();
  double fd = 0.0;
  for (std::size_t n = 0; n < st.e_cells.size(); ++n) {
    const double de = cells_l2_diff(st.e_cells[n], clamp_at(prev.e_cells, n), dV);
    const double dh = cells_l2_diff(st.h_cells[n], clamp_at(prev.h_cells, n), dV);
    fd = std::max(fd, std::sqrt(de * de + dh * dh));
  }
  st.field_diff = fd;
  if (!prev.j_cells.empty()) {
    double md = 0.0;
    for (std::size_t n = 0; n < st.j_cells.size(); ++n)
      md = std::max(md, cells_l2_diff(st.j_cells[n], clamp_at(prev.j_cells, n), g.cell_volume()));
    st.moment_diff = md;
  }
  double mismatch = 0.0;
  for (std::size_t n = 0; n < st.j_cells.size(); ++n) {
    const std::vector<Vec3>& Eprev = clamp_at(prev.e_cells, n);
    for (std::size_t s = 0; s < g.space_count(); ++s) {
      const std::size_t c = g.field_cell(s);
      mismatch += dot(Eprev[c], st.j_cells[n][s]);
    }
    for (std::size_t c = 0; c < fg.cell_count(); ++c) mismatch -= dot(st.e_cells[n][c], st.jbar_cells[n][c]);
  }
  st.mismatch = mismatch * dt * dV;
  st.f_final = std::move(f);
  st.field_final = std::move(fld);
  return st;
}

std::vector<IterationState> iterate(const RunSetup& setup, const IterationOptions& opt) {
  const double R = opt.R > 0.0 ? opt.R : setup.effective_cutoff();
  std::vector<IterationState> states;
  states.push_back(initial_iteration_state(setup, R));
  for (int k = 0; k < opt.k_max; ++k) {
    IterationState next = iterate_once(setup, states.back(), opt);
    IterationState& old = states.back();
    old.forces.clear();
    old.e_cells.clear();
    old.h_cells.clear();
    old.j_cells.clear();
    old.jbar_cells.clear();
    old.f_final.clear();
    states.push_back(std::move(next));
    if (opt.threshold > 0.0 && states.back().field_diff < opt.threshold) break;
  }
  return states;
}

LadderReport run_ladder(const RunSetup& setup, const std::vector<double>& R_list, const IterationOptions& opt) {
  LadderReport rep;
  for (double R : R_list) {
    IterationOptions o = opt;
    o.R = R;
    const std::vector<IterationState> states = iterate(setup, o);
    const IterationState& last = states.back();
    LadderMember m;
    m.R = R;
    m.iterations = last.k;
    m.field_diff = std::isnan(last.field_diff) ? 0.0 : last.field_diff;
    for (const DiagnosticsRecord& r : last.history.records) {
      double ke = 0.0;
      for (const SpeciesSample& s : r.species) ke += s.ke;
      m.energy_series.push_back(ke + r.em_energy);
    }
    if (!last.history.records.empty()) {
      const DiagnosticsRecord& r = last.history.records.back();
      for (const SpeciesSample& s : r.species) {
        m.kinetic_energy += s.ke;
        m.leakage += s.tally.leak_number;
      }
      m.em_energy = r.em_energy;
    } else {
      for (std::size_t a = 0; a < setup.species.size(); ++a)
        m.kinetic_energy += kinetic_norm(setup.grid, last.f_final[a], 1.0, true, setup.species[a].rest_mass);
    }
    const Moments mom = moments(setup.grid, last.f_final, setup.species);
    for (double x : mom.rho) m.moment_l1 += std::abs(x) * setup.grid.cell_volume();
    rep.members.push_back(std::move(m));
  }
  for (std::size_t i = 1; i < rep.members.size(); ++i) {
    const LadderMember& a = rep.members[i - 1];
    const LadderMember& b = rep.members[i];
    double d = 0.0;
    const std::size_t n = std::min(a.energy_series.size(), b.energy_series.size());
    for (std::size_t t = 0; t < n; ++t) d = std::max(d, std::abs(a.energy_series[t] - b.energy_series[t]));
    rep.energy_diff.push_back(d);
    rep.moment_diff.push_back(std::abs(a.moment_l1 - b.moment_l1));
  }
  return rep;
}

}  // namespace vmsim
