#include "vmsim/vlasov_transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "vmsim/error.hpp"

namespace vmsim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t exponent_slot(double p) {
  for (std::size_t i = 0; i < kTraceExponents.size(); ++i)
    if (std::abs(kTraceExponents[i] - p) < 1e-12) return i;
  throw Error(ErrorKind::InvalidArgument, "no trace tally for exponent p=" + std::to_string(p));
}

double rel_tol(double scale) { return 1e-12 * std::abs(scale) + 1e-300; }

}  // namespace

void TransportTally::accumulate(const TransportTally& s) {
  out_number += s.out_number;
  in_number += s.in_number;
  out_kin += s.out_kin;
  out_kin_R += s.out_kin_R;
  in_kin += s.in_kin;
  g_number += s.g_number;
  g_kin += s.g_kin;
  for (std::size_t i = 0; i < out_pow.size(); ++i) {
    out_pow[i] += s.out_pow[i];
    g_pow[i] += s.g_pow[i];
  }
  out_max = std::max(out_max, s.out_max);
  g_max = std::max(g_max, s.g_max);
  work_R += s.work_R;
  leak_number += s.leak_number;
  leak_kin += s.leak_kin;
}

double BoundarySpec::a0() const {
  if (reflection_table.empty()) return reflection;
  return *std::max_element(reflection_table.begin(), reflection_table.end());
}

void BoundarySpec::validate(const PhaseGrid& grid, BoundaryRegime regime) const {
  const std::size_t n = wall_cells(grid).size() * grid.velocity_count();
  if (!reflection_table.empty() && reflection_table.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, "reflection table has " + std::to_string(reflection_table.size()) +
                                              " entries, expected " + std::to_string(n));
  }
  if (!inflow.empty() && inflow.size() != n) {
    throw Error(ErrorKind::ShapeMismatch,
                "inflow table has " + std::to_string(inflow.size()) + " entries, expected " + std::to_string(n));
  }
  auto bad_a = [](double a) { return !(a >= 0.0 && a <= 1.0); };
  if (bad_a(reflection) || std::any_of(reflection_table.begin(), reflection_table.end(), bad_a)) {
    throw Error(ErrorKind::ValidationError, "reflection coefficient must lie in [0, 1]");
  }
  if (std::any_of(inflow.begin(), inflow.end(), [](double g) { return !(g >= 0.0) || !std::isfinite(g); })) {
    throw Error(ErrorKind::ValidationError, "inflow source must be finite and nonnegative");
  }
  const bool has_g = std::any_of(inflow.begin(), inflow.end(), [](double g) { return g > 0.0; });
  if (regime == BoundaryRegime::PurelyReflecting) {
    const bool all_one = reflection_table.empty()
                             ? reflection == 1.0
                             : std::all_of(reflection_table.begin(), reflection_table.end(),
                                           [](double a) { return a == 1.0; });
    if (!all_one || has_g) {
      throw Error(ErrorKind::ValidationError, "purely reflecting species need a = 1 and g = 0");
    }
  } else if (!(a0() < 1.0)) {
    throw Error(ErrorKind::ValidationError, "partially absorbing species need sup a < 1");
  }
}

std::size_t reflect(const PhaseGrid& grid, std::size_t v, int axis) {
  Index3 c = grid.velocity_coords(v);
  c[axis] = grid.velocity_cells() - 1 - c[axis];
  return grid.velocity_index(c[0], c[1], c[2]);
}

Vec3 reflect(const Vec3& v, const Vec3& n) {
  const double vn = dot(v, n);
  return {v[0] - 2.0 * vn * n[0], v[1] - 2.0 * vn * n[1], v[2] - 2.0 * vn * n[2]};
}

VlasovTransport::VlasovTransport(const PhaseGrid& grid, const SpeciesParams& species, BoundarySpec bc)
    : grid_(grid), species_(species), bc_(std::move(bc)), kin_(grid, species.rest_mass), walls_(wall_cells(grid)) {
  species_.validate();
  wall_of_.assign(grid_.space_count() * 6, -1);
  for (std::size_t w = 0; w < walls_.size(); ++w) {
    const WallCell& c = walls_[w];
    wall_of_[c.space * 6 + 2 * c.axis + (c.side > 0 ? 1 : 0)] = static_cast<int>(w);
  }
  const int n = grid_.velocity_cells();
  const double dv = grid_.dv();
  const double m2 = species_.rest_mass * species_.rest_mass;
  auto v0h = [&](int p, int q, int r) {
    const double a = (p - n) * 0.5 * dv, b = (q - n) * 0.5 * dv, c = (r - n) * 0.5 * dv;
    return std::sqrt(m2 + a * a + b * b + c * c);
  };
  const std::size_t nf = static_cast<std::size_t>(n + 1) * n * n;
  cxy_.resize(nf);
  cxz_.resize(nf);
  cyz_.resize(nf);
  cyx_.resize(nf);
  czx_.resize(nf);
  czy_.resize(nf);
  for (int a = 0; a < n + 1; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        // x-face a between cells a-1 and a, with (b, c) the cell indices across.
        const std::size_t xf = (static_cast<std::size_t>(a) * n + b) * n + c;
        cxy_[xf] = (v0h(2 * a, 2 * b + 2, 2 * c + 1) - v0h(2 * a, 2 * b, 2 * c + 1)) / dv;
        cxz_[xf] = (v0h(2 * a, 2 * b + 1, 2 * c + 2) - v0h(2 * a, 2 * b + 1, 2 * c)) / dv;
        // y-face a along y, laid out as [x=b][y=a][z=c].
        const std::size_t yf = (static_cast<std::size_t>(b) * (n + 1) + a) * n + c;
        cyz_[yf] = (v0h(2 * b + 1, 2 * a, 2 * c + 2) - v0h(2 * b + 1, 2 * a, 2 * c)) / dv;
        cyx_[yf] = (v0h(2 * b + 2, 2 * a, 2 * c + 1) - v0h(2 * b, 2 * a, 2 * c + 1)) / dv;
        // z-face a along z, laid out as [x=b][y=c][z=a].
        const std::size_t zf = (static_cast<std::size_t>(b) * n + c) * (n + 1) + a;
        czx_[zf] = (v0h(2 * b + 2, 2 * c + 1, 2 * a) - v0h(2 * b, 2 * c + 1, 2 * a)) / dv;
        czy_[zf] = (v0h(2 * b + 1, 2 * c + 2, 2 * a) - v0h(2 * b + 1, 2 * c, 2 * a)) / dv;
      }
}

double VlasovTransport::stable_dt(const ForceField* force) const {
  double dt = kInf;
  for (int axis = 0; axis < 3; ++axis) {
    if (!grid_.has_walls(axis) && grid_.space_extent(axis) == 1) continue;
    double vmax = 0.0;
    for (const Vec3& vh : kin_.v_hat) vmax = std::max(vmax, std::abs(vh[axis]));
    dt = std::min(dt, grid_.dx(axis) / vmax);
  }
  if (force != nullptr) {
    auto maxabs = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    };
    const double mxy = maxabs(cxy_), mxz = maxabs(cxz_), myz = maxabs(cyz_), myx = maxabs(cyx_),
                 mzx = maxabs(czx_), mzy = maxabs(czy_);
    const double e = std::abs(species_.charge);
    double rate = 0.0;
    for (std::size_t s = 0; s < force->E.size(); ++s) {
      const Vec3& E = force->E[s];
      const Vec3& B = force->B[s];
      const double sx = std::abs(E[0]) + std::abs(B[2]) * mxy + std::abs(B[1]) * mxz;
      const double sy = std::abs(E[1]) + std::abs(B[0]) * myz + std::abs(B[2]) * myx;
      const double sz = std::abs(E[2]) + std::abs(B[1]) * mzx + std::abs(B[0]) * mzy;
      rate = std::max(rate, e * (sx + sy + sz));
    }
    if (rate > 0.0) dt = std::min(dt, grid_.dv() / rate);
  }
  return dt;
}

TransportTally VlasovTransport::step(Distribution& f, const ForceField* force, double dt, double cutoff,
                                     std::vector<double>* wall_net) {
  if (f.values.size() != grid_.size()) throw Error(ErrorKind::ShapeMismatch, "distribution size does not match grid");
  const double dt_max = stable_dt(force);
  if (!(dt > 0.0) || dt > dt_max * (1.0 + 1e-12)) throw CflError("transport_step", dt, dt_max);
  if (cutoff <= 0.0) cutoff = grid_.velocity_radius();
  if (wall_net != nullptr) wall_net->assign(walls_.size(), 0.0);

  TransportTally t;
  const std::size_t nv = grid_.velocity_count();
  if (force != nullptr) {
    double work = 0.0;
    for (std::size_t s = 0; s < grid_.space_count(); ++s) {
      const Vec3& E = force->E[s];
      const double* fs = f.values.data() + s * nv;
      for (std::size_t v = 0; v < nv; ++v) {
        if (!(kin_.speed[v] < cutoff)) continue;
        work += dot(E, kin_.v_hat[v]) * fs[v];
      }
    }
    t.work_R = dt * species_.charge * work * grid_.phase_cell_volume();
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (!grid_.has_walls(axis) && grid_.space_extent(axis) == 1) continue;
    sweep_space(f, axis, dt, cutoff, t, wall_net);
  }
  if (force != nullptr) sweep_velocity(f, *force, dt, t);

  const double lo = f.min();
  if (lo < 0.0) {
    std::ostringstream os;
    os << "transport produced a negative density " << lo;
    throw Error(ErrorKind::NegativeDensity, os.str());
  }
  return t;
}

void VlasovTransport::sweep_space(Distribution& f, int axis, double dt, double cutoff, TransportTally& t,
                                  std::vector<double>* wall_net) {
  const std::size_t nv = grid_.velocity_count();
  const int L = grid_.space_extent(axis);
  const double h = grid_.dx(axis);
  const double lam = dt / h;
  const bool walls = grid_.has_walls(axis);
  const std::size_t stride =
      axis == 0 ? static_cast<std::size_t>(grid_.space_extent(1)) * grid_.space_extent(2)
                : (axis == 1 ? static_cast<std::size_t>(grid_.space_extent(2)) : 1);
  const double dv3 = grid_.dv3();

  // Inflow values a K f_+ + g on incoming velocities of this axis' wall cells.
  std::vector<double> inflow;
  if (walls) {
    inflow.assign(walls_.size() * nv, 0.0);
    const double dA = grid_.cell_volume() / h;
    for (std::size_t w = 0; w < walls_.size(); ++w) {
      const WallCell& wc = walls_[w];
      if (wc.axis != axis) continue;
      const double* fs = f.values.data() + wc.space * nv;
      TransportTally local;
      double net = 0.0;
      for (std::size_t v = 0; v < nv; ++v) {
        const double vn = kin_.v_hat[v][axis] * wc.side;
        if (!(vn > 0.0)) continue;
        const double fp = fs[v];
        const std::size_t kv = reflect(grid_, v, axis);
        const double g = bc_.source(w, nv, kv);
        const double fin = bc_.coefficient(w, nv, kv) * fp + g;
        inflow[w * nv + kv] = fin;
        const double wgt = vn * dv3;
        const double v0 = kin_.v0[v];
        local.out_number += wgt * fp;
        local.out_kin += wgt * v0 * fp;
        if (kin_.speed[v] < cutoff) local.out_kin_R += wgt * v0 * fp;
        local.in_number += wgt * fin;
        local.in_kin += wgt * v0 * fin;
        local.g_number += wgt * g;
        local.g_kin += wgt * v0 * g;
        for (std::size_t i = 0; i < kTraceExponents.size(); ++i) {
          local.out_pow[i] += wgt * std::pow(fp, kTraceExponents[i]);
          local.g_pow[i] += wgt * std::pow(g, kTraceExponents[i]);
        }
        local.out_max = std::max(local.out_max, fp);
        local.g_max = std::max(local.g_max, g);
        net += wgt * (fp - fin);
        f.outflow_trace[w * nv + v] += dt * fp;
        f.inflow_record[w * nv + kv] += dt * fin;
      }
      const double scale = dt * dA;
      t.out_number += scale * local.out_number;
      t.out_kin += scale * local.out_kin;
      t.out_kin_R += scale * local.out_kin_R;
      t.in_number += scale * local.in_number;
      t.in_kin += scale * local.in_kin;
      t.g_number += scale * local.g_number;
      t.g_kin += scale * local.g_kin;
      for (std::size_t i = 0; i < kTraceExponents.size(); ++i) {
        t.out_pow[i] += scale * local.out_pow[i];
        t.g_pow[i] += scale * local.g_pow[i];
      }
      t.out_max = std::max(t.out_max, local.out_max);
      t.g_max = std::max(t.g_max, local.g_max);
      if (wall_net != nullptr) (*wall_net)[w] = net;
    }
  }

  buffer_.resize(f.values.size());
  const double* src = f.values.data();
  double* dst = buffer_.data();
  const auto ns = static_cast<std::ptrdiff_t>(grid_.space_count());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < ns; ++si) {
    const auto s = static_cast<std::size_t>(si);
    const int i = static_cast<int>((s / stride) % static_cast<std::size_t>(L));
    const double* fs = src + s * nv;
    const double* lower = nullptr;
    const double* upper = nullptr;
    if (i > 0) lower = src + (s - stride) * nv;
    else if (walls) lower = inflow.data() + static_cast<std::size_t>(wall_of_[s * 6 + 2 * axis]) * nv;
    else lower = src + (s + (L - 1) * stride) * nv;
    if (i < L - 1) upper = src + (s + stride) * nv;
    else if (walls) upper = inflow.data() + static_cast<std::size_t>(wall_of_[s * 6 + 2 * axis + 1]) * nv;
    else upper = src + (s - (L - 1) * stride) * nv;
    double* out = dst + s * nv;
    for (std::size_t v = 0; v < nv; ++v) {
      const double c = kin_.v_hat[v][axis];
      const double up = c > 0.0 ? lower[v] : upper[v];
      out[v] = fs[v] + lam * std::abs(c) * (up - fs[v]);
    }
  }
  f.values.swap(buffer_);
}

void VlasovTransport::sweep_velocity(Distribution& f, const ForceField& force, double dt, TransportTally& t) {
  const int n = grid_.velocity_cells();
  const std::size_t nv = grid_.velocity_count();
  const std::size_t nf = static_cast<std::size_t>(n + 1) * n * n;
  const double lam = dt / grid_.dv();
  const double e = species_.charge;
  buffer_.resize(f.values.size());
  std::vector<double> leak(grid_.space_count(), 0.0), leak_kin(grid_.space_count(), 0.0);
  const double* src = f.values.data();
  double* dst = buffer_.data();
  const auto ns = static_cast<std::ptrdiff_t>(grid_.space_count());

#pragma omp parallel
  {
    std::vector<double> fx(nf), fy(nf), fz(nf);
#pragma omp for schedule(static)
    for (std::ptrdiff_t si = 0; si < ns; ++si) {
      const auto s = static_cast<std::size_t>(si);
      const Vec3& E = force.E[s];
      const Vec3& B = force.B[s];
      for (std::size_t q = 0; q < nf; ++q) {
        fx[q] = e * (E[0] + B[2] * cxy_[q] - B[1] * cxz_[q]);
        fy[q] = e * (E[1] + B[0] * cyz_[q] - B[2] * cyx_[q]);
        fz[q] = e * (E[2] + B[1] * czx_[q] - B[0] * czy_[q]);
      }
      const double* fs = src + s * nv;
      double* out = dst + s * nv;
      auto cell = [&](int a, int b, int c) -> double {
        if (a < 0 || a >= n || b < 0 || b >= n || c < 0 || c >= n) return 0.0;
        return fs[(static_cast<std::size_t>(a) * n + b) * n + c];
      };
      double lk = 0.0, lkk = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) {
            const std::size_t v = (static_cast<std::size_t>(a) * n + b) * n + c;
            const double f0 = fs[v];
            double acc = 0.0, lo = f0, hi = f0;
            auto inflow = [&](double speed, double fj) {
              acc += speed * (f0 - fj);
              lo = std::min(lo, fj);
              hi = std::max(hi, fj);
            };
            const double sxl = fx[(static_cast<std::size_t>(a) * n + b) * n + c];
            const double sxh = fx[(static_cast<std::size_t>(a + 1) * n + b) * n + c];
            const double syl = fy[(static_cast<std::size_t>(a) * (n + 1) + b) * n + c];
            const double syh = fy[(static_cast<std::size_t>(a) * (n + 1) + b + 1) * n + c];
            const double szl = fz[(static_cast<std::size_t>(a) * n + b) * (n + 1) + c];
            const double szh = fz[(static_cast<std::size_t>(a) * n + b) * (n + 1) + c + 1];
            if (sxl > 0.0) inflow(sxl, cell(a - 1, b, c));
            if (sxh < 0.0) inflow(-sxh, cell(a + 1, b, c));
            if (syl > 0.0) inflow(syl, cell(a, b - 1, c));
            if (syh < 0.0) inflow(-syh, cell(a, b + 1, c));
            if (szl > 0.0) inflow(szl, cell(a, b, c - 1));
            if (szh < 0.0) inflow(-szh, cell(a, b, c + 1));
            out[v] = std::clamp(f0 - lam * acc, lo, hi);

            double edge = 0.0;
            if (a == 0 && sxl < 0.0) edge -= sxl;
            if (a == n - 1 && sxh > 0.0) edge += sxh;
            if (b == 0 && syl < 0.0) edge -= syl;
            if (b == n - 1 && syh > 0.0) edge += syh;
            if (c == 0 && szl < 0.0) edge -= szl;
            if (c == n - 1 && szh > 0.0) edge += szh;
            if (edge > 0.0) {
              lk += edge * f0;
              lkk += edge * f0 * kin_.v0[v];
            }
          }
      leak[s] = lk;
      leak_kin[s] = lkk;
    }
  }
  double lk = 0.0, lkk = 0.0;
  for (std::size_t s = 0; s < leak.size(); ++s) {
    lk += leak[s];
    lkk += leak_kin[s];
  }
  t.leak_number += lam * lk * grid_.phase_cell_volume();
  t.leak_kin += lam * lkk * grid_.phase_cell_volume();
  f.values.swap(buffer_);
}

EstimateResult pnorm_bound_check(const PhaseGrid& grid, const Distribution& f0, const Distribution& fT,
                                 const TransportTally& history, double a0, double p) {
  const double n0 = kinetic_norm(grid, f0, p, false, 1.0);
  const double nT = kinetic_norm(grid, fT, p, false, 1.0);
  double trace = 0.0, g = 0.0;
  if (std::isinf(p)) {
    trace = history.out_max;
    g = history.g_max;
  } else {
    const std::size_t i = exponent_slot(p);
    trace = std::pow(history.out_pow[i], 1.0 / p);
    g = std::pow(history.g_pow[i], 1.0 / p);
  }
  const double ip = std::isinf(p) ? 0.0 : 1.0 / p;
  const double trace_weight = a0 < 1.0 ? std::pow(1.0 - a0, ip) : 0.0;
  double g_term = 0.0;
  if (g > 0.0) g_term = a0 < 1.0 ? std::pow(1.0 - a0, ip - 1.0) * g : kInf;
  const double lhs = std::max(trace_weight * trace, nT);
  const double rhs = n0 + g_term;
  std::ostringstream name;
  name << "pnorm_bound_p" << (std::isinf(p) ? std::string("inf") : std::to_string(p));
  return EstimateResult::make(name.str(), lhs, rhs, rel_tol(rhs));
}

EstimateResult kinetic_energy_inequality_check(const PhaseGrid& grid, const Distribution& f0,
                                               const Distribution& fT, const TransportTally& history,
                                               double a0, double R, double rest_mass, double dt) {
  const Kinematics kin(grid, rest_mass);
  const std::size_t nv = grid.velocity_count();
  double e0 = 0.0, eT = 0.0;
  for (std::size_t s = 0; s < grid.space_count(); ++s)
    for (std::size_t v = 0; v < nv; ++v) {
      e0 += kin.v0[v] * f0.values[s * nv + v];
      if (kin.speed[v] < R) eT += kin.v0[v] * fT.values[s * nv + v];
    }
  e0 *= grid.phase_cell_volume();
  eT *= grid.phase_cell_volume();
  const double lhs = (1.0 - a0) * history.out_kin_R + eT;
  const double rhs = e0 + history.g_kin + history.work_R;
  double h = kInf;
  for (int a = 0; a < 3; ++a)
    if (grid.has_walls(a) || grid.space_extent(a) > 1) h = std::min(h, grid.dx(a));
  if (!std::isfinite(h)) h = 0.0;
  const double resolution = h + grid.dv() + dt;
  const double scale = e0 + history.g_kin + std::abs(history.work_R);
  return EstimateResult::make("kinetic_energy_inequality", lhs, rhs, resolution * scale + rel_tol(scale));
}

EstimateResult current_l43_bound_check(const PhaseGrid& grid, const Distribution& f0,
                                       const Distribution& fT, double g_max, double a0, double R,
                                       double rest_mass) {
  const Kinematics kin(grid, rest_mass);
  const std::size_t nv = grid.velocity_count();
  double l43 = 0.0, energy = 0.0;
  for (std::size_t s = 0; s < grid.space_count(); ++s) {
    double density = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
      if (!(kin.speed[v] < R)) continue;
      const double x = fT.values[s * nv + v];
      density += x;
      energy += kin.v0[v] * x;
    }
    density *= grid.dv3();
    l43 += std::pow(std::abs(density), 4.0 / 3.0);
  }
  const double lhs = std::pow(l43 * grid.cell_volume(), 0.75);
  energy *= grid.phase_cell_volume();
  double g_term = 0.0;
  if (g_max > 0.0) g_term = a0 < 1.0 ? 4.0 * kPi / 3.0 / (1.0 - a0) * g_max : kInf;
  const double prefactor = 4.0 * kPi / 3.0 * kinetic_norm(grid, f0, kInf, false, rest_mass) + g_term + 1.0;
  const double rhs = prefactor * std::pow(energy, 0.75);
  return EstimateResult::make("current_l43_bound", lhs, rhs, rel_tol(rhs));
}

}  // namespace vmsim
