#include "vmsim/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "vmsim/error.hpp"

namespace vmsim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::array<double, kNormCount> kNormExponents{1.0, 4.0 / 3.0, 2.0, kInf};

std::size_t last_index(const RunHistory& h, std::size_t upto) {
  if (h.records.empty()) throw Error(ErrorKind::MissingHistory, "run history has no records");
  return std::min(upto, h.records.size() - 1);
}

bool absorbing(const RunHistory& h, std::size_t a) {
  return h.species[a].regime == BoundaryRegime::PartiallyAbsorbing;
}

double rel_tol(double scale) { return 1e-12 * std::max(std::abs(scale), 1e-300); }

double smallest_active_spacing(const PhaseGrid& g) {
  double hmin = kInf;
  for (int a = 0; a < 3; ++a)
    if (g.has_walls(a) || g.space_extent(a) > 1) hmin = std::min(hmin, g.dx(a));
  return std::isfinite(hmin) ? hmin : 0.0;
}

EstimateResult worst(std::string name, const std::vector<EstimateResult>& all) {
  if (all.empty()) return EstimateResult::make(std::move(name), 0.0, 0.0, 0.0);
  EstimateResult w = all.front();
  for (const EstimateResult& r : all) {
    const bool worse = (!r.pass && w.pass) || (r.pass == w.pass && r.slack + r.tol < w.slack + w.tol);
    if (worse) w = r;
  }
  w.name = std::move(name);
  return w;
}

}  // namespace

double quadratic_gronwall_bound(std::span<const double> g, std::span<const double> u, double dt, double t) {
  if (g.empty() || u.size() != g.size()) throw Error(ErrorKind::InvalidArgument, "gronwall samples must be non-empty and equal length");
  std::size_t n = 0;
  if (dt > 0.0) n = static_cast<std::size_t>(std::clamp(std::llround(t / dt), 0LL, static_cast<long long>(g.size() - 1)));
  double integral = 0.0;
  for (std::size_t k = 0; k < n; ++k) integral += 0.5 * dt * (u[k] + u[k + 1]);
  return std::abs(g[n]) + integral;
}

GronwallReport gronwall_property_test(int trials, GronwallSampling sampling, std::uint64_t seed, double tol) {
  if (trials < 1) throw Error(ErrorKind::InvalidArgument, "gronwall_property_test needs trials >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  GronwallReport rep;
  rep.trials = trials;
  rep.worst_excess = -kInf;

  for (int trial = 0; trial < trials; ++trial) {
    const bool degenerate = trial % 100 == 99;
    const int n = degenerate ? 1 : 101 + static_cast<int>(unit(rng) * 400);
    const double a = -1.0 + 2.0 * unit(rng);
    const double b = degenerate ? a : a + 0.1 + 2.9 * unit(rng);
    const double dt = n > 1 ? (b - a) / (n - 1) : 0.0;

    std::array<double, 4> gc{}, gw{}, gp{};
    for (int i = 0; i < 4; ++i) {
      gc[i] = normal(rng);
      gw[i] = 0.5 + 5.5 * unit(rng);
      gp[i] = 2.0 * kPi * unit(rng);
    }
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    auto g_at = [&](double t) {
      const double s = t - a;
      if (sampling == GronwallSampling::Nondecreasing) {
        return sign * (std::abs(gc[0]) + std::abs(gc[1]) * s + std::abs(gc[2]) * s * s + std::abs(gc[3]) * s * s * s);
      }
      return gc[0] + gc[1] * std::sin(gw[1] * s + gp[1]) + gc[2] * std::sin(gw[2] * s + gp[2]) +
             gc[3] * std::sin(gw[3] * s + gp[3]);
    };
    const bool u_zero = unit(rng) < 0.1;
    const double u_scale = 3.0 * unit(rng);
    const double uw = 0.5 + 8.0 * unit(rng), up = 2.0 * kPi * unit(rng), ua = 2.0 * unit(rng);
    auto u_at = [&](double t) { return u_zero ? 0.0 : u_scale * std::exp(ua * std::sin(uw * (t - a) + up)); };
    const bool saturate = unit(rng) < 0.3;
    const double tw = 0.5 + 8.0 * unit(rng), tp = 2.0 * kPi * unit(rng);
    const double fw = 0.5 + 8.0 * unit(rng), fp = 2.0 * kPi * unit(rng);
    auto theta_at = [&](double t) { return saturate ? 1.0 : 0.5 + 0.5 * std::sin(tw * (t - a) + tp); };
    auto phi_at = [&](double t) { return 0.5 + 0.5 * std::sin(fw * (t - a) + fp); };

    std::vector<double> g(static_cast<std::size_t>(n)), u(g.size()), x(g.size()), xbar(g.size());
    for (int k = 0; k < n; ++k) {
      const double t = a + k * dt;
      g[static_cast<std::size_t>(k)] = g_at(t);
      u[static_cast<std::size_t>(k)] = u_at(t);
    }
    // Construction: x_k fills a fraction of the envelope known before its own
    // contribution to the integral, which only adds a nonnegative term.
    double I = 0.0;
    bool hypothesis = true;
    std::vector<double> Y(g.size());
    for (int k = 0; k < n; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double t = a + k * dt;
      double partial = I;
      double ubar = 0.0;
      if (k > 0) {
        ubar = 0.5 * (u[kk - 1] + u[kk]);
        partial += 0.5 * dt * ubar * x[kk - 1];
      }
      const double before = 0.5 * g[kk] * g[kk] + partial;
      x[kk] = theta_at(t) * std::sqrt(std::max(0.0, 2.0 * before));
      I = partial + (k > 0 ? 0.5 * dt * ubar * x[kk] : 0.0);
      Y[kk] = 0.5 * g[kk] * g[kk] + I;
      xbar[kk] = phi_at(t) * std::sqrt(std::max(0.0, 2.0 * Y[kk] - x[kk] * x[kk]));
      const double lhs = 0.5 * xbar[kk] * xbar[kk] + 0.5 * x[kk] * x[kk];
      if (lhs > Y[kk] * (1.0 + 1e-14)) hypothesis = false;
    }
    if (!hypothesis) continue;
    ++rep.hypothesis_held;

    double U = 0.0;
    bool decreasing = false, counted = false;
    for (int k = 0; k < n; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      if (k > 0) {
        U += 0.5 * dt * (u[kk - 1] + u[kk]);
        if (std::abs(g[kk]) < std::abs(g[kk - 1])) decreasing = true;
      }
      const double lhs = std::hypot(xbar[kk], x[kk]);
      const double rhs = std::abs(g[kk]) + U;
      rep.worst_excess = std::max(rep.worst_excess, lhs - rhs);
      if (lhs > rhs + tol && !counted) {
        counted = true;
        ++rep.counterexamples;
        if (!decreasing) ++rep.counterexamples_nondecreasing;
        if (!rep.first) rep.first = GronwallCounterexample{trial, a + k * dt, lhs, rhs, decreasing};
      }
    }
  }
  return rep;
}

void require_no_counterexample(const GronwallReport& report) {
  if (report.counterexamples == 0) return;
  const GronwallCounterexample& c = *report.first;
  throw Error(ErrorKind::CounterexampleFound,
              std::to_string(report.counterexamples) + " of " + std::to_string(report.hypothesis_held) +
                  " trials violate the conclusion; first at trial " + std::to_string(c.trial) + ", t=" +
                  std::to_string(c.t) + ": " + std::to_string(c.lhs) + " > " + std::to_string(c.rhs));
}

double energy_bound_rhs(const RunHistory& h, std::size_t upto) {
  const std::size_t n = last_index(h, upto);
  const DiagnosticsRecord& r0 = h.records.front();
  const DiagnosticsRecord& rT = h.records[n];
  double data = 0.0;
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    data += r0.species[a].ke;
    if (absorbing(h, a)) data += rT.species[a].tally.g_kin;
  }
  data += h.sigma_hi / (8.0 * kPi) * r0.field_norm * r0.field_norm;
  return std::sqrt(std::max(0.0, data)) + std::sqrt(2.0 * kPi / h.sigma_lo) * rT.u_l1l2;
}

EstimateResult energy_estimate_check(const RunHistory& h, std::size_t upto) {
  const std::size_t n = last_index(h, upto);
  const DiagnosticsRecord& rT = h.records[n];
  double boundary = 0.0;
  for (std::size_t a = 0; a < h.species.size(); ++a)
    if (absorbing(h, a)) boundary += (1.0 - h.a0[a]) * rT.species[a].tally.out_kin;
  double sup = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const DiagnosticsRecord& r = h.records[i];
    double e = h.sigma_lo / (8.0 * kPi) * r.field_norm * r.field_norm;
    for (const SpeciesSample& s : r.species) e += s.ke;
    sup = std::max(sup, e);
  }
  const double lhs = std::sqrt(boundary + sup);
  const double rhs = energy_bound_rhs(h, n);
  return EstimateResult::make("energy_estimate", lhs, rhs, 1e-10 * std::max(1.0, rhs));
}

EstimateResult energy_estimate_pointwise_check(const RunHistory& h, std::size_t upto) {
  const std::size_t n = last_index(h, upto);
  double sup = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const DiagnosticsRecord& r = h.records[i];
    double e = h.sigma_lo / (8.0 * kPi) * r.field_norm * r.field_norm;
    for (std::size_t a = 0; a < h.species.size(); ++a) {
      e += r.species[a].ke;
      if (absorbing(h, a)) e += (1.0 - h.a0[a]) * r.species[a].tally.out_kin;
    }
    sup = std::max(sup, e);
  }
  const double rhs = energy_bound_rhs(h, n);
  return EstimateResult::make("energy_estimate_pointwise", std::sqrt(sup), rhs, 1e-10 * std::max(1.0, rhs));
}

EstimateResult field_l2_bound_check(const RunHistory& h, std::size_t upto) {
  const std::size_t n = last_index(h, upto);
  const DiagnosticsRecord& r0 = h.records.front();
  const DiagnosticsRecord& rT = h.records[n];
  const double lhs = rT.field_norm;
  const double rhs = std::sqrt(8.0 * kPi * std::max(0.0, r0.em_energy) / h.sigma_lo) +
                     4.0 * kPi / h.sigma_lo * rT.j_l1l2;
  return EstimateResult::make("field_l2_bound", lhs, rhs, 1e-10 * std::max(1.0, rhs));
}

IdentityResult energy_identity_check(const RunHistory& h, bool trapezoid, std::size_t upto) {
  const std::size_t n = last_index(h, upto);
  const DiagnosticsRecord& r0 = h.records.front();
  const DiagnosticsRecord& rT = h.records[n];
  IdentityResult r;
  r.name = trapezoid ? "energy_identity_trapezoid" : "energy_identity_midpoint";
  r.lhs = rT.em_energy;
  r.rhs = r0.em_energy - (trapezoid ? rT.work_trapezoid : rT.work_midpoint);
  r.residual = std::abs(r.lhs - r.rhs);
  return r;
}

EstimateResult jint_estimate_check(const RunHistory& h, std::size_t upto) {
  const std::size_t n = last_index(h, upto);
  const DiagnosticsRecord& r0 = h.records.front();
  double lhs = 0.0;
  for (std::size_t i = 0; i <= n; ++i) lhs = std::max(lhs, h.records[i].jint_l43);
  double pref = 0.0;
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    double c = 4.0 * kPi / 3.0 * r0.species[a].pnorm[3] + 1.0;
    if (absorbing(h, a) && h.g_max[a] > 0.0) c += 4.0 * kPi / (3.0 * (1.0 - h.a0[a])) * h.g_max[a];
    pref += std::pow(std::abs(h.species[a].charge), 4.0) * std::pow(c, 4.0);
  }
  const double rhs = std::pow(pref, 0.25) * std::pow(energy_bound_rhs(h, n), 1.5);
  return EstimateResult::make("jint_estimate", lhs, rhs, rel_tol(rhs));
}

ChargeBalance charge_balance_check(const RunHistory& h, std::size_t at) {
  const std::size_t n = last_index(h, at);
  const DiagnosticsRecord& r0 = h.records.front();
  const DiagnosticsRecord& r = h.records[n];
  ChargeBalance cb;
  double leak = 0.0, trace_net = 0.0;
  cb.scale = 0.0;
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    const double e = h.species[a].charge;
    const SpeciesSample& s = r.species[a];
    leak += e * s.tally.leak_number;
    trace_net += e * (s.trace_out - s.trace_in);
    cb.scale += std::abs(e) * (r0.species[a].mass + s.tally.out_number + s.tally.in_number);
  }
  cb.bookkeeping.name = "charge_balance_bookkeeping";
  cb.bookkeeping.lhs = r.charge_int;
  cb.bookkeeping.rhs = r0.charge_int - (r.boundary_out - r.boundary_in) - leak;
  cb.bookkeeping.residual = std::abs(cb.bookkeeping.lhs - cb.bookkeeping.rhs);
  cb.trace.name = "charge_balance_trace";
  cb.trace.lhs = r.charge_int;
  cb.trace.rhs = r0.charge_int - trace_net - leak;
  cb.trace.residual = std::abs(cb.trace.lhs - cb.trace.rhs);
  return cb;
}

BoundaryDistributions boundary_distributions(const RunHistory& h) {
  BoundaryDistributions bd;
  for (const DiagnosticsRecord& r : h.records) bd.t.push_back(r.t);
  bd.S = h.S_faces;
  bd.T = h.T_faces;
  if (bd.S.empty() && bd.T.empty()) return bd;
  if (bd.S.size() != h.records.size() || bd.T.size() != h.records.size()) {
    throw Error(ErrorKind::InvalidArgument, "per-face S and T must have one entry per record");
  }
  for (std::size_t i = 1; i < h.records.size(); ++i) {
    if (h.records[i].step != h.records[i - 1].step + 1) continue;
    if (bd.S[i].size() != bd.S[i - 1].size() || bd.T[i].size() != bd.S[i].size()) {
      throw Error(ErrorKind::InvalidArgument, "per-face S and T change length between records");
    }
    for (std::size_t w = 0; w < bd.S[i].size(); ++w) {
      const double res = std::abs(bd.S[i][w] - bd.S[i - 1][w] - h.dt * bd.T[i][w]);
      bd.telescoping_residual = std::max(bd.telescoping_residual, res);
    }
  }
  return bd;
}

GaussResidual gauss_law_check(const RunHistory& h, std::size_t at, bool include_boundary_layer) {
  const DiagnosticsRecord& r = h.records[last_index(h, at)];
  return {include_boundary_layer ? r.gauss_residual : r.gauss_residual_no_layer, r.gauss_interior};
}

void initial_constraint_check(const RunHistory& h, double threshold) {
  const DiagnosticsRecord& r = h.records[last_index(h, 0)];
  if (r.gauss_residual > threshold || r.divB_norm > threshold) {
    throw Error(ErrorKind::InitialConstraintViolation,
                "t=0 residuals exceed " + std::to_string(threshold) + ": gauss=" + std::to_string(r.gauss_residual) +
                    ", divB=" + std::to_string(r.divB_norm));
  }
}

EstimateResult pnorm_history_check(const RunHistory& h, std::size_t slot) {
  if (slot >= kNormCount) throw Error(ErrorKind::InvalidArgument, "pnorm slot out of range");
  const double p = kNormExponents[slot];
  const bool inf = std::isinf(p);
  const double ip = inf ? 0.0 : 1.0 / p;
  std::vector<EstimateResult> all;
  const std::size_t n = last_index(h, SIZE_MAX);
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    const double a0 = h.a0[a];
    const double n0 = h.records.front().species[a].pnorm[slot];
    for (std::size_t i = 0; i <= n; ++i) {
      const SpeciesSample& s = h.records[i].species[a];
      double trace = 0.0, g = 0.0;
      if (inf) {
        trace = s.tally.out_max;
        g = s.tally.g_max;
      } else {
        // slot order of the tally is (1, 4/3, 2)
        trace = std::pow(s.tally.out_pow[slot], ip);
        g = std::pow(s.tally.g_pow[slot], ip);
      }
      const double tw = a0 < 1.0 ? std::pow(1.0 - a0, ip) : 0.0;
      double g_term = 0.0;
      if (g > 0.0) g_term = a0 < 1.0 ? std::pow(1.0 - a0, ip - 1.0) * g : kInf;
      const double lhs = std::max(tw * trace, s.pnorm[slot]);
      const double rhs = n0 + g_term;
      all.push_back(EstimateResult::make("", lhs, rhs, rel_tol(rhs)));
    }
  }
  static const char* names[] = {"pnorm_bound_p1", "pnorm_bound_p4/3", "pnorm_bound_p2", "pnorm_bound_pinf"};
  return worst(names[slot], all);
}

EstimateResult kinetic_history_check(const RunHistory& h) {
  std::vector<EstimateResult> all;
  const std::size_t n = last_index(h, SIZE_MAX);
  const double resolution = smallest_active_spacing(h.grid) + h.grid.dv() + h.dt;
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    const double a0 = std::min(1.0, h.a0[a]);
    const double e0 = h.records.front().species[a].ke;
    for (std::size_t i = 0; i <= n; ++i) {
      const SpeciesSample& s = h.records[i].species[a];
      const double lhs = (1.0 - a0) * s.tally.out_kin_R + s.ke_R;
      const double rhs = e0 + s.tally.g_kin + s.tally.work_R;
      const double scale = e0 + s.tally.g_kin + std::abs(s.tally.work_R);
      all.push_back(EstimateResult::make("", lhs, rhs, resolution * scale + rel_tol(scale)));
    }
  }
  return worst("kinetic_energy_inequality", all);
}

EstimateResult density_history_check(const RunHistory& h) {
  std::vector<EstimateResult> all;
  const std::size_t n = last_index(h, SIZE_MAX);
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    const double a0 = h.a0[a];
    double g_term = 0.0;
    if (h.g_max[a] > 0.0) g_term = a0 < 1.0 ? 4.0 * kPi / 3.0 / (1.0 - a0) * h.g_max[a] : kInf;
    const double pref = 4.0 * kPi / 3.0 * h.records.front().species[a].pnorm[3] + g_term + 1.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const SpeciesSample& s = h.records[i].species[a];
      const double rhs = pref * std::pow(std::max(0.0, s.ke_R), 0.75);
      all.push_back(EstimateResult::make("", s.density_l43_R, rhs, rel_tol(rhs)));
    }
  }
  return worst("density_l43_bound", all);
}

MaxPrinciple max_principle_check(const RunHistory& h) {
  MaxPrinciple mp;
  const std::size_t n = last_index(h, SIZE_MAX);
  for (std::size_t a = 0; a < h.species.size(); ++a) {
    for (std::size_t i = 0; i <= n; ++i) {
      const SpeciesSample& s = h.records[i].species[a];
      mp.min_f = std::min(mp.min_f, s.f_min);
      if (i > 0 && h.g_max[a] == 0.0) {
        const double prev = h.records[i - 1].species[a].f_max;
        mp.max_increase = std::max(mp.max_increase, s.f_max - prev);
        // allow one rounding unit of the convex combinations
        if (s.f_max > prev * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())) mp.pass = false;
      }
    }
  }
  if (mp.min_f < 0.0) mp.pass = false;
  return mp;
}

void annotate_history(RunHistory& h) {
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    DiagnosticsRecord& r = h.records[i];
    const EstimateResult e = energy_estimate_check(h, i);
    r.energy_bound_rhs = e.rhs;
    r.energy_slack = e.slack;
    r.jint_slack = jint_estimate_check(h, i).slack;
  }
}

CheckReport run_all_checks(const RunHistory& h) {
  CheckReport rep;
  rep.estimates.push_back(energy_estimate_check(h));
  rep.estimates.push_back(field_l2_bound_check(h));
  rep.estimates.push_back(jint_estimate_check(h));
  if (!h.species.empty()) {
    for (std::size_t slot = 0; slot < kNormCount; ++slot) rep.estimates.push_back(pnorm_history_check(h, slot));
    rep.estimates.push_back(kinetic_history_check(h));
    rep.estimates.push_back(density_history_check(h));
    const MaxPrinciple mp = max_principle_check(h);
    EstimateResult pos = EstimateResult::make("positivity", -mp.min_f, 0.0, 0.0);
    rep.estimates.push_back(pos);
    EstimateResult mx = EstimateResult::make("max_principle", mp.max_increase, 0.0, 0.0);
    mx.pass = mp.pass;
    rep.estimates.push_back(mx);
  }
  rep.informational.push_back(energy_estimate_pointwise_check(h));
  rep.identities.push_back(energy_identity_check(h, true));
  rep.identities.push_back(energy_identity_check(h, false));
  for (const SpeciesParams& sp : h.species) {
    if (sp.regime != BoundaryRegime::PurelyReflecting) continue;
    rep.notes.push_back("charge_balance: species '" + sp.name +
                        "' is reflecting; its outgoing trace is not known to be summable in the continuum");
  }
  const ChargeBalance cb = charge_balance_check(h);
  rep.identities.push_back(cb.bookkeeping);
  rep.identities.push_back(cb.trace);
  const GaussResidual with = gauss_law_check(h, SIZE_MAX, true);
  const GaussResidual without = gauss_law_check(h, SIZE_MAX, false);
  rep.identities.push_back({"gauss_full_with_layer", with.full, 0.0, with.full});
  rep.identities.push_back({"gauss_full_without_layer", without.full, 0.0, without.full});
  rep.identities.push_back({"gauss_interior", with.interior, 0.0, with.interior});
  const BoundaryDistributions bd = boundary_distributions(h);
  rep.identities.push_back({"boundary_telescoping", bd.telescoping_residual, 0.0, bd.telescoping_residual});
  for (const EstimateResult& e : rep.estimates) rep.pass = rep.pass && e.pass;
  return rep;
}

}  // namespace vmsim
