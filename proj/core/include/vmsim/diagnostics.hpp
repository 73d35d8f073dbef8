#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmsim/estimate.hpp"
#include "vmsim/history.hpp"

namespace vmsim {

/// |g(t)| + int_0^t u ds with trapezoid quadrature on samples spaced dt.
double quadratic_gronwall_bound(std::span<const double> g, std::span<const double> u, double dt, double t);

/// How the randomized trials draw g: General lets |g| rise and fall,
/// Nondecreasing restricts to |g| nondecreasing in time.
enum class GronwallSampling { General, Nondecreasing };

struct GronwallCounterexample {
  int trial = 0;
  double t = 0.0;
  double lhs = 0.0;  ///< sqrt(xbar^2 + x^2)
  double rhs = 0.0;  ///< |g(t)| + int u
  bool g_decreasing = false;  ///< |g| decreased somewhere on [a, t]
};

struct GronwallReport {
  int trials = 0;
  int hypothesis_held = 0;
  int counterexamples = 0;
  int counterexamples_nondecreasing = 0;  ///< among trials whose |g| never decreased
  double worst_excess = 0.0;              ///< max of lhs - rhs over all samples
  std::optional<GronwallCounterexample> first;
};

/// Random continuous x, xbar, u >= 0, g on a uniform grid of [a, b],
/// constructed to satisfy (1/2)xbar^2 + (1/2)x^2 <= (1/2)g^2 + int u x at
/// every sample (trapezoid in x with cell-averaged u), then tested against
/// the conclusion with tolerance `tol`.
GronwallReport gronwall_property_test(int trials, GronwallSampling sampling = GronwallSampling::General,
                                      std::uint64_t seed = 20240611, double tol = 1e-8);

/// Throws CounterexampleFound if the report holds a counterexample.
void require_no_counterexample(const GronwallReport& report);

/// Energy-like estimate at record `upto` (default: last).
EstimateResult energy_estimate_check(const RunHistory& h, std::size_t upto = SIZE_MAX);

/// Same right-hand side, but the boundary term and the energy are taken at
/// the same time before the supremum: sup_t sqrt(boundary(t) + energy(t)).
EstimateResult energy_estimate_pointwise_check(const RunHistory& h, std::size_t upto = SIZE_MAX);

/// sqrt(sum_abs (1-a0) int v0 f_+ + sup_t [sum KE + sigma/(8pi) ||(E,H)||^2]) and
/// sqrt(sum KE0 + sum_abs int v0 g + sigma'/(8pi) ||(E0,H0)||^2) + sqrt(2pi) sigma^{-1/2} ||u||_{L1L2}.
double energy_bound_rhs(const RunHistory& h, std::size_t upto);

/// || (E, H)(T) || against sigma^{-1/2} (int eps E0.E0 + mu H0.H0)^{1/2} + 4 pi sigma^{-1} ||j||_{L1L2}.
EstimateResult field_l2_bound_check(const RunHistory& h, std::size_t upto = SIZE_MAX);

/// Field energy at T against the initial field energy minus the work tally.
/// The trapezoid tally samples E.j at integer times; the midpoint tally is
/// the one the leapfrog conserves exactly.
IdentityResult energy_identity_check(const RunHistory& h, bool trapezoid = true, std::size_t upto = SIZE_MAX);

/// sup_t || j_int ||_{L^{4/3}} against the charge-weighted prefactor times the
/// energy bound to the power 3/2.
EstimateResult jint_estimate_check(const RunHistory& h, std::size_t upto = SIZE_MAX);

struct ChargeBalance {
  IdentityResult bookkeeping;  ///< uses the transport tallies (including velocity-box leakage)
  IdentityResult trace;        ///< uses the re-integrated stored traces
  double scale = 0.0;          ///< normalisation for relative residuals
};

/// int rho_int(t) against int rho_int(0) - sum e (int f_+ - int (aKf_+ + g)) - sum e leak.
ChargeBalance charge_balance_check(const RunHistory& h, std::size_t at = SIZE_MAX);

struct BoundaryDistributions {
  std::vector<double> t;
  std::vector<std::vector<double>> S;  ///< per record, per wall cell
  std::vector<std::vector<double>> T;
  double telescoping_residual = 0.0;   ///< max |S_{n+1} - S_n - dt T_{n+1}| over consecutive steps
};

/// A history without per-face data yields empty S and T. Throws InvalidArgument
/// if the per-face arrays do not match the records.
BoundaryDistributions boundary_distributions(const RunHistory& h);

struct GaussResidual {
  double full = 0.0;      ///< whole box, with or without the surface layer as requested
  double interior = 0.0;  ///< cells farther than one cell from the walls
};

GaussResidual gauss_law_check(const RunHistory& h, std::size_t at, bool include_boundary_layer);

/// Throws InitialConstraintViolation if the t = 0 Gauss or div(mu H) residual exceeds `threshold`.
void initial_constraint_check(const RunHistory& h, double threshold = 1e-10);

/// Worst per-species, per-record result of the p-norm estimate. `slot`
/// indexes (1, 4/3, 2, infinity).
EstimateResult pnorm_history_check(const RunHistory& h, std::size_t slot);

/// Worst per-species, per-record result of the cut-off kinetic energy inequality.
EstimateResult kinetic_history_check(const RunHistory& h);

/// Worst per-species, per-record result of the cut-off density L^{4/3} bound.
EstimateResult density_history_check(const RunHistory& h);

struct MaxPrinciple {
  double min_f = 0.0;      ///< smallest value over all records and species
  double max_increase = 0.0;  ///< largest growth of max f between records
  bool pass = true;
};

/// min f >= 0 everywhere; with g = 0 also max f non-increasing.
MaxPrinciple max_principle_check(const RunHistory& h);

/// Fills energy_bound_rhs, energy_slack and jint_slack on every record.
void annotate_history(RunHistory& h);

struct CheckReport {
  std::vector<EstimateResult> estimates;
  std::vector<IdentityResult> identities;
  std::vector<EstimateResult> informational;  ///< reported, never counted in `pass`
  std::vector<std::string> notes;             ///< checks run outside their hypotheses
  bool pass = true;
};

/// Every estimate check over a stored history. Identities are reported only.
CheckReport run_all_checks(const RunHistory& h);

}  // namespace vmsim
