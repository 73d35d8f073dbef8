#pragma once

#include <array>
#include <vector>

#include "vmsim/phase_space.hpp"
#include "vmsim/vlasov_transport.hpp"

namespace vmsim {

/// Exponents of the stored distribution norms: 1, 4/3, 2, infinity.
inline constexpr std::size_t kNormCount = 4;

/// Per-species measurements at one recorded time.
struct SpeciesSample {
  double mass = 0.0;         ///< int int f
  double ke = 0.0;           ///< int int v0 f
  double ke_R = 0.0;         ///< int int_{|v|<R} v0 f
  double density_l43_R = 0.0;  ///< || int_{|v|<R} f dv ||_{L^{4/3}}
  double f_min = 0.0;
  double f_max = 0.0;
  std::array<double, kNormCount> pnorm{};
  TransportTally tally;         ///< running sums since t = 0
  double trace_out = 0.0;       ///< int f_+ dgamma re-integrated from the stored traces
  double trace_in = 0.0;        ///< int (aKf_+ + g) dgamma from the stored inflow record
};

/// Measurements of a run at one recorded time. Boundary and work
/// quantities are running sums from t = 0.
struct DiagnosticsRecord {
  double t = 0.0;
  long step = 0;
  std::vector<SpeciesSample> species;
  double em_energy = 0.0;        ///< (1/8pi) sum (eps E.E + mu H_prev.H)
  double field_norm = 0.0;       ///< || (E, H) ||_{L2}
  double jint_l43 = 0.0;         ///< || j_int ||_{L^{4/3}(Omega)}
  double charge_int = 0.0;       ///< int rho_int
  double boundary_out = 0.0;     ///< sum_alpha e_alpha int f_+ dgamma
  double boundary_in = 0.0;      ///< sum_alpha e_alpha int (aKf_+ + g) dgamma
  double S_total = 0.0;          ///< int over the walls of S
  double T_total = 0.0;          ///< int over the walls of T (last step)
  double divB_norm = 0.0;
  double gauss_residual = 0.0;           ///< full box, with the surface layer
  double gauss_residual_no_layer = 0.0;  ///< full box, without it
  double gauss_interior = 0.0;           ///< cells farther than one cell from the walls
  double work_midpoint = 0.0;    ///< sum dt (E^n + E^{n+1})/2 . j^{n+1/2}
  double work_trapezoid = 0.0;   ///< sum dt (P^n + P^{n+1})/2, P^n = E^n . j(t_n)
  double j_l1l2 = 0.0;           ///< sum dt || j^{n+1/2} ||_{L2}, total current
  double u_l1l2 = 0.0;           ///< same for the external current only
  double rho_u_total = 0.0;
  // Filled by annotate_history.
  double energy_bound_rhs = 0.0;
  double energy_slack = 0.0;
  double jint_slack = 0.0;
};

/// Everything the estimate checks need about one run.
struct RunHistory {
  PhaseGrid grid;
  std::vector<SpeciesParams> species;
  std::vector<double> a0;     ///< sup of the reflection coefficient per species
  std::vector<double> g_max;  ///< max of the inflow source per species
  double dt = 0.0;
  double cutoff = 0.0;        ///< momentum cut-off R of the recorded R-quantities
  double sigma_lo = 1.0;
  double sigma_hi = 1.0;
  std::vector<DiagnosticsRecord> records;
  std::vector<std::vector<double>> S_faces;  ///< per record, per wall cell: charge per area
  std::vector<std::vector<double>> T_faces;  ///< per record, per wall cell: charge flux per area
};

}  // namespace vmsim
