#pragma once

#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "vmsim/history.hpp"
#include "vmsim/materials.hpp"
#include "vmsim/maxwell_fdtd.hpp"
#include "vmsim/phase_space.hpp"
#include "vmsim/vlasov_transport.hpp"

namespace vmsim {

enum class WaveformKind { Constant, Sine, Ramp };

/// Time factor of an external current.
struct Waveform {
  WaveformKind kind = WaveformKind::Constant;
  double amplitude = 1.0;
  double omega = 0.0;      ///< angular frequency for Sine
  double phase = 0.0;
  double ramp_time = 1.0;  ///< rise time for Ramp

  double operator()(double t) const;
  bool operator==(const Waveform&) const = default;
};

/// External current u(t, x) = waveform(t) * profile(x) on a region Gamma,
/// with its charge density advanced by d rho_u / dt = -div u.
struct ExternalCurrent {
  CellBox region;
  StaggeredField profile;
  Waveform waveform;
  std::vector<double> rho_u_init;
  std::vector<double> rho_u;

  bool empty() const;
  StaggeredField at(double t) const;

  static ExternalCurrent none(const FieldGrid& grid);
  /// Stacked rectangular loops circulating around `normal_axis`; the current
  /// is the discrete curl of an indicator and therefore divergence-free.
  static ExternalCurrent loop(const FieldGrid& grid, const CellBox& region, int normal_axis,
                              const Waveform& waveform);
  /// Constant direction on every face of the region's cells. Divergence-free
  /// only along axes the region spans periodically.
  static ExternalCurrent box(const FieldGrid& grid, const CellBox& region, const Vec3& direction,
                             const Waveform& waveform);
};

/// Cell-centred divergence of a field stored on E points.
std::vector<double> face_divergence(const FieldGrid& grid, const StaggeredField& u);

/// rho_u <- rho_u - dt div u(t + dt/2).
void evolve_external_charge(ExternalCurrent& u, const FieldGrid& grid, double t, double dt);

/// Cell-centred forces on the container cells: E averaged from the faces and
/// B = mu H averaged from the edges, with H at integer time (H_prev + H)/2.
ForceField cell_forces(const PhaseGrid& grid, const EmField& fld, const YeeMaterial& mat);

/// Moves container-cell currents to the faces by averaging the two adjacent
/// cells. Faces with a neighbour outside the container carry no current.
StaggeredField face_current(const PhaseGrid& grid, const std::vector<Vec3>& j_cells);

/// j = sum e int_{|v|<R} v_hat f dv + u on the faces.
StaggeredField cutoff_current(const PhaseGrid& grid, std::span<const Distribution> f,
                              std::span<const SpeciesParams> species, double R, const ExternalCurrent& u,
                              double t);

/// Complete description of a run.
struct RunSetup {
  PhaseGrid grid;
  std::vector<SpeciesParams> species;
  std::vector<BoundarySpec> boundaries;
  std::vector<Distribution> f0;
  MaterialField material;
  ExternalCurrent external;
  EmField field0;  ///< E and H at t = 0 (H holds the initial H)
  double dt = 0.0;
  double t_end = 0.0;
  int cadence = 10;
  double cutoff = 0.0;  ///< momentum cut-off R; 0 selects the velocity radius

  long steps() const;
  double effective_cutoff() const { return cutoff > 0.0 ? cutoff : grid.velocity_radius(); }
  void validate() const;
};

/// Called at every recorded time with the current state.
using RecordObserver =
    std::function<void(const DiagnosticsRecord&, std::span<const Distribution>, const EmField&)>;

struct RunResult {
  RunHistory history;
  std::vector<Distribution> f;
  EmField field;
};

/// Leapfrog interleaving of transport and field steps over [0, t_end].
/// The current is the full moment (no cut-off).
RunResult coupled_run(const RunSetup& setup, const RecordObserver& observer = {});

/// Builds the measurements of one recorded time. S and T are per wall cell.
DiagnosticsRecord measure_record(const RunSetup& setup, const YeeMaterial& mat, double t, long step,
                                 std::span<const Distribution> f, const std::vector<TransportTally>& tallies,
                                 const EmField& fld, const std::vector<double>& rho_u,
                                 const std::vector<double>& S_faces, const std::vector<double>& T_faces);

struct SmoothOptions {
  double start_width = 4.0;      ///< initial kernel half-width in cells and steps
  double min_width = 1.0;        ///< width at which the kernel becomes the identity
  int bisection_steps = 30;
};

struct SmoothingCertificate {
  double width = 0.0;      ///< accepted kernel half-width (cells and steps)
  double error = 0.0;      ///< 4 pi || j - jbar ||_{L1 L2}
  double tolerance = 0.0;  ///< 1 / (k + 1)
  bool met = true;
};

/// sum dt || j^n ||_{L2} over a history of face currents.
double current_l1l2(const FieldGrid& grid, const std::vector<StaggeredField>& j, double dt);

/// Space-time mollification of a face-current history with a tensor-product
/// bump, half-width shrunk by bisection until 4 pi ||j - jbar|| < 1/(k+1).
/// Throws ToleranceUnreachable if the finest admissible width fails.
SmoothingCertificate smooth_current(const FieldGrid& grid, const std::vector<StaggeredField>& j, double dt,
                                    int k, std::vector<StaggeredField>& jbar, const SmoothOptions& opt = {});

struct IterationOptions {
  double R = 0.0;           ///< momentum cut-off of the current
  int k_max = 5;
  double threshold = 0.0;   ///< stop when the successive field difference falls below this
  MollifyOptions mollify;
  SmoothOptions smooth;
};

/// One member of the decoupled iteration: the full-window Vlasov solve in the
/// previous fields, then the field solve driven by the smoothed cut-off current.
struct IterationState {
  int k = 0;
  double R = 0.0;
  double window = 0.0;
  long steps = 0;
  std::vector<double> reflection;            ///< a_k per species
  std::vector<ForceField> forces;            ///< force at integer times 0..steps-1
  std::vector<std::vector<Vec3>> e_cells;    ///< cell-centred E on the field box, times 0..steps
  std::vector<std::vector<Vec3>> h_cells;    ///< cell-centred H at the same times
  std::vector<std::vector<Vec3>> j_cells;    ///< cut-off internal current, half steps
  std::vector<std::vector<Vec3>> jbar_cells; ///< smoothed total current at cell centres, half steps
  SmoothingCertificate certificate;
  double material_width = 0.0;
  double material_error = 0.0;
  double field_diff = std::numeric_limits<double>::quiet_NaN();
  double moment_diff = std::numeric_limits<double>::quiet_NaN();
  double mismatch = std::numeric_limits<double>::quiet_NaN();
  RunHistory history;
  std::vector<Distribution> f_final;
  EmField field_final;
};

/// k = 0: the initial fields held constant over the window min(R, t_end).
IterationState initial_iteration_state(const RunSetup& setup, double R);

IterationState iterate_once(const RunSetup& setup, const IterationState& state, const IterationOptions& opt);

/// Runs iterate_once from k = 0 up to k_max or until the field difference
/// drops below the threshold. Histories of intermediate members are dropped.
std::vector<IterationState> iterate(const RunSetup& setup, const IterationOptions& opt);

struct LadderMember {
  double R = 0.0;
  int iterations = 0;
  double kinetic_energy = 0.0;   ///< at the end of the window
  double em_energy = 0.0;
  double moment_l1 = 0.0;        ///< || rho_int ||_{L1} at the end
  double leakage = 0.0;          ///< mass lost through the velocity-box edge
  double field_diff = 0.0;       ///< last successive difference
  std::vector<double> energy_series;  ///< kinetic + field energy at the recorded times
};

struct LadderReport {
  std::vector<LadderMember> members;
  std::vector<double> energy_diff;  ///< |E_{m+1} - E_m| of total energy between consecutive members
  std::vector<double> moment_diff;
};

/// Reruns the iteration for each cut-off R_m and compares consecutive members.
LadderReport run_ladder(const RunSetup& setup, const std::vector<double>& R_list, const IterationOptions& opt);

}  // namespace vmsim
