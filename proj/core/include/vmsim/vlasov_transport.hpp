#pragma once

#include <array>
#include <vector>

#include "vmsim/estimate.hpp"
#include "vmsim/phase_space.hpp"

namespace vmsim {

/// Wall behaviour f_- = a K f_+ + g for one species. Tables are indexed
/// [wall cell][velocity] in the order of wall_cells(); only entries with
/// v.n < 0 are read.
struct BoundarySpec {
  double reflection = 0.0;
  std::vector<double> reflection_table;  ///< empty: constant `reflection`
  std::vector<double> inflow;            ///< empty: g = 0

  static BoundarySpec reflecting() { return {1.0, {}, {}}; }
  static BoundarySpec absorbing(double a) { return {a, {}, {}}; }

  double a0() const;
  double coefficient(std::size_t wall, std::size_t nvel, std::size_t v) const {
    return reflection_table.empty() ? reflection : reflection_table[wall * nvel + v];
  }
  double source(std::size_t wall, std::size_t nvel, std::size_t v) const {
    return inflow.empty() ? 0.0 : inflow[wall * nvel + v];
  }
  /// Enforces 0 <= a <= 1, g >= 0 and the regime rules (a0 < 1 for absorbing
  /// species; a = 1, g = 0 for reflecting ones).
  void validate(const PhaseGrid& grid, BoundaryRegime regime) const;
};

/// Specular reflection of a velocity cell at a wall normal to `axis`.
std::size_t reflect(const PhaseGrid& grid, std::size_t v, int axis);
/// v - 2 (v.n) n.
Vec3 reflect(const Vec3& v, const Vec3& n);

/// Cell-centred electric field and magnetic induction on the container cells.
struct ForceField {
  std::vector<Vec3> E;
  std::vector<Vec3> B;
  static ForceField zeros(std::size_t cells) {
    return {std::vector<Vec3>(cells, Vec3{0, 0, 0}), std::vector<Vec3>(cells, Vec3{0, 0, 0})};
  }
};

/// Exponents for which trace power integrals are tallied.
inline constexpr std::array<double, 3> kTraceExponents{1.0, 4.0 / 3.0, 2.0};

/// Boundary and work integrals of one step, or their running sums.
/// Number integrals are with respect to dgamma (|v_hat.n| dv dS dt).
struct TransportTally {
  double out_number = 0.0;   ///< int f_+ dgamma
  double in_number = 0.0;    ///< int (a K f_+ + g) dgamma
  double out_kin = 0.0;      ///< int v0 f_+ dgamma
  double out_kin_R = 0.0;    ///< same restricted to |v| < R
  double in_kin = 0.0;
  double g_number = 0.0;     ///< int g dgamma
  double g_kin = 0.0;        ///< int v0 g dgamma
  std::array<double, 3> out_pow{};  ///< int f_+^p dgamma for kTraceExponents
  std::array<double, 3> g_pow{};
  double out_max = 0.0;
  double g_max = 0.0;
  double work_R = 0.0;       ///< int int int_{|v|<R} e E.v_hat f dv dx dt
  double leak_number = 0.0;  ///< mass lost through the velocity-box edge
  double leak_kin = 0.0;

  void accumulate(const TransportTally& step);
};

/// First-order upwind solver for one species: one x-sweep per active axis
/// followed by an unsplit conservative sweep in velocity space.
class VlasovTransport {
 public:
  VlasovTransport(const PhaseGrid& grid, const SpeciesParams& species, BoundarySpec bc);

  const PhaseGrid& grid() const { return grid_; }
  const SpeciesParams& species() const { return species_; }
  const BoundarySpec& boundary() const { return bc_; }
  const Kinematics& kinematics() const { return kin_; }
  const std::vector<WallCell>& walls() const { return walls_; }

  /// Largest admissible step for the spatial sweeps and, if given, the force.
  double stable_dt(const ForceField* force = nullptr) const;

  /// Advances f by dt. `cutoff` restricts the work and outflow-energy tallies
  /// to |v| < cutoff (0 means the velocity radius). Per-wall-cell net outward
  /// number flux (per unit area and time) is written to `wall_net` if given.
  TransportTally step(Distribution& f, const ForceField* force, double dt, double cutoff = 0.0,
                      std::vector<double>* wall_net = nullptr);

 private:
  void sweep_space(Distribution& f, int axis, double dt, double cutoff, TransportTally& t,
                   std::vector<double>* wall_net);
  void sweep_velocity(Distribution& f, const ForceField& force, double dt, TransportTally& t);

  PhaseGrid grid_;
  SpeciesParams species_;
  BoundarySpec bc_;
  Kinematics kin_;
  std::vector<WallCell> walls_;
  std::vector<int> wall_of_;  ///< [space*6 + 2*axis + (side>0)] -> wall index or -1
  // Velocity-face coefficient tables of the magnetic force in curl form.
  std::vector<double> cxy_, cxz_, cyz_, cyx_, czx_, czy_;
  std::vector<double> buffer_;
};

/// (1-a0)^{1/p} ||f_+||_p and ||f(T)||_p against ||f0||_p + (1-a0)^{1/p-1} ||g||_p.
/// p is one of kTraceExponents or infinity.
EstimateResult pnorm_bound_check(const PhaseGrid& grid, const Distribution& f0, const Distribution& fT,
                                 const TransportTally& history, double a0, double p);

/// (1-a0) int_{|v|<R} v0 f_+ + int int_{|v|<R} v0 f(T) against
/// int int v0 f0 + int v0 g + work over |v|<R. `history` must have been
/// tallied with the same cutoff R.
EstimateResult kinetic_energy_inequality_check(const PhaseGrid& grid, const Distribution& f0,
                                               const Distribution& fT, const TransportTally& history,
                                               double a0, double R, double rest_mass, double dt);

/// || int_{|v|<R} f dv ||_{L^{4/3}} against
/// (4pi/3 ||f0||_inf + 4pi/3 (1-a0)^{-1} ||g||_inf + 1) (int int_{|v|<R} v0 f)^{3/4}.
EstimateResult current_l43_bound_check(const PhaseGrid& grid, const Distribution& f0,
                                       const Distribution& fT, double g_max, double a0, double R,
                                       double rest_mass);

}  // namespace vmsim
