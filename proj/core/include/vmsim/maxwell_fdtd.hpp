#pragma once

#include <array>
#include <vector>

#include "vmsim/materials.hpp"
#include "vmsim/phase_space.hpp"

namespace vmsim {

/// Three staggered components, each stored on the full node layout of the
/// field grid. Entries outside a component's valid range stay zero.
using StaggeredField = std::array<std::vector<double>, 3>;

StaggeredField staggered_zeros(const FieldGrid& grid);

/// Valid index range check for E_m (integer along m, half-integer across)
/// and H_m (half-integer along m, integer across).
bool e_point_valid(const FieldGrid& g, int m, int i, int j, int k);
bool h_point_valid(const FieldGrid& g, int m, int i, int j, int k);

/// Quadrature weight of a staggered point: the cell volume, halved once per
/// bounded axis on which the point sits on the outer boundary plane.
double e_point_weight(const FieldGrid& g, int m, int i, int j, int k);
double h_point_weight(const FieldGrid& g, int m, int i, int j, int k);

/// Leapfrog state. E is at `time`; H at time + dt/2 and H_prev at time - dt/2.
struct EmField {
  FieldGrid grid;
  StaggeredField E;
  StaggeredField H;
  StaggeredField H_prev;
  double time = 0.0;

  static EmField zeros(const FieldGrid& grid);
};

/// Diagonal material sampled at the staggered points.
struct YeeMaterial {
  FieldGrid grid;
  StaggeredField eps;        ///< eps_mm at E_m points
  StaggeredField mu;         ///< mu_mm at H_m points
  StaggeredField impedance;  ///< sqrt(mu/eps) at H_m points, used by the outer boundary
  double sigma_lo = 1.0;
  double sigma_hi = 1.0;
  double max_speed = 1.0;    ///< max over cells of 1/sqrt(min eps * min mu)
};

/// Samples a diagonal material onto the Yee points by averaging the adjacent
/// cells. Throws NonDiagonalMaterial for full tensors.
YeeMaterial yee_material(const MaterialField& mat);

/// Largest stable leapfrog step for this grid and material.
double maxwell_stable_dt(const YeeMaterial& mat);

/// Builds H at -dt/2 and +dt/2 from the initial E, H (H holds H at t=0 on entry).
void start_leapfrog(EmField& fld, const YeeMaterial& mat, double dt);

struct MaxwellStepWork {
  double midpoint = 0.0;  ///< dt * sum w (E^n + E^{n+1})/2 . j
};

/// One leapfrog step: E^{n+1} from curl H^{n+1/2} and j^{n+1/2}, then
/// H^{n+3/2} from curl E^{n+1}. Bounded axes use a first-order
/// Silver-Mueller condition on the tangential H at the outer planes.
MaxwellStepWork maxwell_step(EmField& fld, const YeeMaterial& mat, const StaggeredField& j, double dt,
                             double cfl_number = 1.0);

/// Staggered curls. curl_h lands on E points; curl_e lands on H points and
/// uses odd ghost values beyond bounded edges (no impedance term).
StaggeredField curl_h(const FieldGrid& g, const StaggeredField& H);
StaggeredField curl_e(const FieldGrid& g, const StaggeredField& E);

/// div(eps E) per field cell.
std::vector<double> div_eps_e(const YeeMaterial& mat, const StaggeredField& E);
/// div(mu H) on interior vertices (all indices strictly inside on bounded axes).
std::vector<double> div_mu_h(const YeeMaterial& mat, const StaggeredField& H);

/// (1/8pi) sum w (eps E.E + mu H_prev.H): the quadratic form conserved by the leapfrog.
double em_energy(const EmField& fld, const YeeMaterial& mat);
/// sqrt(sum w (E.E + H_prev.H)).
double field_norm(const EmField& fld);
/// Weighted L2 norm of a field on E points.
double e_points_norm(const FieldGrid& g, const StaggeredField& v);
/// Weighted inner product of two fields on E points.
double e_points_dot(const FieldGrid& g, const StaggeredField& a, const StaggeredField& b);

struct DivergenceResiduals {
  double divB_norm = 0.0;
  double gauss_residual_norm = 0.0;
};

/// Discrete L2 norms of div(mu H) and div(eps E) - 4 pi rho, rho given per field cell.
DivergenceResiduals divergence_residuals(const EmField& fld, const YeeMaterial& mat,
                                         const std::vector<double>& rho);

/// Electrostatic field with div(eps E) = 4 pi rho from a conjugate-gradient
/// solve for the cell-centred potential (zero beyond bounded edges).
StaggeredField solve_poisson(const YeeMaterial& mat, const std::vector<double>& rho,
                             double tolerance = 1e-14);

}  // namespace vmsim
