#ifndef VMS_DIAGNOSTICS_HPP
#define VMS_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "vms/forms.hpp"

namespace vms {

/// Per-step scalar diagnostics. eps_total/eps_model are filled by
/// dissipation_split once the energy history is complete.
struct DiagnosticsRecord {
    double t = 0.0;
    double E_k = 0.0;
    double eps_total = 0.0;
    double eps_resolved = 0.0;
    double eps_model = 0.0;
    double div_max = 0.0;
    int newton_iters = 0;
    bool assumption2_violated = false;
    double E_total = 0.0; // coarse + fine kinetic energy (unnormalized)
    double u_max = 0.0;   // velocity scale of the step (not written to CSV)
};

// point evaluation of discrete fields (arbitrary x, tensor_eval based)
void evaluate_velocity(const DivConformingSpace& space, const Vector& coeffs, const double* x,
                       double* u, double gradu[3][3] = nullptr);
double evaluate_pressure(const DivConformingSpace& space, const Vector& coeffs, const double* x,
                         bool fine = false);

/// TargetField backed by a discrete velocity field (projection targets).
TargetField spline_target(const DivConformingSpace& space, Vector coeffs);

/// Domain-averaged kinetic energy (1/|O|) int |u|^2/2.
double kinetic_energy(const BasisCache& cache, const Vector& coeffs);

/// Domain-averaged viscous dissipation (1/|O|) int 2 nu grad^s u : grad^s u.
double viscous_dissipation(const BasisCache& cache, const Vector& coeffs, double nu);

/// max over quadrature points of |div u^h|.
double div_sup(const BasisCache& cache, const Vector& coeffs);

/// Total dissipation from the kinetic-energy history (3-point finite
/// differences, one-sided at the endpoints) and the model remainder
/// eps_model = eps_total - eps_resolved. Handles non-uniform time grids.
void dissipation_split(std::vector<DiagnosticsRecord>& records);

/// Exact-solution callables for error norms: value and gradient per velocity
/// component; second derivatives are needed only by the plus-norm.
struct ExactVelocity {
    std::function<void(const double* x, double* u)> value;
    std::function<void(const double* x, double gradu[3][3])> gradient;
};

double h1_seminorm_error(const BasisCache& cache, const Vector& coeffs,
                         const ExactVelocity& exact);
double l2_error(const BasisCache& cache, const Vector& coeffs, const ExactVelocity& exact);
double h1_seminorm(const BasisCache& cache, const ExactVelocity& exact); // of the exact field

// CSV output: fixed header, 17 significant digits
void write_csv(const std::vector<DiagnosticsRecord>& records, const std::string& path);
std::vector<DiagnosticsRecord> read_csv(const std::string& path);

/// Sample velocity components (or pressure) on a uniform grid as CSV rows
/// (x[,y[,z]], components...).
void sample_field(const DivConformingSpace& space, const Vector& coeffs, int points_per_dir,
                  bool pressure, const std::string& path);

} // namespace vms

#endif
