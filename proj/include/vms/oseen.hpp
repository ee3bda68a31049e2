#ifndef VMS_OSEEN_HPP
#define VMS_OSEEN_HPP

#include "vms/diagnostics.hpp"
#include "vms/forms.hpp"

namespace vms {

/// Steady Oseen benchmark data: constant unit-scale solenoidal advection,
/// manufactured velocity u = curl(x^2 (1-x)^2 y^2 (1-y)^2) and pressure
/// sin(pi x) sin(pi y), source derived from the strong form.
struct OseenCase {
    FluidParams params;
    OseenAssembler::AdvectionField advection;
    double a_magnitude = 1.0;
    ExactVelocity exact_u;
    std::function<void(const double* x, double* v)> exact_visc; // div(2 nu grad^s u)
    std::function<double(const double* x)> exact_p;
    std::function<void(const double* x, double* g)> exact_gradp;
};

OseenCase make_oseen_case(double nu, double a_scale);

/// ||| (v, q) |||^2 = k(v,v) + (a.grad v + grad q, tau_M (a.grad v + grad q))
/// evaluated on discrete fields: v from the velocity segments of x_full and
/// q = p^h + p' from both pressure segments.
double triple_norm(const BasisCache& cache, const Vector& x_full,
                   const OseenAssembler::AdvectionField& a, double nu, double c_inv);

/// Adds the tau-weighted strong viscous term and the tau^{-1}-weighted L2
/// term of the velocity.
double triple_norm_plus(const BasisCache& cache, const Vector& x_full,
                        const OseenAssembler::AdvectionField& a, double nu, double c_inv);

/// A_red((v,q),(v,q)) for the same discrete pair encoding (coercivity checks).
double a_red_quadratic(const BasisCache& cache, const Vector& x_full,
                       const OseenAssembler::AdvectionField& a, double nu,
                       const StabilizationConfig& stab);

struct OseenErrorNorms {
    double triple = 0.0;
    double triple_plus = 0.0;
    double velocity = 0.0; // sqrt(k(e,e)), the velocity part of the norm
    double h1 = 0.0;
};

OseenErrorNorms oseen_error_norms(const BasisCache& cache, const Vector& coeffs,
                                  const OseenCase& oc, double c_inv);

/// Solve the Oseen system on a clamped unit-square space.
Vector solve_oseen(const DivConformingSpace& space, const BasisCache& cache, const OseenCase& oc,
                   const StabilizationConfig& stab);

enum class OseenRegime { advective, diffusive };

struct StudyLevel {
    int n = 0;
    double h = 0.0;
    double err_triple = 0.0;
    double err_triple_plus = 0.0;
    double err_velocity = 0.0;
    double rate_triple = 0.0; // incremental vs previous level
};

struct StudyResult {
    std::vector<StudyLevel> levels;
    double fitted_rate_triple = 0.0;   // least-squares log-log slope
    double fitted_rate_velocity = 0.0;
};

StudyResult run_convergence_study(int k_prime, const std::vector<int>& mesh_sizes,
                                  OseenRegime regime, const StabilizationConfig& stab,
                                  int fine_pressure_refinement = 0);

void write_rate_table(const StudyResult& result, const std::string& path);

/// Least-squares slope of log(err) against log(h).
double fit_rate(const std::vector<std::pair<double, double>>& h_err);

} // namespace vms

#endif
