#ifndef VMS_CASES_HPP
#define VMS_CASES_HPP

#include "vms/config.hpp"

namespace vms {

// ---------------------------------------------------------------------------
// regularized lid-driven cavity (steady)
// ---------------------------------------------------------------------------

/// Exact fields of the regularized cavity: velocity 8 curl(x^2(1-x)^2 (y^4-y^2))
/// on the unit square (unit lid speed), pressure sin(pi x) sin(pi y), source
/// derived from the steady strong form.
struct LdcCase {
    double nu = 0.0;
    ExactVelocity exact_u;
    std::function<double(const double*)> exact_p;
    SourceField source;
    VelocityField boundary_velocity;
};

LdcCase make_ldc_case(double nu);

struct SteadyResult {
    Vector coeffs;
    NewtonReport report;
    double h1_error = 0.0;
    double l2_error = 0.0;
    double div_max = 0.0;
    double u_max = 0.0;
};

SteadyResult solve_ldc(int k_prime, int n, double nu, const StabilizationConfig& stab,
                       const std::string& projector_solver = "direct");

// ---------------------------------------------------------------------------
// 2D Taylor-Green vortex (transient, exact solution)
// ---------------------------------------------------------------------------

/// u = (sin x cos y, -cos x sin y) e^{-2 nu t} on (0, 2pi)^2 periodic,
/// p = 1/4 (cos 2x + cos 2y) e^{-4 nu t}, f = 0.
struct Tgv2dCase {
    double nu = 0.0;
    ExactVelocity exact_at(double t) const;
    std::function<double(const double*)> exact_p_at(double t) const;
};

struct Tgv2dResult {
    TransientResult transient;
    double h1_error_T = 0.0;
    double l2_error_T = 0.0;
};

Tgv2dResult run_tgv2d(int k_prime, int n, double nu, const TimeSettings& time,
                      const StabilizationConfig& stab, const TransientOptions& options);

/// Initial coarse state for the 2D vortex (Stokes projector of the exact
/// field at t = 0).
CoarseState tgv2d_initial_state(const DivConformingSpace& space, const BasisCache& cache,
                                double nu);

// ---------------------------------------------------------------------------
// 3D Taylor-Green vortex (transient LES, symmetric subdomain)
// ---------------------------------------------------------------------------

/// Initial condition (sin x cos y cos z, -cos x sin y cos z, 0) on the
/// symmetric box (0, pi)^3 with no-penetration / free-slip walls.
ExactVelocity tgv3d_initial_condition();

TransientResult run_tgv3d(int k_prime, int n, double nu, const TimeSettings& time,
                          const StabilizationConfig& stab, const TransientOptions& options);

CoarseState tgv3d_initial_state(const DivConformingSpace& space, const BasisCache& cache,
                                double nu);

// ---------------------------------------------------------------------------
// convergence studies shared by the rates driver and the acceptance suite
// ---------------------------------------------------------------------------

struct CaseStudyLevel {
    int n = 0;
    double h = 0.0;
    double error = 0.0; // H1 seminorm of the velocity error
    double rate = 0.0;  // incremental
};

struct CaseStudy {
    std::vector<CaseStudyLevel> levels;
    double fitted_rate = 0.0;
};

CaseStudy ldc_convergence(int k_prime, const std::vector<int>& n_list, double nu,
                          const StabilizationConfig& stab);

CaseStudy tgv2d_convergence(int k_prime, const std::vector<int>& n_list, double nu,
                            const TimeSettings& time, const StabilizationConfig& stab);

// ---------------------------------------------------------------------------
// CLI entries
// ---------------------------------------------------------------------------

int run_case(const CaseConfig& config);
int run_rates(const CaseConfig& config);
int run_check(); // quick invariant suite; 0 on success

} // namespace vms

#endif
