#ifndef VMS_FORMS_HPP
#define VMS_FORMS_HPP

#include <functional>

#include "vms/assembly.hpp"
#include "vms/solvers.hpp"

namespace vms {

/// Source term callable: fills f[0..dim-1] at (x, t). Null means zero.
using SourceField = std::function<void(const double* x, double t, double* f)>;

struct FluidParams {
    double nu = 1.0;
    SourceField source;

    void validate() const {
        if (!(nu > 0)) throw InputError("FluidParams: kinematic viscosity must be > 0");
    }
};

enum class SubscaleModel { dynamic, quasi_static, none };
enum class TauCRule { standard, zero };
enum class TimeScheme { backward_euler, midpoint, steady };

struct StabilizationConfig {
    double c_inv = 36.0;
    SubscaleModel model = SubscaleModel::quasi_static;
    TauCRule tau_c_rule = TauCRule::standard;
    NonlinearSettings newton;

    void validate() const {
        if (!(c_inv > 0)) throw InputError("StabilizationConfig: C_inv must be > 0");
        newton.validate();
    }
};

/// Coefficient vectors of the coarse velocity, coarse pressure and fine
/// pressure fields, in the global layout of a DivConformingSpace.
struct CoarseState {
    Vector coeffs;
    double t = 0.0;

    static CoarseState zero(const DivConformingSpace& space, double t0 = 0.0) {
        CoarseState s;
        s.coeffs = Vector::Zero(space.total_dofs);
        s.t = t0;
        return s;
    }
    auto u_coeffs(const DivConformingSpace& sp, int c) {
        return coeffs.segment(sp.vel_offset[c], sp.velocity[c].total);
    }
    auto p_coeffs(const DivConformingSpace& sp) {
        return coeffs.segment(sp.pressure_offset, sp.pressure.total);
    }
    auto pprime_coeffs(const DivConformingSpace& sp) {
        return coeffs.segment(sp.fine_pressure_offset, sp.fine_pressure.total);
    }
};

/// Fine-scale velocity sampled at the quadrature points (the L^2 surrogate
/// space); one dim-vector per point, zero-initialized.
struct SubscaleState {
    std::vector<double> uprime; // [total_qp][3]

    static SubscaleState zero(const IntegrationLayout& layout) {
        SubscaleState s;
        s.uprime.assign(static_cast<size_t>(layout.total_qp) * 3, 0.0);
        return s;
    }
    double* at(long qp) { return &uprime[static_cast<size_t>(qp) * 3]; }
    const double* at(long qp) const { return &uprime[static_cast<size_t>(qp) * 3]; }
};

// ---------------------------------------------------------------------------
// quadrature-point kernels
// ---------------------------------------------------------------------------

/// tau_M = (u . G u + C_inv^2 nu^2 G:G)^{-1/2}
double tau_m_dynamic(const double* u, double nu, const ElementMetric& G, double c_inv);

/// tau_M = (4/dt^2 + u . G u + C_inv^2 nu^2 G:G)^{-1/2}
double tau_m_quasistatic(const double* u, double nu, const ElementMetric& G, double c_inv,
                         double dt);

/// standard rule: tau_C = (tau_M trace(G))^{-1}; zero rule: 0
double tau_c_value(double tau_m, const ElementMetric& G, TauCRule rule);

/// Field values at one quadrature point. gradu[i][j] = du_i/dx_j and
/// visc = div(2 nu grad^s u) assembled from second derivatives.
struct QpFields {
    double x[3]{};
    double u[3]{};
    double gradu[3][3]{};
    double visc[3]{};
    double p = 0.0;
    double gradp[3]{};
    double gradpp[3]{};
};

/// r_M = du_dt + (grad u) u + grad p - div(2 nu grad^s u) - f
void momentum_residual(const double* du_dt, const QpFields& f, const double* f_val, int dim,
                       double* r_m);

/// u'_n = K_n (u'_{n-1} - dt (grad p' + r_M)) with
/// K_n = ((1 + dt/tau) I + dt grad u)^{-1}; returns K for linearization.
void condensed_subscale_update(const double* uprime_prev, const double gradu[3][3],
                               const double* grad_pprime, const double* r_m, double tau_m,
                               double dt, int dim, double* uprime_new, double K[3][3]);

/// u' = -tau (grad p' + r_M)
void quasi_static_subscale(const double* r_m, const double* grad_pprime, double tau_m, int dim,
                           double* uprime);

// ---------------------------------------------------------------------------
// field evaluation helpers
// ---------------------------------------------------------------------------

void eval_qp_fields(const DivConformingSpace& space, const ElemData& ed, const Vector& x_full,
                    int qp, bool need_second_derivatives, bool need_fine_pressure, QpFields& out);

void eval_velocity_value(const DivConformingSpace& space, const ElemData& ed,
                         const Vector& coeffs, int qp, double* u);

// ---------------------------------------------------------------------------
// convection trilinear forms (diagnostic evaluation on discrete fields)
// ---------------------------------------------------------------------------

enum class ConvectionVariant { standard, cons, skew };

/// c(a,u,v), c_cons(a,u,v) or c_skew(a,u,v) for discrete velocity fields
/// given by global coefficient vectors.
double convection_form(const BasisCache& cache, const Vector& a_coeffs, const Vector& u_coeffs,
                       const Vector& v_coeffs, ConvectionVariant variant);

// ---------------------------------------------------------------------------
// assemblers
// ---------------------------------------------------------------------------

class SystemAssembler {
public:
    virtual ~SystemAssembler() = default;
    virtual void assemble(const Vector& x_full, Vector* R, CsMatrix* J) = 0;
    virtual const SystemMap& map() const = 0;
    virtual const BasisCache& cache() const = 0;
    const std::vector<RowPin>& pins() const { return pins_; }

protected:
    std::vector<RowPin> pins_;
};

/// Newton-facing wrapper: owns the full coefficient vector, the Jacobian
/// storage with its pattern, and applies mean-constraint pins.
class AssembledProblem : public NonlinearSystem {
public:
    AssembledProblem(SystemAssembler& assembler, Vector x0);

    int system_size() const override { return assembler_.map().n_sys; }
    void assemble(Vector* R, CsMatrix* J) override;
    const CsMatrix& jacobian_storage() const override { return J_; }
    CsMatrix& jacobian_storage() override { return J_; }
    void apply_update(const Vector& dx) override;

    const Vector& state() const { return x_; }
    Vector& state() { return x_; }
    void set_state(const Vector& x) { x_ = x; }

private:
    SystemAssembler& assembler_;
    Vector x_;
    CsMatrix J_;
};

struct StepDiagnostics {
    double kinetic_energy = 0.0;   // (1/|O|) int |u|^2/2
    double total_energy = 0.0;     // (1/2)||u + u'||^2, unnormalized
    double eps_resolved = 0.0;     // (1/|O|) int 2 nu grad^s u : grad^s u
    double div_max = 0.0;
    double u_max = 0.0;
    int assumption2_violations = 0;
};

/// Residual and consistent Jacobian of the condensed transient (or steady)
/// system for (u^h, p^h, p'), with the fine-scale velocity eliminated via the
/// chosen subscale closure. tau_M is frozen at the evaluation state inside
/// the Jacobian (and can be frozen globally for finite-difference tests).
class NavierStokesAssembler : public SystemAssembler {
public:
    NavierStokesAssembler(const DivConformingSpace& space, const BasisCache& cache,
                          FluidParams params, StabilizationConfig stab);

    /// Configure one step: old coefficients at t_old, subscale values at the
    /// old step, step size and scheme. For TimeScheme::steady the old state
    /// and dt are ignored (pass dt = 0).
    void set_step(const Vector& old_coeffs, const SubscaleState& uprime_old, double t_old,
                  double dt, TimeScheme scheme);

    void assemble(const Vector& x_full, Vector* R, CsMatrix* J) override;
    const SystemMap& map() const override { return map_; }
    const BasisCache& cache() const override { return *cache_; }

    /// Recompute the subscale state from a converged step (synchronization
    /// phase; for the midpoint scheme this recovers u' at t_n).
    void update_subscales(const Vector& x_full, SubscaleState& out) const;

    StepDiagnostics diagnostics(const Vector& x_full, const SubscaleState& uprime) const;

    /// Freeze tau_M/tau_C at a reference state (Jacobian consistency tests).
    void freeze_tau_at(const Vector& x_ref);
    void unfreeze_tau() { frozen_tau_.clear(); }

    TimeScheme scheme() const { return scheme_; }
    double dt() const { return dt_; }
    double eval_time() const;

private:
    struct QpWork; // per-qp state shared by residual/jacobian paths
    void qp_state(const ElemData& ed, const Vector& x_full, int qp, long qp_global,
                  QpWork& w) const;

    const DivConformingSpace* space_;
    const BasisCache* cache_;
    FluidParams params_;
    StabilizationConfig stab_;
    SystemMap map_;

    Vector old_coeffs_;
    const SubscaleState* uprime_old_ = nullptr;
    double t_old_ = 0.0;
    double dt_ = 0.0;
    TimeScheme scheme_ = TimeScheme::steady;

    std::vector<double> frozen_tau_; // [total_qp][2] = (tau_m, tau_c)
};

/// Steady Oseen system (advection a fixed and solenoidal) with the fine
/// scales eliminated; linear, so Newton converges in one iteration.
class OseenAssembler : public SystemAssembler {
public:
    using AdvectionField = std::function<void(const double* x, double* a)>;

    OseenAssembler(const DivConformingSpace& space, const BasisCache& cache, FluidParams params,
                   StabilizationConfig stab, AdvectionField a);

    void assemble(const Vector& x_full, Vector* R, CsMatrix* J) override;
    const SystemMap& map() const override { return map_; }
    const BasisCache& cache() const override { return *cache_; }

private:
    const DivConformingSpace* space_;
    const BasisCache* cache_;
    FluidParams params_;
    StabilizationConfig stab_;
    SystemMap map_;
    AdvectionField a_;
};

/// Target fields for projections: value required, gradient needed only by
/// the Stokes projector.
struct TargetField {
    std::function<void(const double* x, double* u)> value;
    std::function<void(const double* x, double gradu[3][3])> gradient;
    std::function<double(const double* x)> pressure; // optional target r
};

enum class ProjectionKind {
    stokes,       // grad^s : grad^s + grad-div penalty, divergence constrained
    l2_solenoidal // mass matrix, divergence constrained
};

/// Stokes projector / constrained L^2 projection onto the velocity space
/// (+ coarse-pressure multiplier). `over_full_space` lifts Dirichlet flags
/// (used by the solenoidal lifting of boundary data).
class ProjectionAssembler : public SystemAssembler {
public:
    ProjectionAssembler(const DivConformingSpace& space, const BasisCache& cache,
                        ProjectionKind kind, TargetField target, double nu, double tau_c,
                        bool over_full_space, bool pin_multiplier);

    void assemble(const Vector& x_full, Vector* R, CsMatrix* J) override;
    const SystemMap& map() const override { return map_; }
    const BasisCache& cache() const override { return *cache_; }

private:
    const DivConformingSpace* space_;
    const BasisCache* cache_;
    ProjectionKind kind_;
    TargetField target_;
    double nu_;
    double tau_c_;
    SystemMap map_;
};

/// Divergence-free lifting of Dirichlet data: L^2 projection of the target
/// onto the solenoidal subspace over the full (unconstrained) space. Throws
/// DataError when the boundary data carries net flux.
Vector solenoidal_lifting(const DivConformingSpace& space, const BasisCache& cache,
                          const VelocityField& field);

/// Same projection computed with the iterated penalty method: velocity-only
/// solves with a grad-div penalty and exact pressure updates through the
/// divergence coefficient map (possible because div V^h lies in Q^h).
Vector solenoidal_lifting_iterated_penalty(const DivConformingSpace& space,
                                           const BasisCache& cache, const VelocityField& field,
                                           double rho = 1e6, double tol = 1e-11,
                                           int max_iters = 30);

/// Stokes projector of a target field (e.g. initial conditions); respects the
/// space's strong constraints and pins means on fully periodic boxes.
Vector stokes_projector(const DivConformingSpace& space, const BasisCache& cache,
                        const TargetField& target, double nu, double tau_c);

} // namespace vms

#endif
