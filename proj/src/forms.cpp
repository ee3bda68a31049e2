#include "vms/forms.hpp"

#include <cmath>
#include <cstring>

namespace vms {

// ---------------------------------------------------------------------------
// quadrature-point kernels
// ---------------------------------------------------------------------------

double tau_m_dynamic(const double* u, double nu, const ElementMetric& G, double c_inv) {
    const double advective = G.u_G_u(u);
    const double diffusive = c_inv * c_inv * nu * nu * G.GG;
    const double sum = advective + diffusive;
    if (!(sum > 0.0))
        throw InputError("tau_m_dynamic: degenerate configuration (u = 0 and nu = 0)");
    return 1.0 / std::sqrt(sum);
}

double tau_m_quasistatic(const double* u, double nu, const ElementMetric& G, double c_inv,
                         double dt) {
    if (!(dt > 0.0)) throw InputError("tau_m_quasistatic: dt must be > 0");
    const double sum = 4.0 / (dt * dt) + G.u_G_u(u) + c_inv * c_inv * nu * nu * G.GG;
    return 1.0 / std::sqrt(sum);
}

double tau_c_value(double tau_m, const ElementMetric& G, TauCRule rule) {
    if (rule == TauCRule::zero) return 0.0;
    if (!(tau_m > 0.0)) throw InputError("tau_c_value: tau_M must be > 0");
    return 1.0 / (tau_m * G.trace);
}

void momentum_residual(const double* du_dt, const QpFields& f, const double* f_val, int dim,
                       double* r_m) {
    for (int i = 0; i < dim; ++i) {
        double conv = 0.0;
        for (int j = 0; j < dim; ++j) conv += f.gradu[i][j] * f.u[j];
        r_m[i] = du_dt[i] + conv + f.gradp[i] - f.visc[i] - f_val[i];
    }
}

namespace {

// determinant-based inverse for 2x2/3x3; returns the determinant
double invert_small(int dim, const double A[3][3], double inv[3][3]) {
    if (dim == 2) {
        const double det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
        inv[0][0] = A[1][1] / det;
        inv[0][1] = -A[0][1] / det;
        inv[1][0] = -A[1][0] / det;
        inv[1][1] = A[0][0] / det;
        return det;
    }
    const double c00 = A[1][1] * A[2][2] - A[1][2] * A[2][1];
    const double c01 = A[1][2] * A[2][0] - A[1][0] * A[2][2];
    const double c02 = A[1][0] * A[2][1] - A[1][1] * A[2][0];
    const double det = A[0][0] * c00 + A[0][1] * c01 + A[0][2] * c02;
    inv[0][0] = c00 / det;
    inv[1][0] = c01 / det;
    inv[2][0] = c02 / det;
    inv[0][1] = (A[0][2] * A[2][1] - A[0][1] * A[2][2]) / det;
    inv[1][1] = (A[0][0] * A[2][2] - A[0][2] * A[2][0]) / det;
    inv[2][1] = (A[0][1] * A[2][0] - A[0][0] * A[2][1]) / det;
    inv[0][2] = (A[0][1] * A[1][2] - A[0][2] * A[1][1]) / det;
    inv[1][2] = (A[0][2] * A[1][0] - A[0][0] * A[1][2]) / det;
    inv[2][2] = (A[0][0] * A[1][1] - A[0][1] * A[1][0]) / det;
    return det;
}

double frobenius(int dim, const double A[3][3]) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) s += A[i][j] * A[i][j];
    return std::sqrt(s);
}

} // namespace

void condensed_subscale_update(const double* uprime_prev, const double gradu[3][3],
                               const double* grad_pprime, const double* r_m, double tau_m,
                               double dt, int dim, double* uprime_new, double K[3][3]) {
    double A[3][3] = {};
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) A[i][j] = dt * gradu[i][j];
        A[i][i] += 1.0 + dt / tau_m;
    }
    invert_small(dim, A, K);
    if (frobenius(dim, A) * frobenius(dim, K) > 1e12)
        throw NumericalError("condensed_subscale_update: subscale matrix is "
                             "ill-conditioned (condition estimate > 1e12)");
    for (int i = 0; i < dim; ++i) {
        double s = 0.0;
        for (int j = 0; j < dim; ++j)
            s += K[i][j] * (uprime_prev[j] - dt * (grad_pprime[j] + r_m[j]));
        uprime_new[i] = s;
    }
}

void quasi_static_subscale(const double* r_m, const double* grad_pprime, double tau_m, int dim,
                           double* uprime) {
    if (!(tau_m > 0.0)) throw InputError("quasi_static_subscale: tau_M must be > 0");
    for (int i = 0; i < dim; ++i) uprime[i] = -tau_m * (grad_pprime[i] + r_m[i]);
}

// ---------------------------------------------------------------------------
// field evaluation
// ---------------------------------------------------------------------------

void eval_qp_fields(const DivConformingSpace& space, const ElemData& ed, const Vector& x_full,
                    int qp, bool need_second_derivatives, bool need_fine_pressure,
                    QpFields& out) {
    (void)space;
    const int dim = ed.dim;
    out = QpFields{};
    for (int d = 0; d < 3; ++d) out.x[d] = ed.qp_x[qp * 3 + d];

    // hess index map: (i,j) -> packed 6 (xx, yy, zz, xy, xz, yz)
    static constexpr int hidx[3][3] = {{0, 3, 4}, {3, 1, 5}, {4, 5, 2}};

    double hess_sum[3][6] = {}; // per velocity component, packed second derivatives
    for (int c = 0; c < dim; ++c) {
        const int nl = ed.n_loc[c];
        const double* val = &ed.value[c][static_cast<size_t>(qp) * nl];
        const double* grd = &ed.grad[c][static_cast<size_t>(qp) * nl * 3];
        const double* hes =
            need_second_derivatives ? &ed.hess[c][static_cast<size_t>(qp) * nl * 6] : nullptr;
        for (int j = 0; j < nl; ++j) {
            const double cj = x_full[ed.dofs[c][j]];
            out.u[c] += cj * val[j];
            for (int d = 0; d < dim; ++d) out.gradu[c][d] += cj * grd[j * 3 + d];
            if (hes)
                for (int k = 0; k < 6; ++k) hess_sum[c][k] += cj * hes[j * 6 + k];
        }
    }
    if (need_second_derivatives) {
        const double nu_dummy = 1.0; // visc filled with nu = 1; scaled by caller
        for (int i = 0; i < dim; ++i) {
            double lap = 0.0;
            for (int j = 0; j < dim; ++j) lap += hess_sum[i][hidx[j][j]];
            double cross = 0.0;
            for (int j = 0; j < dim; ++j) cross += hess_sum[j][hidx[i][j]];
            out.visc[i] = nu_dummy * (lap + cross);
        }
    }

    {
        const int f = dim;
        const int nl = ed.n_loc[f];
        const double* val = &ed.value[f][static_cast<size_t>(qp) * nl];
        const double* grd = &ed.grad[f][static_cast<size_t>(qp) * nl * 3];
        for (int j = 0; j < nl; ++j) {
            const double cj = x_full[ed.dofs[f][j]];
            out.p += cj * val[j];
            for (int d = 0; d < dim; ++d) out.gradp[d] += cj * grd[j * 3 + d];
        }
    }
    if (need_fine_pressure) {
        const int f = dim + 1;
        const int nl = ed.n_loc[f];
        const double* grd = &ed.grad[f][static_cast<size_t>(qp) * nl * 3];
        for (int j = 0; j < nl; ++j) {
            const double cj = x_full[ed.dofs[f][j]];
            for (int d = 0; d < dim; ++d) out.gradpp[d] += cj * grd[j * 3 + d];
        }
    }
}

void eval_velocity_value(const DivConformingSpace& space, const ElemData& ed,
                         const Vector& coeffs, int qp, double* u) {
    (void)space;
    const int dim = ed.dim;
    for (int c = 0; c < dim; ++c) {
        const int nl = ed.n_loc[c];
        const double* val = &ed.value[c][static_cast<size_t>(qp) * nl];
        double s = 0.0;
        for (int j = 0; j < nl; ++j) s += coeffs[ed.dofs[c][j]] * val[j];
        u[c] = s;
    }
}

// ---------------------------------------------------------------------------
// convection forms
// ---------------------------------------------------------------------------

double convection_form(const BasisCache& cache, const Vector& a_coeffs, const Vector& u_coeffs,
                       const Vector& v_coeffs, ConvectionVariant variant) {
    const DivConformingSpace& sp = cache.space();
    const int dim = sp.mesh.dim;
    ElemData ed;
    double c_standard = 0.0;
    double c_cons = 0.0;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            QpFields fa, fu, fv;
            eval_qp_fields(sp, ed, a_coeffs, qp, false, false, fa);
            eval_qp_fields(sp, ed, u_coeffs, qp, false, false, fu);
            eval_qp_fields(sp, ed, v_coeffs, qp, false, false, fv);
            const double w = ed.qp_weight[qp];
            double std_term = 0.0, cons_term = 0.0;
            for (int i = 0; i < dim; ++i) {
                double adv_u = 0.0, adv_v = 0.0;
                for (int j = 0; j < dim; ++j) {
                    adv_u += fa.u[j] * fu.gradu[i][j];
                    adv_v += fa.u[j] * fv.gradu[i][j];
                }
                std_term += adv_u * fv.u[i];
                cons_term -= fu.u[i] * adv_v;
            }
            c_standard += w * std_term;
            c_cons += w * cons_term;
        }
    }
    switch (variant) {
        case ConvectionVariant::standard: return c_standard;
        case ConvectionVariant::cons: return c_cons;
        case ConvectionVariant::skew: return 0.5 * (c_standard + c_cons);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// AssembledProblem
// ---------------------------------------------------------------------------

AssembledProblem::AssembledProblem(SystemAssembler& assembler, Vector x0)
    : assembler_(assembler), x_(std::move(x0)) {
    std::vector<int> dense_rows;
    for (const RowPin& p : assembler_.pins()) dense_rows.push_back(p.sys_row);
    const auto trips = build_pattern(assembler_.cache(), assembler_.map(), dense_rows);
    J_.set_pattern(assembler_.map().n_sys, trips);
}

void AssembledProblem::assemble(Vector* R, CsMatrix* J) {
    assembler_.assemble(x_, R, J);
    const DivConformingSpace& sp = assembler_.cache().space();
    if (R) apply_pins_residual(assembler_.pins(), x_, sp, *R);
    if (J) apply_pins_jacobian(assembler_.pins(), *J);
}

void AssembledProblem::apply_update(const Vector& dx) {
    const SystemMap& m = assembler_.map();
    for (int s = 0; s < m.n_sys; ++s) x_[m.sys_to_dof[s]] += dx[s];
}

// ---------------------------------------------------------------------------
// NavierStokesAssembler
// ---------------------------------------------------------------------------

namespace {
std::vector<int> ns_fields(const DivConformingSpace& sp, SubscaleModel model) {
    std::vector<int> f;
    for (int c = 0; c < sp.mesh.dim; ++c) f.push_back(c);
    f.push_back(sp.mesh.dim);
    if (model != SubscaleModel::none) f.push_back(sp.mesh.dim + 1);
    return f;
}
} // namespace

NavierStokesAssembler::NavierStokesAssembler(const DivConformingSpace& space,
                                             const BasisCache& cache, FluidParams params,
                                             StabilizationConfig stab)
    : space_(&space), cache_(&cache), params_(std::move(params)), stab_(stab) {
    params_.validate();
    stab_.validate();
    map_ = SystemMap::build(space, ns_fields(space, stab.model));
    // strong full-Dirichlet constraints leave some pressure coefficients
    // outside the range of the divergence; pin them to zero
    std::vector<int> taken;
    for (int dof : uncontrolled_pressure_dofs(space)) {
        pins_.push_back(make_value_pin(space, map_, space.mesh.dim, dof, 0.0));
        taken.push_back(pins_.back().sys_row);
    }
    pins_.push_back(make_mean_pin(space, map_, space.mesh.dim, 0.0, taken));
    if (stab.model != SubscaleModel::none)
        pins_.push_back(make_mean_pin(space, map_, space.mesh.dim + 1, 0.0, taken));
}

void NavierStokesAssembler::set_step(const Vector& old_coeffs, const SubscaleState& uprime_old,
                                     double t_old, double dt, TimeScheme scheme) {
    if (scheme != TimeScheme::steady && !(dt > 0.0))
        throw InputError("NavierStokesAssembler: dt must be > 0 for transient schemes");
    if (scheme == TimeScheme::steady && stab_.model == SubscaleModel::dynamic)
        throw InputError("NavierStokesAssembler: dynamic subscales need a transient scheme");
    old_coeffs_ = old_coeffs;
    uprime_old_ = &uprime_old;
    t_old_ = t_old;
    dt_ = dt;
    scheme_ = scheme;
}

double NavierStokesAssembler::eval_time() const {
    switch (scheme_) {
        case TimeScheme::backward_euler: return t_old_ + dt_;
        case TimeScheme::midpoint: return t_old_ + 0.5 * dt_;
        case TimeScheme::steady: return t_old_;
    }
    return t_old_;
}

struct NavierStokesAssembler::QpWork {
    QpFields f;
    double u_old[3];
    double w[3];
    double f_val[3];
    double u_t[3];
    double rM[3];
    double s[3];
    double tau_m = 0.0, tau_c = 0.0;
    double uprime[3];
    double K[3][3];
    double dt_eff = 0.0;
    double ct = 0.0;
    double ct_dt = 0.0; // ct / dt, zero for steady problems
    double Mv[3];
    double C[3][3];
    double D = 0.0;
    double divu = 0.0;
};

void NavierStokesAssembler::qp_state(const ElemData& ed, const Vector& x_full, int qp,
                                     long qp_global, QpWork& w) const {
    const int dim = ed.dim;
    const bool fine = stab_.model != SubscaleModel::none;
    eval_qp_fields(*space_, ed, x_full, qp, true, fine, w.f);
    for (int i = 0; i < dim; ++i) w.f.visc[i] *= params_.nu;

    w.ct = scheme_ == TimeScheme::backward_euler ? 1.0
           : scheme_ == TimeScheme::midpoint     ? 2.0
                                                 : 0.0;
    w.dt_eff = scheme_ == TimeScheme::midpoint ? 0.5 * dt_ : dt_;
    w.ct_dt = scheme_ == TimeScheme::steady ? 0.0 : w.ct / dt_;

    if (scheme_ != TimeScheme::steady) {
        eval_velocity_value(*space_, ed, old_coeffs_, qp, w.u_old);
        for (int i = 0; i < dim; ++i) w.u_t[i] = w.ct_dt * (w.f.u[i] - w.u_old[i]);
        const double* wold = uprime_old_->at(qp_global);
        for (int i = 0; i < dim; ++i) w.w[i] = wold[i];
    } else {
        for (int i = 0; i < dim; ++i) {
            w.u_t[i] = 0.0;
            w.u_old[i] = 0.0;
            w.w[i] = 0.0;
        }
    }

    if (params_.source) params_.source(w.f.x, eval_time(), w.f_val);
    else std::memset(w.f_val, 0, sizeof(w.f_val));

    momentum_residual(w.u_t, w.f, w.f_val, dim, w.rM);
    for (int i = 0; i < dim; ++i) w.s[i] = w.f.gradpp[i] + w.rM[i];

    const ElementMetric G = metric(space_->mesh, 0);
    if (stab_.model != SubscaleModel::none) {
        if (!frozen_tau_.empty()) {
            w.tau_m = frozen_tau_[2 * qp_global];
            w.tau_c = frozen_tau_[2 * qp_global + 1];
        } else {
            if (scheme_ == TimeScheme::steady || stab_.model == SubscaleModel::dynamic)
                w.tau_m = tau_m_dynamic(w.f.u, params_.nu, G, stab_.c_inv);
            else
                w.tau_m = tau_m_quasistatic(w.f.u, params_.nu, G, stab_.c_inv, dt_);
            w.tau_c = tau_c_value(w.tau_m, G, stab_.tau_c_rule);
        }
        if (stab_.model == SubscaleModel::dynamic) {
            condensed_subscale_update(w.w, w.f.gradu, w.f.gradpp, w.rM, w.tau_m, w.dt_eff, dim,
                                      w.uprime, w.K);
        } else {
            quasi_static_subscale(w.rM, w.f.gradpp, w.tau_m, dim, w.uprime);
        }
    } else {
        w.tau_m = 0.0;
        w.tau_c = 0.0;
        std::memset(w.uprime, 0, sizeof(w.uprime));
    }

    // coarse momentum flux decomposition:
    //   R_a = phi_a * Mv[c] + grad(phi_a) : C[c][:] + d_c(phi_a) * D
    w.divu = 0.0;
    for (int i = 0; i < dim; ++i) w.divu += w.f.gradu[i][i];
    for (int i = 0; i < dim; ++i) {
        double conv_u = 0.0, conv_up = 0.0;
        for (int j = 0; j < dim; ++j) {
            conv_u += w.f.gradu[i][j] * w.f.u[j];
            conv_up += w.f.gradu[i][j] * w.uprime[j];
        }
        w.Mv[i] = w.u_t[i] + 0.5 * conv_u + 0.5 * conv_up - w.f_val[i];
        if (stab_.model == SubscaleModel::dynamic)
            w.Mv[i] += w.ct_dt * (w.uprime[i] - w.w[i]);
        for (int j = 0; j < dim; ++j) {
            const double sym = params_.nu * (w.f.gradu[i][j] + w.f.gradu[j][i]);
            w.C[i][j] = sym - 0.5 * w.f.u[i] * w.f.u[j] - 0.5 * w.f.u[i] * w.uprime[j] -
                        w.uprime[i] * w.f.u[j] - w.uprime[i] * w.uprime[j];
        }
    }
    w.D = -w.f.p + w.tau_c * w.divu;
}

void NavierStokesAssembler::assemble(const Vector& x_full, Vector* R, CsMatrix* J) {
    if (scheme_ != TimeScheme::steady && uprime_old_ == nullptr)
        throw InputError("NavierStokesAssembler: set_step before assemble");
    if (scheme_ == TimeScheme::steady && stab_.model == SubscaleModel::dynamic)
        throw InputError("NavierStokesAssembler: dynamic subscales need a transient scheme");
    const int dim = space_->mesh.dim;
    const bool fine = stab_.model != SubscaleModel::none;
    const int n_fields = fine ? dim + 2 : dim + 1;
    const bool dyn = stab_.model == SubscaleModel::dynamic;

    if (R) R->setZero(map_.n_sys);
    if (J) J->zero();

    ElemData ed;
    QpWork w;
    std::vector<double> Rloc, Jloc;
    std::vector<double> dMv, dC, dD, ddiv, dup; // per trial: deltas
    static constexpr int hidx[3][3] = {{0, 3, 4}, {3, 1, 5}, {4, 5, 2}};

    for (long e = 0; e < cache_->layout().n_elements; ++e) {
        cache_->fill(e, ed);
        int n_loc_tot = 0;
        for (int f = 0; f < n_fields; ++f) n_loc_tot += ed.n_loc[f];

        Rloc.assign(n_loc_tot, 0.0);
        if (J) {
            Jloc.assign(static_cast<size_t>(n_loc_tot) * n_loc_tot, 0.0);
            dMv.resize(static_cast<size_t>(n_loc_tot) * 3);
            dC.resize(static_cast<size_t>(n_loc_tot) * 9);
            dD.resize(n_loc_tot);
            ddiv.resize(n_loc_tot);
            dup.resize(static_cast<size_t>(n_loc_tot) * 3);
        }

        for (int qp = 0; qp < ed.nqp; ++qp) {
            const long qpg = e * ed.nqp + qp;
            qp_state(ed, x_full, qp, qpg, w);
            const double wt = ed.qp_weight[qp];

            if (R) {
                for (int cf = 0; cf < dim; ++cf) {
                    const int nl = ed.n_loc[cf];
                    const double* val = &ed.value[cf][static_cast<size_t>(qp) * nl];
                    const double* grd = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                    double* out = &Rloc[ed.loc_offset[cf]];
                    for (int i = 0; i < nl; ++i) {
                        double r = val[i] * w.Mv[cf] + grd[i * 3 + cf] * w.D;
                        for (int j = 0; j < dim; ++j) r += grd[i * 3 + j] * w.C[cf][j];
                        out[i] += wt * r;
                    }
                }
                {
                    const int f = dim;
                    const int nl = ed.n_loc[f];
                    const double* val = &ed.value[f][static_cast<size_t>(qp) * nl];
                    double* out = &Rloc[ed.loc_offset[f]];
                    for (int i = 0; i < nl; ++i) out[i] += wt * val[i] * w.divu;
                }
                if (fine) {
                    const int f = dim + 1;
                    const int nl = ed.n_loc[f];
                    const double* grd = &ed.grad[f][static_cast<size_t>(qp) * nl * 3];
                    double* out = &Rloc[ed.loc_offset[f]];
                    for (int i = 0; i < nl; ++i) {
                        double r = 0.0;
                        for (int d = 0; d < dim; ++d) r -= grd[i * 3 + d] * w.uprime[d];
                        out[i] += wt * r;
                    }
                }
            }

            if (!J) continue;

            // --- per-trial linearizations ---
            for (int tf = 0; tf < n_fields; ++tf) {
                const int nl = ed.n_loc[tf];
                const double* val = &ed.value[tf][static_cast<size_t>(qp) * nl];
                const double* grd = &ed.grad[tf][static_cast<size_t>(qp) * nl * 3];
                const double* hes =
                    tf < dim ? &ed.hess[tf][static_cast<size_t>(qp) * nl * 6] : nullptr;

                for (int b = 0; b < nl; ++b) {
                    const int bi = ed.loc_offset[tf] + b;
                    double* dMv_b = &dMv[static_cast<size_t>(bi) * 3];
                    double* dC_b = &dC[static_cast<size_t>(bi) * 9];
                    double* dup_b = &dup[static_cast<size_t>(bi) * 3];
                    double drM[3] = {0, 0, 0};
                    double dDb = 0.0, ddivb = 0.0;
                    std::memset(dMv_b, 0, 3 * sizeof(double));
                    std::memset(dC_b, 0, 9 * sizeof(double));
                    std::memset(dup_b, 0, 3 * sizeof(double));

                    if (tf < dim) {
                        const int ec = tf;
                        const double phi = val[b];
                        const double* g = &grd[b * 3];
                        const double* H = &hes[b * 6];
                        double lap = 0.0;
                        for (int d = 0; d < dim; ++d) lap += H[hidx[d][d]];
                        double ug = 0.0, gup = 0.0, guu = 0.0;
                        for (int d = 0; d < dim; ++d) {
                            ug += w.f.u[d] * g[d];
                            gup += g[d] * w.uprime[d];
                            guu += g[d] * w.f.u[d];
                        }
                        // delta r_M
                        for (int i = 0; i < dim; ++i) {
                            double hv = params_.nu * ((i == ec ? lap : 0.0) + H[hidx[i][ec]]);
                            drM[i] = phi * w.f.gradu[i][ec] - hv;
                        }
                        drM[ec] += w.ct_dt * phi + ug;
                        // delta u'
                        if (fine) {
                            if (dyn) {
                                double rhs[3];
                                for (int i = 0; i < dim; ++i)
                                    rhs[i] = (i == ec ? gup : 0.0) + drM[i];
                                for (int i = 0; i < dim; ++i) {
                                    double s2 = 0.0;
                                    for (int j = 0; j < dim; ++j) s2 += w.K[i][j] * rhs[j];
                                    dup_b[i] = -w.dt_eff * s2;
                                }
                            } else {
                                for (int i = 0; i < dim; ++i) dup_b[i] = -w.tau_m * drM[i];
                            }
                        }
                        // delta Mv
                        for (int i = 0; i < dim; ++i) {
                            double gu_dup = 0.0;
                            for (int j = 0; j < dim; ++j) gu_dup += w.f.gradu[i][j] * dup_b[j];
                            dMv_b[i] = 0.5 * phi * w.f.gradu[i][ec] + 0.5 * gu_dup;
                        }
                        dMv_b[ec] += w.ct_dt * phi + 0.5 * guu + 0.5 * gup;
                        if (dyn)
                            for (int i = 0; i < dim; ++i) dMv_b[i] += w.ct_dt * dup_b[i];
                        // delta C
                        for (int i = 0; i < dim; ++i) {
                            for (int j = 0; j < dim; ++j) {
                                double v = params_.nu * ((i == ec ? g[j] : 0.0) +
                                                         (j == ec ? g[i] : 0.0));
                                v -= 0.5 * phi *
                                     ((i == ec ? w.f.u[j] : 0.0) + (j == ec ? w.f.u[i] : 0.0));
                                v -= 0.5 * ((i == ec ? phi * w.uprime[j] : 0.0) +
                                            w.f.u[i] * dup_b[j]);
                                v -= dup_b[i] * w.f.u[j] + (j == ec ? w.uprime[i] * phi : 0.0);
                                v -= dup_b[i] * w.uprime[j] + w.uprime[i] * dup_b[j];
                                dC_b[i * 3 + j] = v;
                            }
                        }
                        dDb = w.tau_c * g[ec];
                        ddivb = g[ec];
                    } else {
                        // pressure-type trials enter through grad only
                        const bool is_fine = (tf == dim + 1);
                        const double* g = &grd[b * 3];
                        for (int i = 0; i < dim; ++i) drM[i] = is_fine ? 0.0 : g[i];
                        double ds[3];
                        for (int i = 0; i < dim; ++i) ds[i] = g[i];
                        if (fine) {
                            if (dyn) {
                                for (int i = 0; i < dim; ++i) {
                                    double s2 = 0.0;
                                    for (int j = 0; j < dim; ++j) s2 += w.K[i][j] * ds[j];
                                    dup_b[i] = -w.dt_eff * s2;
                                }
                            } else {
                                for (int i = 0; i < dim; ++i) dup_b[i] = -w.tau_m * ds[i];
                            }
                        }
                        for (int i = 0; i < dim; ++i) {
                            double gu_dup = 0.0;
                            for (int j = 0; j < dim; ++j) gu_dup += w.f.gradu[i][j] * dup_b[j];
                            dMv_b[i] = 0.5 * gu_dup + (dyn ? w.ct_dt * dup_b[i] : 0.0);
                        }
                        for (int i = 0; i < dim; ++i)
                            for (int j = 0; j < dim; ++j)
                                dC_b[i * 3 + j] = -0.5 * w.f.u[i] * dup_b[j] -
                                                  dup_b[i] * w.f.u[j] - dup_b[i] * w.uprime[j] -
                                                  w.uprime[i] * dup_b[j];
                        dDb = is_fine ? 0.0 : -val[b];
                        ddivb = 0.0;
                    }
                    dD[bi] = dDb;
                    ddiv[bi] = ddivb;
                }
            }

            // --- test-side contraction into the local matrix ---
            for (int cf = 0; cf < dim; ++cf) {
                const int nl = ed.n_loc[cf];
                const double* val = &ed.value[cf][static_cast<size_t>(qp) * nl];
                const double* grd = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                for (int i = 0; i < nl; ++i) {
                    const int ai = ed.loc_offset[cf] + i;
                    const double phi_a = val[i];
                    const double* g_a = &grd[i * 3];
                    double* Jrow = &Jloc[static_cast<size_t>(ai) * n_loc_tot];
                    for (int bi = 0; bi < n_loc_tot; ++bi) {
                        const double* dC_b = &dC[static_cast<size_t>(bi) * 9];
                        double v = phi_a * dMv[static_cast<size_t>(bi) * 3 + cf] +
                                   g_a[cf] * dD[bi];
                        for (int j = 0; j < dim; ++j) v += g_a[j] * dC_b[cf * 3 + j];
                        Jrow[bi] += wt * v;
                    }
                }
            }
            {
                const int f = dim;
                const int nl = ed.n_loc[f];
                const double* val = &ed.value[f][static_cast<size_t>(qp) * nl];
                for (int i = 0; i < nl; ++i) {
                    const int ai = ed.loc_offset[f] + i;
                    double* Jrow = &Jloc[static_cast<size_t>(ai) * n_loc_tot];
                    for (int bi = 0; bi < n_loc_tot; ++bi)
                        Jrow[bi] += wt * val[i] * ddiv[bi];
                }
            }
            if (fine) {
                const int f = dim + 1;
                const int nl = ed.n_loc[f];
                const double* grd = &ed.grad[f][static_cast<size_t>(qp) * nl * 3];
                for (int i = 0; i < nl; ++i) {
                    const int ai = ed.loc_offset[f] + i;
                    const double* g_a = &grd[i * 3];
                    double* Jrow = &Jloc[static_cast<size_t>(ai) * n_loc_tot];
                    for (int bi = 0; bi < n_loc_tot; ++bi) {
                        double v = 0.0;
                        for (int d = 0; d < dim; ++d)
                            v -= g_a[d] * dup[static_cast<size_t>(bi) * 3 + d];
                        Jrow[bi] += wt * v;
                    }
                }
            }
        }

        // scatter
        int row_l = 0;
        for (int rf = 0; rf < n_fields; ++rf) {
            for (int i = 0; i < ed.n_loc[rf]; ++i, ++row_l) {
                const int rs = map_.dof_to_sys[ed.dofs[rf][i]];
                if (rs < 0) continue;
                if (R) {
                    const double v = Rloc[row_l];
                    if (!std::isfinite(v))
                        throw NumericalError("assembly: non-finite residual value in element " +
                                             std::to_string(e));
                    (*R)[rs] += v;
                }
                if (J) {
                    const double* Jrow = &Jloc[static_cast<size_t>(row_l) * n_loc_tot];
                    int col_l = 0;
                    for (int cf = 0; cf < n_fields; ++cf) {
                        for (int j = 0; j < ed.n_loc[cf]; ++j, ++col_l) {
                            const int cs = map_.dof_to_sys[ed.dofs[cf][j]];
                            if (cs < 0) continue;
                            const double v = Jrow[col_l];
                            if (v != 0.0) J->add(rs, cs, v);
                        }
                    }
                }
            }
        }
    }
}

void NavierStokesAssembler::update_subscales(const Vector& x_full, SubscaleState& out) const {
    const int dim = space_->mesh.dim;
    if (stab_.model == SubscaleModel::none) {
        std::fill(out.uprime.begin(), out.uprime.end(), 0.0);
        return;
    }
    ElemData ed;
    QpWork w;
    for (long e = 0; e < cache_->layout().n_elements; ++e) {
        cache_->fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            const long qpg = e * ed.nqp + qp;
            qp_state(ed, x_full, qp, qpg, w);
            double* dst = out.at(qpg);
            if (stab_.model == SubscaleModel::dynamic && scheme_ == TimeScheme::midpoint) {
                // stored value advances to t_n: u'_n = 2 U' - u'_{n-1}
                for (int d = 0; d < dim; ++d) dst[d] = 2.0 * w.uprime[d] - w.w[d];
            } else {
                for (int d = 0; d < dim; ++d) dst[d] = w.uprime[d];
            }
            for (int d = dim; d < 3; ++d) dst[d] = 0.0;
        }
    }
}

StepDiagnostics NavierStokesAssembler::diagnostics(const Vector& x_full,
                                                   const SubscaleState& uprime) const {
    const int dim = space_->mesh.dim;
    const ElementMetric G = metric(space_->mesh, 0);
    double diam2 = 0.0;
    for (int d = 0; d < dim; ++d) diam2 += space_->mesh.h(d) * space_->mesh.h(d);
    const double tau_bound = diam2 / (stab_.c_inv * params_.nu);

    StepDiagnostics out;
    ElemData ed;
    QpFields f;
    double e_k = 0.0, e_tot = 0.0, eps = 0.0;
    for (long e = 0; e < cache_->layout().n_elements; ++e) {
        cache_->fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(*space_, ed, x_full, qp, false, false, f);
            const double wt = ed.qp_weight[qp];
            const double* up = uprime.at(e * ed.nqp + qp);
            double uu = 0.0, utot = 0.0, div = 0.0, sym2 = 0.0, umag2 = 0.0;
            for (int i = 0; i < dim; ++i) {
                uu += f.u[i] * f.u[i];
                const double ti = f.u[i] + up[i];
                utot += ti * ti;
                div += f.gradu[i][i];
                umag2 += f.u[i] * f.u[i];
                for (int j = 0; j < dim; ++j) {
                    const double s = 0.5 * (f.gradu[i][j] + f.gradu[j][i]);
                    sym2 += s * s;
                }
            }
            e_k += wt * 0.5 * uu;
            e_tot += wt * 0.5 * utot;
            eps += wt * 2.0 * params_.nu * sym2;
            out.div_max = std::max(out.div_max, std::abs(div));
            out.u_max = std::max(out.u_max, std::sqrt(umag2));

            if (stab_.model != SubscaleModel::none) {
                double tau;
                if (scheme_ == TimeScheme::steady || stab_.model == SubscaleModel::dynamic)
                    tau = tau_m_dynamic(f.u, params_.nu, G, stab_.c_inv);
                else
                    tau = tau_m_quasistatic(f.u, params_.nu, G, stab_.c_inv, dt_);
                if (tau > tau_bound * (1.0 + 1e-12)) ++out.assumption2_violations;
            }
        }
    }
    const double vol = space_->mesh.volume();
    out.kinetic_energy = e_k / vol;
    out.total_energy = e_tot;
    out.eps_resolved = eps / vol;
    return out;
}

void NavierStokesAssembler::freeze_tau_at(const Vector& x_ref) {
    frozen_tau_.assign(static_cast<size_t>(cache_->layout().total_qp) * 2, 0.0);
    const ElementMetric G = metric(space_->mesh, 0);
    ElemData ed;
    QpFields f;
    for (long e = 0; e < cache_->layout().n_elements; ++e) {
        cache_->fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(*space_, ed, x_ref, qp, false, false, f);
            double tau = 0.0, tc = 0.0;
            if (stab_.model != SubscaleModel::none) {
                if (scheme_ == TimeScheme::steady || stab_.model == SubscaleModel::dynamic)
                    tau = tau_m_dynamic(f.u, params_.nu, G, stab_.c_inv);
                else
                    tau = tau_m_quasistatic(f.u, params_.nu, G, stab_.c_inv, dt_);
                tc = tau_c_value(tau, G, stab_.tau_c_rule);
            }
            frozen_tau_[2 * (e * ed.nqp + qp)] = tau;
            frozen_tau_[2 * (e * ed.nqp + qp) + 1] = tc;
        }
    }
}

// ---------------------------------------------------------------------------
// OseenAssembler
// ---------------------------------------------------------------------------

OseenAssembler::OseenAssembler(const DivConformingSpace& space, const BasisCache& cache,
                               FluidParams params, StabilizationConfig stab, AdvectionField a)
    : space_(&space), cache_(&cache), params_(std::move(params)), stab_(stab), a_(std::move(a)) {
    params_.validate();
    stab_.validate();
    const int dim = space.mesh.dim;
    std::vector<int> fields;
    for (int c = 0; c < dim; ++c) fields.push_back(c);
    fields.push_back(dim);
    fields.push_back(dim + 1);
    map_ = SystemMap::build(space, fields);

    // solenoidality check of the advection field (central differences)
    ElemData ed;
    double amax = 0.0, divmax = 0.0;
    const double step = 1e-6 * space.mesh.h_max();
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            const double* x = &ed.qp_x[qp * 3];
            double av[3];
            a_(x, av);
            for (int d = 0; d < dim; ++d) amax = std::max(amax, std::abs(av[d]));
            double div = 0.0;
            for (int d = 0; d < dim; ++d) {
                double xp[3] = {x[0], x[1], x[2]};
                double xm[3] = {x[0], x[1], x[2]};
                xp[d] += step;
                xm[d] -= step;
                double ap[3], am[3];
                a_(xp, ap);
                a_(xm, am);
                div += (ap[d] - am[d]) / (2.0 * step);
            }
            divmax = std::max(divmax, std::abs(div));
        }
    }
    if (divmax > 1e-10 * std::max(1.0, amax))
        throw DataError("OseenAssembler: advection field is not divergence-free "
                        "(max |div a| = " +
                        std::to_string(divmax) + ")");

    std::vector<int> taken;
    for (int dof : uncontrolled_pressure_dofs(space)) {
        pins_.push_back(make_value_pin(space, map_, dim, dof, 0.0));
        taken.push_back(pins_.back().sys_row);
    }
    pins_.push_back(make_mean_pin(space, map_, dim, 0.0, taken));
    pins_.push_back(make_mean_pin(space, map_, dim + 1, 0.0, taken));
    if (space.fully_periodic())
        for (int c = 0; c < dim; ++c) pins_.push_back(make_mean_pin(space, map_, c, 0.0));
}

void OseenAssembler::assemble(const Vector& x_full, Vector* R, CsMatrix* J) {
    const int dim = space_->mesh.dim;
    const int n_fields = dim + 2;
    if (R) R->setZero(map_.n_sys);
    if (J) J->zero();

    const ElementMetric G = metric(space_->mesh, 0);
    static constexpr int hidx[3][3] = {{0, 3, 4}, {3, 1, 5}, {4, 5, 2}};

    ElemData ed;
    QpFields f;
    std::vector<double> Rloc, Jloc, dC, dD, ddiv, drs;
    for (long e = 0; e < cache_->layout().n_elements; ++e) {
        cache_->fill(e, ed);
        int n_loc_tot = 0;
        for (int fidx = 0; fidx < n_fields; ++fidx) n_loc_tot += ed.n_loc[fidx];
        Rloc.assign(n_loc_tot, 0.0);
        if (J) {
            Jloc.assign(static_cast<size_t>(n_loc_tot) * n_loc_tot, 0.0);
            dC.resize(static_cast<size_t>(n_loc_tot) * 9);
            dD.resize(n_loc_tot);
            ddiv.resize(n_loc_tot);
            drs.resize(static_cast<size_t>(n_loc_tot) * 3);
        }

        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(*space_, ed, x_full, qp, true, true, f);
            for (int i = 0; i < dim; ++i) f.visc[i] *= params_.nu;
            const double wt = ed.qp_weight[qp];
            double av[3] = {0, 0, 0};
            a_(f.x, av);
            double f_val[3] = {0, 0, 0};
            if (params_.source) params_.source(f.x, 0.0, f_val);

            const double tau = tau_m_dynamic(av, params_.nu, G, stab_.c_inv);
            const double tc = tau_c_value(tau, G, stab_.tau_c_rule);

            double r[3], Mv[3], C[3][3], divu = 0.0;
            for (int i = 0; i < dim; ++i) divu += f.gradu[i][i];
            for (int i = 0; i < dim; ++i) {
                double conv = 0.0;
                for (int j = 0; j < dim; ++j) conv += f.gradu[i][j] * av[j];
                r[i] = conv + f.gradp[i] + f.gradpp[i] - f.visc[i] - f_val[i];
                Mv[i] = conv - f_val[i];
            }
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    C[i][j] = params_.nu * (f.gradu[i][j] + f.gradu[j][i]) + tau * r[i] * av[j];
            const double D = -f.p + tc * divu;

            if (R) {
                for (int cf = 0; cf < dim; ++cf) {
                    const int nl = ed.n_loc[cf];
                    const double* val = &ed.value[cf][static_cast<size_t>(qp) * nl];
                    const double* grd = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                    double* out = &Rloc[ed.loc_offset[cf]];
                    for (int i = 0; i < nl; ++i) {
                        double v = val[i] * Mv[cf] + grd[i * 3 + cf] * D;
                        for (int j = 0; j < dim; ++j) v += grd[i * 3 + j] * C[cf][j];
                        out[i] += wt * v;
                    }
                }
                {
                    const int fld = dim;
                    const int nl = ed.n_loc[fld];
                    const double* val = &ed.value[fld][static_cast<size_t>(qp) * nl];
                    double* out = &Rloc[ed.loc_offset[fld]];
                    for (int i = 0; i < nl; ++i) out[i] += wt * val[i] * divu;
                }
                {
                    const int fld = dim + 1;
                    const int nl = ed.n_loc[fld];
                    const double* grd = &ed.grad[fld][static_cast<size_t>(qp) * nl * 3];
                    double* out = &Rloc[ed.loc_offset[fld]];
                    for (int i = 0; i < nl; ++i) {
                        double v = 0.0;
                        for (int d = 0; d < dim; ++d) v += grd[i * 3 + d] * tau * r[d];
                        out[i] += wt * v;
                    }
                }
            }
            if (!J) continue;

            for (int tf = 0; tf < n_fields; ++tf) {
                const int nl = ed.n_loc[tf];
                const double* val = &ed.value[tf][static_cast<size_t>(qp) * nl];
                const double* grd = &ed.grad[tf][static_cast<size_t>(qp) * nl * 3];
                const double* hes =
                    tf < dim ? &ed.hess[tf][static_cast<size_t>(qp) * nl * 6] : nullptr;
                for (int b = 0; b < nl; ++b) {
                    const int bi = ed.loc_offset[tf] + b;
                    double* dC_b = &dC[static_cast<size_t>(bi) * 9];
                    double* dr_b = &drs[static_cast<size_t>(bi) * 3];
                    std::memset(dC_b, 0, 9 * sizeof(double));
                    std::memset(dr_b, 0, 3 * sizeof(double));
                    if (tf < dim) {
                        const int ec = tf;
                        const double* g = &grd[b * 3];
                        const double* H = &hes[b * 6];
                        double lap = 0.0, ga = 0.0;
                        for (int d = 0; d < dim; ++d) {
                            lap += H[hidx[d][d]];
                            ga += g[d] * av[d];
                        }
                        for (int i = 0; i < dim; ++i) {
                            const double hv =
                                params_.nu * ((i == ec ? lap : 0.0) + H[hidx[i][ec]]);
                            dr_b[i] = (i == ec ? ga : 0.0) - hv;
                        }
                        for (int i = 0; i < dim; ++i)
                            for (int j = 0; j < dim; ++j)
                                dC_b[i * 3 + j] =
                                    params_.nu * ((i == ec ? g[j] : 0.0) + (j == ec ? g[i] : 0.0)) +
                                    tau * dr_b[i] * av[j];
                        dD[bi] = tc * g[ec];
                        ddiv[bi] = g[ec];
                    } else {
                        const double* g = &grd[b * 3];
                        for (int i = 0; i < dim; ++i) dr_b[i] = g[i];
                        for (int i = 0; i < dim; ++i)
                            for (int j = 0; j < dim; ++j)
                                dC_b[i * 3 + j] = tau * dr_b[i] * av[j];
                        dD[bi] = (tf == dim) ? -val[b] : 0.0;
                        ddiv[bi] = 0.0;
                    }
                }
            }

            for (int cf = 0; cf < dim; ++cf) {
                const int nl = ed.n_loc[cf];
                const double* val = &ed.value[cf][static_cast<size_t>(qp) * nl];
                const double* grd = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                for (int i = 0; i < nl; ++i) {
                    const int ai = ed.loc_offset[cf] + i;
                    const double phi_a = val[i];
                    const double* g_a = &grd[i * 3];
                    double* Jrow = &Jloc[static_cast<size_t>(ai) * n_loc_tot];
                    // velocity trials: advection term (a . grad phi_b) tests phi_a
                    for (int tf = 0; tf < dim; ++tf) {
                        const int nlb = ed.n_loc[tf];
                        const double* grdb = &ed.grad[tf][static_cast<size_t>(qp) * nlb * 3];
                        if (tf == cf) {
                            for (int b = 0; b < nlb; ++b) {
                                double ga = 0.0;
                                for (int d = 0; d < dim; ++d) ga += grdb[b * 3 + d] * av[d];
                                Jrow[ed.loc_offset[tf] + b] += wt * phi_a * ga;
                            }
                        }
                    }
                    for (int bi = 0; bi < n_loc_tot; ++bi) {
                        const double* dC_b = &dC[static_cast<size_t>(bi) * 9];
                        double v = g_a[cf] * dD[bi];
                        for (int j = 0; j < dim; ++j) v += g_a[j] * dC_b[cf * 3 + j];
                        Jrow[bi] += wt * v;
                    }
                }
            }
            {
                const int fld = dim;
                const int nl = ed.n_loc[fld];
                const double* val = &ed.value[fld][static_cast<size_t>(qp) * nl];
                for (int i = 0; i < nl; ++i) {
                    double* Jrow = &Jloc[static_cast<size_t>(ed.loc_offset[fld] + i) * n_loc_tot];
                    for (int bi = 0; bi < n_loc_tot; ++bi) Jrow[bi] += wt * val[i] * ddiv[bi];
                }
            }
            {
                const int fld = dim + 1;
                const int nl = ed.n_loc[fld];
                const double* grd = &ed.grad[fld][static_cast<size_t>(qp) * nl * 3];
                for (int i = 0; i < nl; ++i) {
                    const double* g_a = &grd[i * 3];
                    double* Jrow = &Jloc[static_cast<size_t>(ed.loc_offset[fld] + i) * n_loc_tot];
                    for (int bi = 0; bi < n_loc_tot; ++bi) {
                        double v = 0.0;
                        for (int d = 0; d < dim; ++d)
                            v += g_a[d] * tau * drs[static_cast<size_t>(bi) * 3 + d];
                        Jrow[bi] += wt * v;
                    }
                }
            }
        }

        int row_l = 0;
        for (int rf = 0; rf < n_fields; ++rf) {
            for (int i = 0; i < ed.n_loc[rf]; ++i, ++row_l) {
                const int rs = map_.dof_to_sys[ed.dofs[rf][i]];
                if (rs < 0) continue;
                if (R) {
                    if (!std::isfinite(Rloc[row_l]))
                        throw NumericalError("assembly: non-finite residual value in element " +
                                             std::to_string(e));
                    (*R)[rs] += Rloc[row_l];
                }
                if (J) {
                    const double* Jrow = &Jloc[static_cast<size_t>(row_l) * n_loc_tot];
                    int col_l = 0;
                    for (int cf = 0; cf < n_fields; ++cf)
                        for (int j = 0; j < ed.n_loc[cf]; ++j, ++col_l) {
                            const int cs = map_.dof_to_sys[ed.dofs[cf][j]];
                            if (cs >= 0 && Jrow[col_l] != 0.0) J->add(rs, cs, Jrow[col_l]);
                        }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ProjectionAssembler, solenoidal lifting, Stokes projector
// ---------------------------------------------------------------------------

ProjectionAssembler::ProjectionAssembler(const DivConformingSpace& space, const BasisCache& cache,
                                         ProjectionKind kind, TargetField target, double nu,
                                         double tau_c, bool over_full_space, bool pin_multiplier)
    : space_(&space), cache_(&cache), kind_(kind), target_(std::move(target)), nu_(nu),
      tau_c_(tau_c) {
    const int dim = space.mesh.dim;
    std::vector<int> fields;
    for (int c = 0; c < dim; ++c) fields.push_back(c);
    fields.push_back(dim); // multiplier / projector pressure
    map_ = SystemMap::build(space, fields, over_full_space);
    std::vector<int> taken;
    if (!over_full_space)
        for (int dof : uncontrolled_pressure_dofs(space)) {
            pins_.push_back(make_value_pin(space, map_, dim, dof, 0.0));
            taken.push_back(pins_.back().sys_row);
        }
    if (pin_multiplier) pins_.push_back(make_mean_pin(space, map_, dim, 0.0, taken));
    if (kind == ProjectionKind::stokes && space.fully_periodic()) {
        // pin component means to the target means
        ElemData ed;
        double means[3] = {0, 0, 0};
        for (long e = 0; e < cache.layout().n_elements; ++e) {
            cache.fill(e, ed);
            for (int qp = 0; qp < ed.nqp; ++qp) {
                double uv[3] = {0, 0, 0};
                target_.value(&ed.qp_x[qp * 3], uv);
                for (int d = 0; d < dim; ++d) means[d] += ed.qp_weight[qp] * uv[d];
            }
        }
        for (int c = 0; c < dim; ++c) pins_.push_back(make_mean_pin(space, map_, c, means[c]));
    }
}

void ProjectionAssembler::assemble(const Vector& x_full, Vector* R, CsMatrix* J) {
    const int dim = space_->mesh.dim;
    const int n_fields = dim + 1;
    if (R) R->setZero(map_.n_sys);
    if (J) J->zero();

    ElemData ed;
    QpFields f;
    std::vector<double> Rloc, Jloc;
    const bool stokes = kind_ == ProjectionKind::stokes;

    for (long e = 0; e < cache_->layout().n_elements; ++e) {
        cache_->fill(e, ed);
        int n_loc_tot = 0;
        for (int fidx = 0; fidx < n_fields; ++fidx) n_loc_tot += ed.n_loc[fidx];
        Rloc.assign(n_loc_tot, 0.0);
        if (J) Jloc.assign(static_cast<size_t>(n_loc_tot) * n_loc_tot, 0.0);

        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(*space_, ed, x_full, qp, false, false, f);
            const double wt = ed.qp_weight[qp];
            double tv[3] = {0, 0, 0};
            double tg[3][3] = {};
            double tp = 0.0;
            target_.value(f.x, tv);
            if (stokes) {
                if (target_.gradient) target_.gradient(f.x, tg);
                if (target_.pressure) tp = target_.pressure(f.x);
            }

            // error fields e = u - target
            double eu[3], eg[3][3], div_e = 0.0, div_u = 0.0;
            for (int i = 0; i < dim; ++i) {
                eu[i] = f.u[i] - tv[i];
                for (int j = 0; j < dim; ++j) eg[i][j] = f.gradu[i][j] - tg[i][j];
                div_e += eg[i][i];
                div_u += f.gradu[i][i];
            }

            if (R) {
                for (int cf = 0; cf < dim; ++cf) {
                    const int nl = ed.n_loc[cf];
                    const double* val = &ed.value[cf][static_cast<size_t>(qp) * nl];
                    const double* grd = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                    double* out = &Rloc[ed.loc_offset[cf]];
                    for (int i = 0; i < nl; ++i) {
                        double v = 0.0;
                        if (stokes) {
                            // k(e, v) + tau_C (div e, div v) - b(v, p - tp)
                            for (int j = 0; j < dim; ++j)
                                v += grd[i * 3 + j] * nu_ * (eg[cf][j] + eg[j][cf]);
                            v += grd[i * 3 + cf] * (tau_c_ * div_e - (f.p - tp));
                        } else {
                            // (e, v) + b(v, lambda)
                            v += val[i] * eu[cf];
                            v += grd[i * 3 + cf] * f.p;
                        }
                        out[i] += wt * v;
                    }
                }
                {
                    const int fld = dim;
                    const int nl = ed.n_loc[fld];
                    const double* val = &ed.value[fld][static_cast<size_t>(qp) * nl];
                    double* out = &Rloc[ed.loc_offset[fld]];
                    const double dv = stokes ? div_e : div_u;
                    for (int i = 0; i < nl; ++i) out[i] += wt * val[i] * dv;
                }
            }
            if (!J) continue;

            for (int cf = 0; cf < dim; ++cf) {
                const int nl = ed.n_loc[cf];
                const double* val_a = &ed.value[cf][static_cast<size_t>(qp) * nl];
                const double* grd_a = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                for (int i = 0; i < nl; ++i) {
                    const int ai = ed.loc_offset[cf] + i;
                    double* Jrow = &Jloc[static_cast<size_t>(ai) * n_loc_tot];
                    // velocity-velocity block
                    for (int tf = 0; tf < dim; ++tf) {
                        const int nlb = ed.n_loc[tf];
                        const double* val_b = &ed.value[tf][static_cast<size_t>(qp) * nlb];
                        const double* grd_b = &ed.grad[tf][static_cast<size_t>(qp) * nlb * 3];
                        for (int b = 0; b < nlb; ++b) {
                            double v = 0.0;
                            if (stokes) {
                                // nu (e_tf grad phi_b + sym) : rows cf
                                v += nu_ * grd_a[i * 3 + tf] * grd_b[b * 3 + cf];
                                if (tf == cf)
                                    for (int j = 0; j < dim; ++j)
                                        v += nu_ * grd_a[i * 3 + j] * grd_b[b * 3 + j];
                                v += tau_c_ * grd_a[i * 3 + cf] * grd_b[b * 3 + tf];
                            } else {
                                if (tf == cf) v += val_a[i] * val_b[b];
                            }
                            Jrow[ed.loc_offset[tf] + b] += wt * v;
                        }
                    }
                    // pressure / multiplier column
                    {
                        const int tf = dim;
                        const int nlb = ed.n_loc[tf];
                        const double* val_b = &ed.value[tf][static_cast<size_t>(qp) * nlb];
                        const double sign = stokes ? -1.0 : 1.0;
                        for (int b = 0; b < nlb; ++b)
                            Jrow[ed.loc_offset[tf] + b] +=
                                wt * sign * grd_a[i * 3 + cf] * val_b[b];
                    }
                }
            }
            {
                const int fld = dim;
                const int nl = ed.n_loc[fld];
                const double* val_a = &ed.value[fld][static_cast<size_t>(qp) * nl];
                for (int i = 0; i < nl; ++i) {
                    double* Jrow = &Jloc[static_cast<size_t>(ed.loc_offset[fld] + i) * n_loc_tot];
                    for (int tf = 0; tf < dim; ++tf) {
                        const int nlb = ed.n_loc[tf];
                        const double* grd_b = &ed.grad[tf][static_cast<size_t>(qp) * nlb * 3];
                        for (int b = 0; b < nlb; ++b)
                            Jrow[ed.loc_offset[tf] + b] += wt * val_a[i] * grd_b[b * 3 + tf];
                    }
                }
            }
        }

        int row_l = 0;
        for (int rf = 0; rf < n_fields; ++rf) {
            for (int i = 0; i < ed.n_loc[rf]; ++i, ++row_l) {
                const int rs = map_.dof_to_sys[ed.dofs[rf][i]];
                if (rs < 0) continue;
                if (R) {
                    if (!std::isfinite(Rloc[row_l]))
                        throw NumericalError("assembly: non-finite residual value in element " +
                                             std::to_string(e));
                    (*R)[rs] += Rloc[row_l];
                }
                if (J) {
                    const double* Jrow = &Jloc[static_cast<size_t>(row_l) * n_loc_tot];
                    int col_l = 0;
                    for (int cf = 0; cf < n_fields; ++cf)
                        for (int j = 0; j < ed.n_loc[cf]; ++j, ++col_l) {
                            const int cs = map_.dof_to_sys[ed.dofs[cf][j]];
                            if (cs >= 0 && Jrow[col_l] != 0.0) J->add(rs, cs, Jrow[col_l]);
                        }
                }
            }
        }
    }
}

namespace {

double boundary_net_flux(const DivConformingSpace& space, const VelocityField& g) {
    const Mesh& mesh = space.mesh;
    const int dim = mesh.dim;
    const GaussRule rule = gauss_rule(4);
    double flux = 0.0;
    for (int d = 0; d < dim; ++d) {
        if (space.bc.direction_periodic(d)) continue;
        for (int s = 0; s < 2; ++s) {
            const double xd = (s == 0) ? mesh.lo[d] : mesh.hi[d];
            const double sign = (s == 0) ? -1.0 : 1.0;
            // tensor quadrature over the transverse directions
            std::array<int, 2> tdirs{};
            int nt = 0;
            for (int t = 0; t < dim; ++t)
                if (t != d) tdirs[nt++] = t;
            std::array<long, 2> nel{1, 1};
            for (int t = 0; t < nt; ++t) nel[t] = mesh.n_elem[tdirs[t]];
            long total = nel[0] * nel[1];
            for (long e = 0; e < total; ++e) {
                const long e0 = e % nel[0];
                const long e1 = e / nel[0];
                const long eidx[2] = {e0, e1};
                const int nq = rule.size();
                const int nqf = (nt == 1) ? nq : nq * nq;
                for (int q = 0; q < nqf; ++q) {
                    double x[3] = {0, 0, 0};
                    double w = 1.0;
                    x[d] = xd;
                    for (int t = 0; t < nt; ++t) {
                        const int qt = (t == 0) ? q % nq : q / nq;
                        const int td = tdirs[t];
                        x[td] = mesh.lo[td] + (eidx[t] + rule.points[qt]) * mesh.h(td);
                        w *= rule.weights[qt] * mesh.h(td);
                    }
                    double uv[3] = {0, 0, 0};
                    g(x, uv);
                    flux += sign * w * uv[d];
                }
            }
        }
    }
    return flux;
}

} // namespace

namespace {

void check_boundary_compatibility(const DivConformingSpace& space, const VelocityField& field) {
    const double flux = boundary_net_flux(space, field);
    double area = 0.0;
    const Mesh& mesh = space.mesh;
    for (int d = 0; d < mesh.dim; ++d) {
        if (space.bc.direction_periodic(d)) continue;
        double a = 1.0;
        for (int t = 0; t < mesh.dim; ++t)
            if (t != d) a *= mesh.extent(t);
        area += 2.0 * a;
    }
    if (std::abs(flux) > 1e-9 * std::max(1.0, area))
        throw DataError("solenoidal_lifting: boundary data has nonzero net flux " +
                        std::to_string(flux));
}

} // namespace

Vector solenoidal_lifting(const DivConformingSpace& space, const BasisCache& cache,
                          const VelocityField& field) {
    check_boundary_compatibility(space, field);

    TargetField target;
    target.value = [&field](const double* x, double* u) { field(x, u); };
    ProjectionAssembler proj(space, cache, ProjectionKind::l2_solenoidal, target, 1.0, 0.0,
                             /*over_full_space=*/true, /*pin_multiplier=*/false);
    AssembledProblem problem(proj, Vector::Zero(space.total_dofs));
    DirectSolver solver;
    NonlinearSettings settings;
    settings.rel_tol = 1e-12;
    solve_nonlinear(problem, solver, settings);
    return problem.state();
}

Vector solenoidal_lifting_iterated_penalty(const DivConformingSpace& space,
                                           const BasisCache& cache, const VelocityField& field,
                                           double rho, double tol, int max_iters) {
    check_boundary_compatibility(space, field);
    const int dim = space.mesh.dim;
    const int n_vel = space.velocity_dofs();

    // velocity-block operator A = M + rho * (div, div) and data b0 = (w, v);
    // the pressure iterate enters the rhs through B^T p = (div v, p)
    std::vector<Eigen::Triplet<double>> a_trips, bt_trips;
    Vector b0 = Vector::Zero(n_vel);
    ElemData ed;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            const double wt = ed.qp_weight[qp];
            double tv[3] = {0, 0, 0};
            field(&ed.qp_x[qp * 3], tv);
            for (int cf = 0; cf < dim; ++cf) {
                const int nl = ed.n_loc[cf];
                const double* val_a = &ed.value[cf][static_cast<size_t>(qp) * nl];
                const double* grd_a = &ed.grad[cf][static_cast<size_t>(qp) * nl * 3];
                for (int i = 0; i < nl; ++i) {
                    const int ra = ed.dofs[cf][i];
                    b0[ra] += wt * val_a[i] * tv[cf];
                    for (int tf = 0; tf < dim; ++tf) {
                        const int nlb = ed.n_loc[tf];
                        const double* val_b = &ed.value[tf][static_cast<size_t>(qp) * nlb];
                        const double* grd_b = &ed.grad[tf][static_cast<size_t>(qp) * nlb * 3];
                        for (int b = 0; b < nlb; ++b) {
                            double v = rho * grd_a[i * 3 + cf] * grd_b[b * 3 + tf];
                            if (tf == cf) v += val_a[i] * val_b[b];
                            a_trips.emplace_back(ra, ed.dofs[tf][b], wt * v);
                        }
                    }
                    // (div v, q) couplings for the pressure update rhs
                    const int pf = dim;
                    const int nlp = ed.n_loc[pf];
                    const double* val_p = &ed.value[pf][static_cast<size_t>(qp) * nlp];
                    for (int b = 0; b < nlp; ++b)
                        bt_trips.emplace_back(ra, ed.dofs[pf][b] - space.pressure_offset,
                                              wt * grd_a[i * 3 + cf] * val_p[b]);
                }
            }
        }
    }
    SpMat A(n_vel, n_vel);
    A.setFromTriplets(a_trips.begin(), a_trips.end());
    SpMat Bt(n_vel, space.pressure.total);
    Bt.setFromTriplets(bt_trips.begin(), bt_trips.end());

    DirectSolver solver;
    solver.factorize(A);

    Vector p = Vector::Zero(space.pressure.total);
    Vector u;
    double scale = std::max(1.0, b0.lpNorm<Eigen::Infinity>());
    for (int it = 0; it < max_iters; ++it) {
        u = solver.solve(b0 - Bt * p);
        Vector full = Vector::Zero(space.total_dofs);
        full.head(n_vel) = u;
        const auto divc = divergence_coefficients(space, full.data());
        double div_inf = 0.0;
        for (size_t i = 0; i < divc.size(); ++i) {
            p[i] += rho * divc[i];
            div_inf = std::max(div_inf, std::abs(divc[i]));
        }
        if (div_inf < tol * scale) {
            Vector out = Vector::Zero(space.total_dofs);
            out.head(n_vel) = u;
            return out;
        }
    }
    throw SolverError("solenoidal_lifting_iterated_penalty: no convergence");
}

Vector stokes_projector(const DivConformingSpace& space, const BasisCache& cache,
                        const TargetField& target, double nu, double tau_c) {
    ProjectionAssembler proj(space, cache, ProjectionKind::stokes, target, nu, tau_c,
                             /*over_full_space=*/false, /*pin_multiplier=*/true);
    AssembledProblem problem(proj, Vector::Zero(space.total_dofs));
    DirectSolver solver;
    NonlinearSettings settings;
    settings.rel_tol = 1e-12;
    solve_nonlinear(problem, solver, settings);
    return problem.state();
}

} // namespace vms
