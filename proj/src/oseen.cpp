#include "vms/oseen.hpp"

#include <cmath>
#include <cstdio>

namespace vms {

namespace {

// q(s) = s^2 (1-s)^2 and derivatives
inline double q0(double s) { return s * s * (1.0 - s) * (1.0 - s); }
inline double q1(double s) { return 4.0 * s * s * s - 6.0 * s * s + 2.0 * s; }
inline double q2(double s) { return 12.0 * s * s - 12.0 * s + 2.0; }
inline double q3(double s) { return 24.0 * s - 12.0; }

constexpr double kPi = 3.14159265358979323846;

} // namespace

OseenCase make_oseen_case(double nu, double a_scale) {
    OseenCase oc;
    oc.params.nu = nu;
    const double inv_norm = a_scale / std::sqrt(5.0);
    const double a1 = 2.0 * inv_norm;
    const double a2 = 1.0 * inv_norm;
    oc.a_magnitude = a_scale;
    oc.advection = [a1, a2](const double* /*x*/, double* a) {
        a[0] = a1;
        a[1] = a2;
        a[2] = 0.0;
    };
    oc.exact_u.value = [](const double* x, double* u) {
        u[0] = q0(x[0]) * q1(x[1]);
        u[1] = -q1(x[0]) * q0(x[1]);
        u[2] = 0.0;
    };
    oc.exact_u.gradient = [](const double* x, double g[3][3]) {
        g[0][0] = q1(x[0]) * q1(x[1]);
        g[0][1] = q0(x[0]) * q2(x[1]);
        g[1][0] = -q2(x[0]) * q0(x[1]);
        g[1][1] = -q1(x[0]) * q1(x[1]);
    };
    oc.exact_visc = [nu](const double* x, double* v) {
        // div(2 nu grad^s u) = nu lap(u) for the solenoidal exact field
        v[0] = nu * (q2(x[0]) * q1(x[1]) + q0(x[0]) * q3(x[1]));
        v[1] = nu * (-q3(x[0]) * q0(x[1]) - q1(x[0]) * q2(x[1]));
        v[2] = 0.0;
    };
    oc.exact_p = [](const double* x) { return std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
    oc.exact_gradp = [](const double* x, double* g) {
        g[0] = kPi * std::cos(kPi * x[0]) * std::sin(kPi * x[1]);
        g[1] = kPi * std::sin(kPi * x[0]) * std::cos(kPi * x[1]);
        g[2] = 0.0;
    };
    oc.params.source = [oc_u = oc.exact_u, visc = oc.exact_visc, gp = oc.exact_gradp, a1,
                        a2](const double* x, double /*t*/, double* f) {
        double gu[3][3] = {};
        oc_u.gradient(x, gu);
        double vv[3], g[3];
        visc(x, vv);
        gp(x, g);
        for (int i = 0; i < 2; ++i)
            f[i] = a1 * gu[i][0] + a2 * gu[i][1] - vv[i] + g[i];
        f[2] = 0.0;
    };
    return oc;
}

namespace {

struct NormParts {
    double k = 0.0;       // k(v, v)
    double stab = 0.0;    // tau |a.grad v + grad q|^2
    double visc = 0.0;    // tau |div(2 nu grad^s v)|^2
    double l2 = 0.0;      // tau^{-1} |v|^2
};

NormParts norm_parts(const BasisCache& cache, const Vector& x_full,
                     const OseenAssembler::AdvectionField& a, double nu, double c_inv,
                     bool need_plus) {
    const DivConformingSpace& sp = cache.space();
    const int dim = sp.mesh.dim;
    const ElementMetric G = metric(sp.mesh, 0);
    NormParts out;
    ElemData ed;
    QpFields f;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(sp, ed, x_full, qp, need_plus, true, f);
            const double wt = ed.qp_weight[qp];
            double av[3] = {0, 0, 0};
            a(f.x, av);
            const double tau = tau_m_dynamic(av, nu, G, c_inv);

            double ksum = 0.0, ssum = 0.0, vsum = 0.0, usum = 0.0;
            for (int i = 0; i < dim; ++i) {
                for (int j = 0; j < dim; ++j) {
                    const double s = 0.5 * (f.gradu[i][j] + f.gradu[j][i]);
                    ksum += 2.0 * nu * s * s * 2.0; // 2nu grad^s : grad^s = 2nu sum s^2
                }
                double adv = 0.0;
                for (int j = 0; j < dim; ++j) adv += av[j] * f.gradu[i][j];
                const double si = adv + f.gradp[i] + f.gradpp[i];
                ssum += si * si;
                if (need_plus) {
                    const double vi = nu * f.visc[i];
                    vsum += vi * vi;
                    usum += f.u[i] * f.u[i];
                }
            }
            out.k += wt * 0.5 * ksum;
            out.stab += wt * tau * ssum;
            if (need_plus) {
                out.visc += wt * tau * vsum;
                out.l2 += wt * usum / tau;
            }
        }
    }
    return out;
}

} // namespace

double triple_norm(const BasisCache& cache, const Vector& x_full,
                   const OseenAssembler::AdvectionField& a, double nu, double c_inv) {
    const NormParts p = norm_parts(cache, x_full, a, nu, c_inv, false);
    return std::sqrt(p.k + p.stab);
}

double triple_norm_plus(const BasisCache& cache, const Vector& x_full,
                        const OseenAssembler::AdvectionField& a, double nu, double c_inv) {
    const NormParts p = norm_parts(cache, x_full, a, nu, c_inv, true);
    return std::sqrt(p.k + p.stab + p.visc + p.l2);
}

double a_red_quadratic(const BasisCache& cache, const Vector& x_full,
                       const OseenAssembler::AdvectionField& a, double nu,
                       const StabilizationConfig& stab) {
    const DivConformingSpace& sp = cache.space();
    const int dim = sp.mesh.dim;
    const ElementMetric G = metric(sp.mesh, 0);
    double total = 0.0;
    ElemData ed;
    QpFields f;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(sp, ed, x_full, qp, true, true, f);
            const double wt = ed.qp_weight[qp];
            double av[3] = {0, 0, 0};
            a(f.x, av);
            const double tau = tau_m_dynamic(av, nu, G, stab.c_inv);
            const double tc = tau_c_value(tau, G, stab.tau_c_rule);

            double conv = 0.0, ksum = 0.0, div = 0.0, stabsum = 0.0;
            for (int i = 0; i < dim; ++i) {
                double adv = 0.0;
                for (int j = 0; j < dim; ++j) adv += av[j] * f.gradu[i][j];
                conv += adv * f.u[i];
                div += f.gradu[i][i];
                for (int j = 0; j < dim; ++j) {
                    const double s = 0.5 * (f.gradu[i][j] + f.gradu[j][i]);
                    ksum += 2.0 * nu * 2.0 * s * s;
                }
                const double test_i = adv + f.gradp[i] + f.gradpp[i];
                const double trial_i = test_i - nu * f.visc[i];
                stabsum += trial_i * test_i;
            }
            total += wt * (conv + 0.5 * ksum + tc * div * div + tau * stabsum);
        }
    }
    return total;
}

OseenErrorNorms oseen_error_norms(const BasisCache& cache, const Vector& coeffs,
                                  const OseenCase& oc, double c_inv) {
    const DivConformingSpace& sp = cache.space();
    const int dim = sp.mesh.dim;
    const ElementMetric G = metric(sp.mesh, 0);
    const double nu = oc.params.nu;
    OseenErrorNorms out;
    double ksum = 0.0, ssum = 0.0, vsum = 0.0, usum = 0.0, h1 = 0.0;
    ElemData ed;
    QpFields f;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(sp, ed, coeffs, qp, true, true, f);
            const double wt = ed.qp_weight[qp];
            double av[3] = {0, 0, 0};
            oc.advection(f.x, av);
            const double tau = tau_m_dynamic(av, nu, G, c_inv);

            double ue[3] = {0, 0, 0}, ge[3][3] = {}, ve[3] = {0, 0, 0}, gpe[3] = {0, 0, 0};
            oc.exact_u.value(f.x, ue);
            oc.exact_u.gradient(f.x, ge);
            oc.exact_visc(f.x, ve);
            oc.exact_gradp(f.x, gpe);

            for (int i = 0; i < dim; ++i) {
                double adv = 0.0;
                for (int j = 0; j < dim; ++j) {
                    const double eg = f.gradu[i][j] - ge[i][j];
                    const double eg_t = f.gradu[j][i] - ge[j][i];
                    const double s = 0.5 * (eg + eg_t);
                    ksum += wt * 2.0 * nu * 2.0 * s * s * 0.5;
                    h1 += wt * eg * eg;
                    adv += av[j] * eg;
                }
                // e_q = (p^h + p') - p_exact; sign-symmetric in the norm
                const double sq = adv + (f.gradp[i] + f.gradpp[i] - gpe[i]);
                ssum += wt * tau * sq * sq;
                const double vi = nu * f.visc[i] - ve[i];
                vsum += wt * tau * vi * vi;
                const double eu = f.u[i] - ue[i];
                usum += wt * eu * eu / tau;
            }
        }
    }
    out.velocity = std::sqrt(ksum);
    out.triple = std::sqrt(ksum + ssum);
    out.triple_plus = std::sqrt(ksum + ssum + vsum + usum);
    out.h1 = std::sqrt(h1);
    return out;
}

Vector solve_oseen(const DivConformingSpace& space, const BasisCache& cache, const OseenCase& oc,
                   const StabilizationConfig& stab) {
    OseenAssembler assembler(space, cache, oc.params, stab, oc.advection);
    AssembledProblem problem(assembler, Vector::Zero(space.total_dofs));
    DirectSolver solver;
    NonlinearSettings settings = stab.newton;
    const NewtonReport rep = solve_nonlinear(problem, solver, settings);
    (void)rep;
    Vector x = problem.state();
    MeanConstraint mc = pressure_mean_constraint(space, false);
    mc.shift_to(x.data() + space.pressure_offset, 0.0);
    MeanConstraint mf = pressure_mean_constraint(space, true);
    mf.shift_to(x.data() + space.fine_pressure_offset, 0.0);
    return x;
}

StudyResult run_convergence_study(int k_prime, const std::vector<int>& mesh_sizes,
                                  OseenRegime regime, const StabilizationConfig& stab,
                                  int fine_pressure_refinement) {
    if (mesh_sizes.size() < 3)
        throw InputError("run_convergence_study: need at least 3 nested mesh levels");
    const double nu = (regime == OseenRegime::advective) ? 1e-6 : 1.0;
    const double a_scale = (regime == OseenRegime::advective) ? 1.0 : 1e-3;
    const OseenCase oc = make_oseen_case(nu, a_scale);

    StudyResult result;
    std::vector<std::pair<double, double>> he_triple, he_velocity;
    for (int n : mesh_sizes) {
        const Mesh mesh = make_square_mesh(0.0, 1.0, n);
        const DivConformingSpace space =
            build_space(mesh, k_prime, BoundarySpec::all_no_slip(2), fine_pressure_refinement);
        const IntegrationLayout layout = IntegrationLayout::build(space, k_prime + 2);
        const BasisCache cache(space, layout, true);
        const Vector x = solve_oseen(space, cache, oc, stab);

        const IntegrationLayout err_layout = IntegrationLayout::build(space, k_prime + 3);
        const BasisCache err_cache(space, err_layout, true);
        const OseenErrorNorms err = oseen_error_norms(err_cache, x, oc, stab.c_inv);

        StudyLevel lvl;
        lvl.n = n;
        lvl.h = mesh.h_max();
        lvl.err_triple = err.triple;
        lvl.err_triple_plus = err.triple_plus;
        lvl.err_velocity = err.velocity;
        if (!result.levels.empty()) {
            const StudyLevel& prev = result.levels.back();
            lvl.rate_triple = std::log(prev.err_triple / lvl.err_triple) / std::log(prev.h / lvl.h);
        }
        result.levels.push_back(lvl);
        he_triple.emplace_back(lvl.h, lvl.err_triple);
        he_velocity.emplace_back(lvl.h, lvl.err_velocity);
    }
    result.fitted_rate_triple = fit_rate(he_triple);
    result.fitted_rate_velocity = fit_rate(he_velocity);
    return result;
}

void write_rate_table(const StudyResult& result, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw IoError("write_rate_table: cannot open " + path);
    std::fprintf(fp, "h,error_norm,error_norm_plus,fitted_rate\n");
    for (const auto& l : result.levels)
        std::fprintf(fp, "%.17g,%.17g,%.17g,%.17g\n", l.h, l.err_triple, l.err_triple_plus,
                     l.rate_triple);
    if (std::fclose(fp) != 0) throw IoError("write_rate_table: write failure on " + path);
}

double fit_rate(const std::vector<std::pair<double, double>>& h_err) {
    const size_t n = h_err.size();
    if (n < 2) throw InputError("fit_rate: need at least two levels");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [h, e] : h_err) {
        const double x = std::log(h);
        const double y = std::log(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace vms
