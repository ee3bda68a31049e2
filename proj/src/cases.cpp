#include "vms/cases.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>

namespace vms {

namespace {

constexpr double kPi = 3.14159265358979323846;

// s^4 - 2 s^3 + s^2 and derivatives (the cavity x-profile)
inline double X0(double s) { return s * s * (s * s - 2.0 * s + 1.0); }
inline double X1(double s) { return 4.0 * s * s * s - 6.0 * s * s + 2.0 * s; }
inline double X2(double s) { return 12.0 * s * s - 12.0 * s + 2.0; }
inline double X3(double s) { return 24.0 * s - 12.0; }
// y^4 - y^2 and derivatives (the cavity y-profile)
inline double Y0(double s) { return s * s * (s * s - 1.0); }
inline double Y1(double s) { return 4.0 * s * s * s - 2.0 * s; }
inline double Y2(double s) { return 12.0 * s * s - 2.0; }
inline double Y3(double s) { return 24.0 * s; }

} // namespace

LdcCase make_ldc_case(double nu) {
    LdcCase c;
    c.nu = nu;
    c.exact_u.value = [](const double* x, double* u) {
        u[0] = 8.0 * X0(x[0]) * Y1(x[1]);
        u[1] = -8.0 * X1(x[0]) * Y0(x[1]);
        u[2] = 0.0;
    };
    c.exact_u.gradient = [](const double* x, double g[3][3]) {
        g[0][0] = 8.0 * X1(x[0]) * Y1(x[1]);
        g[0][1] = 8.0 * X0(x[0]) * Y2(x[1]);
        g[1][0] = -8.0 * X2(x[0]) * Y0(x[1]);
        g[1][1] = -8.0 * X1(x[0]) * Y1(x[1]);
    };
    c.exact_p = [](const double* x) { return std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
    c.source = [nu, u = c.exact_u](const double* x, double /*t*/, double* f) {
        double uv[3], g[3][3] = {};
        u.value(x, uv);
        u.gradient(x, g);
        const double lap0 = 8.0 * (X2(x[0]) * Y1(x[1]) + X0(x[0]) * Y3(x[1]));
        const double lap1 = -8.0 * (X3(x[0]) * Y0(x[1]) + X1(x[0]) * Y2(x[1]));
        const double px = kPi * std::cos(kPi * x[0]) * std::sin(kPi * x[1]);
        const double py = kPi * std::sin(kPi * x[0]) * std::cos(kPi * x[1]);
        f[0] = uv[0] * g[0][0] + uv[1] * g[0][1] - nu * lap0 + px;
        f[1] = uv[0] * g[1][0] + uv[1] * g[1][1] - nu * lap1 + py;
        f[2] = 0.0;
    };
    c.boundary_velocity = [u = c.exact_u](const double* x, double* out) { u.value(x, out); };
    return c;
}

namespace {

Vector lifting_for(const DivConformingSpace& space, const BasisCache& cache, const LdcCase& c,
                   const std::string& projector_solver) {
    if (projector_solver == "iterated-penalty")
        return solenoidal_lifting_iterated_penalty(space, cache, c.boundary_velocity);
    return solenoidal_lifting(space, cache, c.boundary_velocity);
}

} // namespace

SteadyResult solve_ldc(int k_prime, int n, double nu, const StabilizationConfig& stab,
                       const std::string& projector_solver) {
    if (stab.model == SubscaleModel::dynamic)
        throw InputError("solve_ldc: the steady cavity uses quasi-static subscales");
    const Mesh mesh = make_square_mesh(0.0, 1.0, n);
    LdcCase c = make_ldc_case(nu);
    const DivConformingSpace space =
        build_space(mesh, k_prime, BoundarySpec::all_prescribed(2, c.boundary_velocity));
    const IntegrationLayout layout = IntegrationLayout::build(space, k_prime + 2);
    const BasisCache cache(space, layout, true);

    const Vector lift = lifting_for(space, cache, c, projector_solver);

    FluidParams params;
    params.nu = nu;
    params.source = c.source;
    NavierStokesAssembler assembler(space, cache, params, stab);
    SubscaleState dummy = SubscaleState::zero(layout);
    assembler.set_step(Vector::Zero(space.total_dofs), dummy, 0.0, 0.0, TimeScheme::steady);

    // constrained dofs take the lifting trace; the interior starts from zero
    Vector x0 = Vector::Zero(space.total_dofs);
    for (int dof = 0; dof < space.total_dofs; ++dof)
        if (space.constrained[dof]) x0[dof] = lift[dof];

    AssembledProblem problem(assembler, std::move(x0));
    DirectSolver solver;
    SteadyResult out;
    out.report = solve_nonlinear(problem, solver, stab.newton);
    out.coeffs = problem.state();
    MeanConstraint mc = pressure_mean_constraint(space, false);
    mc.shift_to(out.coeffs.data() + space.pressure_offset, 0.0);
    MeanConstraint mf = pressure_mean_constraint(space, true);
    mf.shift_to(out.coeffs.data() + space.fine_pressure_offset, 0.0);

    const IntegrationLayout err_layout = IntegrationLayout::build(space, k_prime + 3);
    const BasisCache err_cache(space, err_layout, false);
    out.h1_error = h1_seminorm_error(err_cache, out.coeffs, c.exact_u);
    out.l2_error = l2_error(err_cache, out.coeffs, c.exact_u);
    out.div_max = div_sup(err_cache, out.coeffs);
    const StepDiagnostics d = assembler.diagnostics(out.coeffs, dummy);
    out.u_max = d.u_max;
    return out;
}

// ---------------------------------------------------------------------------
// 2D Taylor-Green vortex
// ---------------------------------------------------------------------------

ExactVelocity Tgv2dCase::exact_at(double t) const {
    const double decay = std::exp(-2.0 * nu * t);
    ExactVelocity e;
    e.value = [decay](const double* x, double* u) {
        u[0] = std::sin(x[0]) * std::cos(x[1]) * decay;
        u[1] = -std::cos(x[0]) * std::sin(x[1]) * decay;
        u[2] = 0.0;
    };
    e.gradient = [decay](const double* x, double g[3][3]) {
        g[0][0] = std::cos(x[0]) * std::cos(x[1]) * decay;
        g[0][1] = -std::sin(x[0]) * std::sin(x[1]) * decay;
        g[1][0] = std::sin(x[0]) * std::sin(x[1]) * decay;
        g[1][1] = -std::cos(x[0]) * std::cos(x[1]) * decay;
    };
    return e;
}

std::function<double(const double*)> Tgv2dCase::exact_p_at(double t) const {
    const double decay = std::exp(-4.0 * nu * t);
    return [decay](const double* x) {
        return 0.25 * (std::cos(2.0 * x[0]) + std::cos(2.0 * x[1])) * decay;
    };
}

CoarseState tgv2d_initial_state(const DivConformingSpace& space, const BasisCache& cache,
                                double nu) {
    Tgv2dCase c{nu};
    const ExactVelocity e = c.exact_at(0.0);
    TargetField target;
    target.value = e.value;
    target.gradient = e.gradient;
    const ElementMetric G = metric(space.mesh, 0);
    const double zero_u[3] = {0, 0, 0};
    const double tau0 = tau_m_dynamic(zero_u, nu, G, 36.0);
    CoarseState state;
    state.coeffs = stokes_projector(space, cache, target, nu, tau_c_value(tau0, G, TauCRule::standard));
    state.t = 0.0;
    return state;
}

Tgv2dResult run_tgv2d(int k_prime, int n, double nu, const TimeSettings& time,
                      const StabilizationConfig& stab, const TransientOptions& options) {
    const Mesh mesh = make_square_mesh(0.0, 2.0 * kPi, n);
    const DivConformingSpace space = build_space(mesh, k_prime, BoundarySpec::all_periodic(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, k_prime + 2);
    const BasisCache cache(space, layout, true);

    FluidParams params;
    params.nu = nu;
    NavierStokesAssembler assembler(space, cache, params, stab);

    Tgv2dResult out;
    out.transient = run_transient(assembler, tgv2d_initial_state(space, cache, nu),
                                  SubscaleState::zero(layout), time, options);

    Tgv2dCase c{nu};
    const ExactVelocity exact_T = c.exact_at(out.transient.final_state.t);
    const IntegrationLayout err_layout = IntegrationLayout::build(space, k_prime + 3);
    const BasisCache err_cache(space, err_layout, false);
    out.h1_error_T = h1_seminorm_error(err_cache, out.transient.final_state.coeffs, exact_T);
    out.l2_error_T = l2_error(err_cache, out.transient.final_state.coeffs, exact_T);
    return out;
}

// ---------------------------------------------------------------------------
// 3D Taylor-Green vortex
// ---------------------------------------------------------------------------

ExactVelocity tgv3d_initial_condition() {
    ExactVelocity e;
    e.value = [](const double* x, double* u) {
        u[0] = std::sin(x[0]) * std::cos(x[1]) * std::cos(x[2]);
        u[1] = -std::cos(x[0]) * std::sin(x[1]) * std::cos(x[2]);
        u[2] = 0.0;
    };
    e.gradient = [](const double* x, double g[3][3]) {
        const double sx = std::sin(x[0]), cx = std::cos(x[0]);
        const double sy = std::sin(x[1]), cy = std::cos(x[1]);
        const double sz = std::sin(x[2]), cz = std::cos(x[2]);
        g[0][0] = cx * cy * cz;
        g[0][1] = -sx * sy * cz;
        g[0][2] = -sx * cy * sz;
        g[1][0] = sx * sy * cz;
        g[1][1] = -cx * cy * cz;
        g[1][2] = cx * sy * sz;
        g[2][0] = g[2][1] = g[2][2] = 0.0;
    };
    return e;
}

CoarseState tgv3d_initial_state(const DivConformingSpace& space, const BasisCache& cache,
                                double nu) {
    const ExactVelocity e = tgv3d_initial_condition();
    TargetField target;
    target.value = e.value;
    target.gradient = e.gradient;
    const ElementMetric G = metric(space.mesh, 0);
    const double zero_u[3] = {0, 0, 0};
    const double tau0 = tau_m_dynamic(zero_u, nu, G, 36.0);
    CoarseState state;
    state.coeffs = stokes_projector(space, cache, target, nu, tau_c_value(tau0, G, TauCRule::standard));
    state.t = 0.0;
    return state;
}

TransientResult run_tgv3d(int k_prime, int n, double nu, const TimeSettings& time,
                          const StabilizationConfig& stab, const TransientOptions& options) {
    const Mesh mesh = make_cube_mesh(0.0, kPi, n);
    const DivConformingSpace space = build_space(mesh, k_prime, BoundarySpec::all_free_slip(3));
    const IntegrationLayout layout = IntegrationLayout::build(space, k_prime + 2);
    const BasisCache cache(space, layout, true);

    FluidParams params;
    params.nu = nu;
    NavierStokesAssembler assembler(space, cache, params, stab);
    return run_transient(assembler, tgv3d_initial_state(space, cache, nu),
                         SubscaleState::zero(layout), time, options);
}

// ---------------------------------------------------------------------------
// convergence studies
// ---------------------------------------------------------------------------

namespace {

CaseStudy finish_study(std::vector<CaseStudyLevel> levels) {
    CaseStudy s;
    std::vector<std::pair<double, double>> he;
    for (size_t i = 0; i < levels.size(); ++i) {
        if (i > 0)
            levels[i].rate = std::log(levels[i - 1].error / levels[i].error) /
                             std::log(levels[i - 1].h / levels[i].h);
        he.emplace_back(levels[i].h, levels[i].error);
    }
    s.fitted_rate = fit_rate(he);
    s.levels = std::move(levels);
    return s;
}

} // namespace

CaseStudy ldc_convergence(int k_prime, const std::vector<int>& n_list, double nu,
                          const StabilizationConfig& stab) {
    std::vector<CaseStudyLevel> levels;
    for (int n : n_list) {
        const SteadyResult r = solve_ldc(k_prime, n, nu, stab);
        levels.push_back({n, 1.0 / n, r.h1_error, 0.0});
    }
    return finish_study(std::move(levels));
}

CaseStudy tgv2d_convergence(int k_prime, const std::vector<int>& n_list, double nu,
                            const TimeSettings& time, const StabilizationConfig& stab) {
    std::vector<CaseStudyLevel> levels;
    TransientOptions options;
    options.newton = stab.newton;
    for (int n : n_list) {
        const Tgv2dResult r = run_tgv2d(k_prime, n, nu, time, stab, options);
        levels.push_back({n, 2.0 * kPi / n, r.h1_error_T, 0.0});
    }
    return finish_study(std::move(levels));
}

// ---------------------------------------------------------------------------
// CLI entries
// ---------------------------------------------------------------------------

namespace {

std::string output_path(const CaseConfig& cfg, const std::string& name) {
    std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_meta(const CaseConfig& cfg, const std::string& path, double wall_seconds) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw IoError("cannot open " + path);
    std::fprintf(fp, "case=%s\nk_prime=%d\nn=%d\nnu=%.17g\nscheme=%s\nmodel=%s\n",
                 cfg.case_id.c_str(), cfg.k_prime, cfg.n,
                 (cfg.has_nu || cfg.has_re) ? cfg.viscosity() : 0.0,
                 cfg.scheme == TimeScheme::midpoint ? "midpoint" : "backward-euler",
                 cfg.model == SubscaleModel::dynamic       ? "dynamic"
                 : cfg.model == SubscaleModel::quasi_static ? "quasi-static"
                                                            : "none");
    std::fprintf(fp, "c_inv=%.17g\ntau_c_rule=%s\n", cfg.c_inv,
                 cfg.tau_c_rule == TauCRule::standard ? "standard" : "zero");
    std::fprintf(fp, "version=%s\nwall_time_s=%.3f\n", "1.0.0", wall_seconds);
    std::fclose(fp);
}

} // namespace

int run_case(const CaseConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.n < 1) throw InputError("config: missing required key 'n'");
    std::vector<DiagnosticsRecord> records;

    if (cfg.case_id == "ldc") {
        const SteadyResult r = solve_ldc(cfg.k_prime, cfg.n, cfg.viscosity(),
                                         cfg.stabilization(), cfg.projector_solver);
        DiagnosticsRecord rec;
        rec.div_max = r.div_max;
        rec.newton_iters = r.report.iterations;
        records.push_back(rec);
        std::printf("ldc: n=%d k'=%d  H1 error %.6e  L2 error %.6e  div_max %.3e  newton %d\n",
                    cfg.n, cfg.k_prime, r.h1_error, r.l2_error, r.div_max,
                    r.report.iterations);
    } else if (cfg.case_id == "tgv2d") {
        TransientOptions options;
        options.newton = cfg.stabilization().newton;
        options.checkpoint_path = cfg.checkpoint;
        const Tgv2dResult r = run_tgv2d(cfg.k_prime, cfg.n, cfg.viscosity(),
                                        cfg.time_settings(2.0 * kPi / cfg.n),
                                        cfg.stabilization(), options);
        records = r.transient.records;
        std::printf("tgv2d: n=%d k'=%d  H1(T) %.6e  L2(T) %.6e  E_k(T) %.8f\n", cfg.n,
                    cfg.k_prime, r.h1_error_T, r.l2_error_T, records.back().E_k);
    } else if (cfg.case_id == "tgv3d") {
        TransientOptions options;
        options.newton = cfg.stabilization().newton;
        options.checkpoint_path = cfg.checkpoint;
        const TransientResult r =
            run_tgv3d(cfg.k_prime, cfg.n, cfg.viscosity(), cfg.time_settings(kPi / cfg.n),
                      cfg.stabilization(), options);
        records = r.records;
        std::printf("tgv3d: n=%d k'=%d  steps %zu  E_k(T) %.8f\n", cfg.n, cfg.k_prime,
                    records.size(), records.back().E_k);
    } else if (cfg.case_id == "oseen-conv") {
        const double nu = cfg.has_nu ? cfg.nu : (cfg.regime == OseenRegime::advective ? 1e-6 : 1.0);
        const double a_scale =
            cfg.has_nu ? 1.0 : (cfg.regime == OseenRegime::advective ? 1.0 : 1e-3);
        const OseenCase oc = make_oseen_case(nu, a_scale);
        const Mesh mesh = make_square_mesh(0.0, 1.0, cfg.n);
        const DivConformingSpace space = build_space(mesh, cfg.k_prime,
                                                     BoundarySpec::all_no_slip(2),
                                                     cfg.fine_pressure_refinement);
        const IntegrationLayout layout = IntegrationLayout::build(space, cfg.k_prime + 2);
        const BasisCache cache(space, layout, true);
        const Vector x = solve_oseen(space, cache, oc, cfg.stabilization());
        const IntegrationLayout el = IntegrationLayout::build(space, cfg.k_prime + 3);
        const BasisCache ec(space, el, true);
        const OseenErrorNorms norms = oseen_error_norms(ec, x, oc, cfg.c_inv);
        DiagnosticsRecord rec;
        rec.div_max = div_sup(ec, x);
        records.push_back(rec);
        std::printf("oseen: n=%d k'=%d  |||e||| %.6e  |||e|||+ %.6e  velocity %.6e\n", cfg.n,
                    cfg.k_prime, norms.triple, norms.triple_plus, norms.velocity);
    }

    write_csv(records, output_path(cfg, cfg.tag() + ".csv"));
    const auto t1 = std::chrono::steady_clock::now();
    write_meta(cfg, output_path(cfg, cfg.tag() + ".meta"),
               std::chrono::duration<double>(t1 - t0).count());
    return 0;
}

int run_rates(const CaseConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> n_list = cfg.n_list;
    if (n_list.empty()) n_list = {8, 16, 32};

    if (cfg.case_id == "oseen-conv") {
        const StudyResult r = run_convergence_study(cfg.k_prime, n_list, cfg.regime,
                                                    cfg.stabilization(),
                                                    cfg.fine_pressure_refinement);
        write_rate_table(r, output_path(cfg, "oseen_rates_" + std::to_string(cfg.k_prime) +
                                                 ".csv"));
        std::printf("oseen rates: k'=%d fitted |||.||| rate %.3f, velocity rate %.3f\n",
                    cfg.k_prime, r.fitted_rate_triple, r.fitted_rate_velocity);
    } else if (cfg.case_id == "ldc" || cfg.case_id == "tgv2d") {
        CaseStudy s;
        if (cfg.case_id == "ldc") {
            s = ldc_convergence(cfg.k_prime, n_list, cfg.viscosity(), cfg.stabilization());
        } else {
            s = tgv2d_convergence(cfg.k_prime, n_list, cfg.viscosity(),
                                  cfg.time_settings(0.0), cfg.stabilization());
        }
        const std::string path =
            output_path(cfg, cfg.case_id + "_rates_" + std::to_string(cfg.k_prime) + ".csv");
        std::FILE* fp = std::fopen(path.c_str(), "w");
        if (!fp) throw IoError("cannot open " + path);
        std::fprintf(fp, "h,error_norm,error_norm_plus,fitted_rate\n");
        for (const auto& l : s.levels)
            std::fprintf(fp, "%.17g,%.17g,%.17g,%.17g\n", l.h, l.error, l.error, l.rate);
        std::fclose(fp);
        std::printf("%s rates: k'=%d fitted H1 rate %.3f\n", cfg.case_id.c_str(), cfg.k_prime,
                    s.fitted_rate);
    } else {
        throw InputError("rates: case '" + cfg.case_id + "' has no convergence study");
    }
    const auto t1 = std::chrono::steady_clock::now();
    write_meta(cfg, output_path(cfg, cfg.case_id + "_rates.meta"),
               std::chrono::duration<double>(t1 - t0).count());
    return 0;
}

int run_check() {
    int failures = 0;
    auto check = [&failures](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name);
        if (!ok) ++failures;
    };

    // basis partition of unity and derivative sums
    {
        const KnotVector kv = open_knot_vector(2, 8, 0.0, 1.0);
        bool ok = true;
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> ur(0.0, 1.0);
        for (int i = 0; i < 50; ++i) {
            const BasisEval be = eval_basis(kv, ur(rng), 2);
            double s = 0, s1 = 0, s2 = 0;
            for (int j = 0; j <= kv.degree; ++j) {
                s += be.values[j];
                s1 += be.d1[j];
                s2 += be.d2[j];
            }
            ok = ok && std::abs(s - 1.0) < 1e-12 && std::abs(s1) * kv.h < 1e-10 &&
                 std::abs(s2) * kv.h * kv.h < 1e-10;
        }
        check("partition of unity / derivative sums", ok);
    }
    // degree-2 midpoint values
    {
        const KnotVector kv = open_knot_vector(2, 4, 0.0, 1.0);
        const BasisEval be = eval_basis(kv, 0.375, 0); // interior span midpoint
        const bool ok = std::abs(be.values[0] - 0.125) < 1e-14 &&
                        std::abs(be.values[1] - 0.75) < 1e-14 &&
                        std::abs(be.values[2] - 0.125) < 1e-14;
        check("degree-2 midpoint values (1/8, 6/8, 1/8)", ok);
    }
    // tau hand values
    {
        const Mesh mesh = make_square_mesh(0.0, 1.0, 10); // h = 0.1
        const ElementMetric G = metric(mesh, 0);
        const double u0[3] = {0, 0, 0};
        const double tau_d = tau_m_dynamic(u0, 0.01, G, 36.0);
        const double tau_q = tau_m_quasistatic(u0, 0.01, G, 36.0, 0.05);
        const bool ok = std::abs(tau_d - 0.0196419) < 1e-6 &&
                        std::abs(tau_q - 1.0 / std::sqrt(1600.0 + 1.0 / (tau_d * tau_d))) < 1e-12;
        check("tau_M hand values", ok);
    }
    // metric hand values
    {
        const Mesh mesh = make_square_mesh(0.0, 1.0, 4); // h = 0.25
        const ElementMetric G = metric(mesh, 0);
        check("element metric G = diag(16,16), G:G = 512",
              std::abs(G.G[0] - 16.0) < 1e-12 && std::abs(G.GG - 512.0) < 1e-9);
    }
    // condensed subscale hand value
    {
        double gradu[3][3] = {{0, 1, 0}, {0, 0, 0}, {0, 0, 0}};
        const double up[3] = {1, 0, 0};
        const double gpp[3] = {0, 0, 0};
        const double rm[3] = {0, 1, 0};
        double out[3], K[3][3];
        condensed_subscale_update(up, gradu, gpp, rm, 0.05, 0.1, 2, out, K);
        check("condensed subscale hand value",
              std::abs(out[0] - (1.0 / 3.0 + 0.1 * 0.1 / 9.0)) < 1e-12 &&
                  std::abs(out[1] + 0.1 / 3.0) < 1e-12);
    }
    // quadrature exactness
    {
        bool ok = true;
        for (int kp = 1; kp <= 2; ++kp) {
            const GaussRule r = gauss_rule(kp + 2);
            const int p = 2 * kp + 3;
            double s = 0.0;
            for (int i = 0; i < r.size(); ++i) s += r.weights[i] * std::pow(r.points[i], p);
            ok = ok && std::abs(s - 1.0 / (p + 1)) < 1e-13 / (p + 1);
        }
        check("gauss rule integrates x^(2k'+3) exactly", ok);
    }
    // divergence compatibility via the exact coefficient map
    {
        const Mesh mesh = make_square_mesh(0.0, 1.0, 8);
        const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_no_slip(2));
        std::mt19937 rng(3);
        std::uniform_real_distribution<double> ur(-1.0, 1.0);
        Vector coeffs = Vector::Zero(space.total_dofs);
        for (int i = 0; i < space.velocity_dofs(); ++i) coeffs[i] = ur(rng);
        const auto divc = divergence_coefficients(space, coeffs.data());
        const IntegrationLayout layout = IntegrationLayout::build(space, 3);
        const BasisCache cache(space, layout, false);
        ElemData ed;
        QpFields f;
        double worst = 0.0;
        for (long e = 0; e < layout.n_elements; ++e) {
            cache.fill(e, ed);
            for (int qp = 0; qp < ed.nqp; ++qp) {
                eval_qp_fields(space, ed, coeffs, qp, false, false, f);
                double div_point = f.gradu[0][0] + f.gradu[1][1];
                // evaluate the mapped pressure-space field at the same point
                double div_spline = 0.0;
                const int nf = space.mesh.dim;
                const int nl = ed.n_loc[nf];
                for (int j = 0; j < nl; ++j)
                    div_spline += divc[ed.dofs[nf][j] - space.pressure_offset] *
                                  ed.value[nf][static_cast<size_t>(qp) * nl + j];
                worst = std::max(worst, std::abs(div_point - div_spline));
            }
        }
        check("divergence lies in the coarse pressure space", worst < 1e-10);
    }
    return failures == 0 ? 0 : 4;
}

} // namespace vms
