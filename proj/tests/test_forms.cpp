#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "vms/diagnostics.hpp"
#include "vms/forms.hpp"
#include "test_helpers.hpp"

using namespace vms;

TEST_CASE("tau_M dynamic: hand values, limits, monotonicity") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 10); // h = 0.1
    const ElementMetric G = metric(mesh, 0);
    CHECK(G.GG == doctest::Approx(2e4).epsilon(1e-13)); // 2 / h^4

    const double u0[3] = {0, 0, 0};
    const double tau = tau_m_dynamic(u0, 0.01, G, 36.0);
    // u = 0: tau = h^2 / (sqrt(2) C_inv nu)
    CHECK(tau == doctest::Approx(0.01 / (std::sqrt(2.0) * 36.0 * 0.01)).epsilon(1e-13));
    CHECK(tau == doctest::Approx(0.0196419).epsilon(1e-5));

    // nu = 0, u = (U, 0): tau = h / U
    const double uU[3] = {2.0, 0, 0};
    CHECK(tau_m_dynamic(uU, 0.0, G, 36.0) == doctest::Approx(0.1 / 2.0).epsilon(1e-13));

    CHECK_THROWS_AS(tau_m_dynamic(u0, 0.0, G, 36.0), InputError);

    // monotone nonincreasing in nu and |u|
    double prev = 1e300;
    for (double nu : {0.0, 0.01, 0.1, 1.0}) {
        const double t = tau_m_dynamic(uU, nu, G, 36.0);
        CHECK(t <= prev);
        prev = t;
    }
    prev = 1e300;
    for (double mag : {0.0, 0.5, 1.0, 4.0}) {
        const double um[3] = {mag, mag, 0};
        const double t = tau_m_dynamic(um, 0.01, G, 36.0);
        CHECK(t <= prev);
        prev = t;
    }
}

TEST_CASE("tau_M quasi-static: hand values and the dynamic limit") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 10);
    const ElementMetric G = metric(mesh, 0);
    const double u0[3] = {0, 0, 0};

    // u = 0, nu = 0 -> dt/2 (the only surviving term)
    CHECK(tau_m_quasistatic(u0, 0.0, G, 36.0, 0.05) ==
          doctest::Approx(0.025).epsilon(1e-13));

    // dt -> infinity recovers the dynamic value
    const double tau_d = tau_m_dynamic(u0, 0.01, G, 36.0);
    CHECK(tau_m_quasistatic(u0, 0.01, G, 36.0, 1e12) ==
          doctest::Approx(tau_d).epsilon(1e-12));

    // full formula at dt = 0.05: (4/dt^2 + C^2 nu^2 G:G)^{-1/2} = (1600 + 2592)^{-1/2}
    const double tau_q = tau_m_quasistatic(u0, 0.01, G, 36.0, 0.05);
    CHECK(tau_q == doctest::Approx(1.0 / std::sqrt(1600.0 + 1.0 / (tau_d * tau_d)))
                       .epsilon(1e-13));
    CHECK(tau_q == doctest::Approx(1.0 / std::sqrt(4192.0)).epsilon(1e-12));

    CHECK_THROWS_AS(tau_m_quasistatic(u0, 0.01, G, 36.0, 0.0), InputError);
}

TEST_CASE("tau_M refinement scaling in the advective and diffusive limits") {
    const double uU[3] = {1.0, 0.5, 0};
    const double u0[3] = {0, 0, 0};
    double prev_adv = 0.0, prev_diff = 0.0;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const int n = 10 << lvl;
        const ElementMetric G = metric(make_square_mesh(0.0, 1.0, n), 0);
        const double adv = tau_m_dynamic(uU, 0.0, G, 36.0);
        const double diff = tau_m_dynamic(u0, 0.01, G, 36.0);
        if (lvl > 0) {
            CHECK(prev_adv / adv == doctest::Approx(2.0).epsilon(1e-12));
            CHECK(prev_diff / diff == doctest::Approx(4.0).epsilon(1e-12));
        }
        prev_adv = adv;
        prev_diff = diff;
    }
}

TEST_CASE("tau_C rules") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 10); // trace(G) = 200
    const ElementMetric G = metric(mesh, 0);
    CHECK(tau_c_value(0.02, G, TauCRule::standard) == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(tau_c_value(0.02, G, TauCRule::zero) == 0.0);
    CHECK(tau_c_value(1e-9, G, TauCRule::standard) > 0.0);
    CHECK_THROWS_AS(tau_c_value(0.0, G, TauCRule::standard), InputError);
}

TEST_CASE("condensed subscale update: hand value, reductions, conditioning") {
    double gradu[3][3] = {{0, 1, 0}, {0, 0, 0}, {0, 0, 0}};
    const double up[3] = {1, 0, 0};
    const double gpp[3] = {0, 0, 0};
    const double rm[3] = {0, 1, 0};
    double out[3], K[3][3];

    condensed_subscale_update(up, gradu, gpp, rm, 0.05, 0.1, 2, out, K);
    CHECK(out[0] == doctest::Approx(1.0 / 3.0 + 0.01 / 9.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(-0.1 / 3.0).epsilon(1e-12));

    // gradu = 0: diagonal reduction (1 + dt/tau)^{-1} (w - dt (gpp + rM))
    double zero_grad[3][3] = {};
    const double rm2[3] = {0.3, -0.2, 0};
    condensed_subscale_update(up, zero_grad, gpp, rm2, 0.05, 0.1, 2, out, K);
    for (int i = 0; i < 2; ++i)
        CHECK(out[i] == doctest::Approx((up[i] - 0.1 * rm2[i]) / 3.0).epsilon(1e-13));

    // dt -> 0 keeps the previous subscale
    condensed_subscale_update(up, gradu, gpp, rm, 0.05, 1e-13, 2, out, K);
    CHECK(out[0] == doctest::Approx(up[0]).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(up[1]).epsilon(1e-9));

    // an ill-conditioned local matrix is reported
    double bad_grad[3][3] = {{-1.0 / 0.05 - 10.0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    bad_grad[0][0] = -(1.0 + 0.1 / 0.05) / 0.1 * (1.0 - 1e-14);
    CHECK_THROWS_AS(condensed_subscale_update(up, bad_grad, gpp, rm, 0.05, 0.1, 2, out, K),
                    NumericalError);
}

TEST_CASE("quasi-static subscale") {
    const double gpp[3] = {0.5, -0.5, 0};
    const double rm[3] = {-0.5, 0.5, 0}; // r_M = -grad p' -> u' = 0
    double out[3];
    quasi_static_subscale(rm, gpp, 0.02, 2, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);

    const double rm2[3] = {0.5, 2.5, 0}; // gpp + rm = (1, 2)
    quasi_static_subscale(rm2, gpp, 0.02, 2, out);
    CHECK(out[0] == doctest::Approx(-0.02).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(-0.04).epsilon(1e-15));
    CHECK_THROWS_AS(quasi_static_subscale(rm, gpp, 0.0, 2, out), InputError);
}

TEST_CASE("momentum residual on representable polynomial fields") {
    // u = (y^2, 0), p = x^2 + y^2 is contained in the k'=2 spaces, so an
    // exact interpolant drives the strong residual to round-off
    const double nu = 0.3;
    const Mesh mesh = make_square_mesh(0.0, 1.0, 3);
    const DivConformingSpace space = build_space(mesh, 2, BoundarySpec::all_no_slip(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 4);
    const BasisCache cache(space, layout, true);

    auto exact_u = [](const double* x, double* u) {
        u[0] = x[1] * x[1];
        u[1] = 0.0;
        u[2] = 0.0;
    };
    auto exact_p = [](const double* x) { return x[0] * x[0] + x[1] * x[1]; };
    const Vector coeffs = vms::test::interpolate_fields(space, exact_u, exact_p);

    auto source = [nu](const double* x, double /*t*/, double* f) {
        // u.grad u = 0, -nu lap u = (-2 nu, 0), grad p = (2x, 2y)
        f[0] = -2.0 * nu + 2.0 * x[0];
        f[1] = 2.0 * x[1];
        f[2] = 0.0;
    };

    ElemData ed;
    QpFields f;
    double worst = 0.0;
    const double du_dt[3] = {0, 0, 0};
    for (long e = 0; e < layout.n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(space, ed, coeffs, qp, true, false, f);
            for (int i = 0; i < 2; ++i) f.visc[i] *= nu;
            double fv[3];
            source(f.x, 0.0, fv);
            double rm[3];
            momentum_residual(du_dt, f, fv, 2, rm);
            worst = std::max({worst, std::abs(rm[0]), std::abs(rm[1])});
        }
    }
    CHECK(worst < 1e-8);

    // and the two trivial reductions
    QpFields zf{};
    const double fval[3] = {0.7, -0.2, 0};
    double rm[3];
    momentum_residual(du_dt, zf, fval, 2, rm);
    CHECK(rm[0] == doctest::Approx(-0.7).epsilon(1e-15));
    CHECK(rm[1] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("convection form identities") {
    std::mt19937 rng(42);
    const Mesh mesh = make_square_mesh(0.0, 2.0 * M_PI, 5);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_periodic(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);

    const Vector a = vms::test::random_solenoidal_2d(space, rng);
    const Vector u = vms::test::random_solenoidal_2d(space, rng);
    const Vector v = vms::test::random_solenoidal_2d(space, rng);

    // exact antisymmetry of the skew form
    const double skew_vv = convection_form(cache, a, v, v, ConvectionVariant::skew);
    CHECK(std::abs(skew_vv) < 1e-13);

    // c_cons(a, u, v) + c(a, v, u) = 0 by definition
    const double cons = convection_form(cache, a, u, v, ConvectionVariant::cons);
    const double cvu = convection_form(cache, a, v, u, ConvectionVariant::standard);
    CHECK(cons + cvu == doctest::Approx(0.0).epsilon(1e-13));

    // solenoidal a on the periodic box: all three variants agree up to
    // quadrature accuracy
    const double c0 = convection_form(cache, a, u, v, ConvectionVariant::standard);
    const double cs = convection_form(cache, a, u, v, ConvectionVariant::skew);
    const double scale = std::max({std::abs(c0), std::abs(cons), 1e-10});
    CHECK(std::abs(c0 - cons) / scale < 1e-10);
    CHECK(std::abs(c0 - cs) / scale < 1e-10);
}

TEST_CASE("static condensation matches the uncondensed fine-scale system") {
    // assemble the fine-scale equation over all quadrature-point unknowns of
    // a 2x2-element mesh and dense-solve it; the condensed update must agree
    std::mt19937 rng(77);
    const Mesh mesh = make_square_mesh(0.0, 1.0, 2);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_no_slip(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, true);

    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    Vector state = Vector::Zero(space.total_dofs);
    for (int i = 0; i < space.total_dofs; ++i) state[i] = ur(rng);
    Vector old_state = state;
    for (int i = 0; i < space.total_dofs; ++i) old_state[i] += 0.1 * ur(rng);

    const double dt = 0.07;
    const double nu = 0.05;
    const ElementMetric G = metric(mesh, 0);

    SubscaleState sub = SubscaleState::zero(layout);
    for (double& w : sub.uprime) w = ur(rng);

    const int dim = 2;
    ElemData ed;
    QpFields f;
    for (long e = 0; e < layout.n_elements; ++e) {
        cache.fill(e, ed);
        const int nunk = ed.nqp * dim;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nunk, nunk);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(nunk);
        std::vector<double> tau_store(ed.nqp);
        std::vector<std::array<double, 3>> rhs_store(ed.nqp);

        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(space, ed, state, qp, true, true, f);
            for (int i = 0; i < dim; ++i) f.visc[i] *= nu;
            double u_old[3];
            eval_velocity_value(space, ed, old_state, qp, u_old);
            double du_dt[3] = {(f.u[0] - u_old[0]) / dt, (f.u[1] - u_old[1]) / dt, 0};
            double rm[3];
            const double fv[3] = {0, 0, 0};
            momentum_residual(du_dt, f, fv, dim, rm);
            const double tau = tau_m_dynamic(f.u, nu, G, 36.0);
            tau_store[qp] = tau;

            const double w = ed.qp_weight[qp];
            const double* up_old = sub.at(e * ed.nqp + qp);
            for (int i = 0; i < dim; ++i) {
                const int row = qp * dim + i;
                // (u'_n - u'_{n-1})/dt + tau^{-1} u'_n + (grad u) u'_n
                //   = -(grad p' + r_M), tested with the L2-at-point basis
                A(row, row) += w * (1.0 / dt + 1.0 / tau);
                for (int j = 0; j < dim; ++j) A(row, qp * dim + j) += w * f.gradu[i][j];
                b(row) = w * (up_old[i] / dt - f.gradpp[i] - rm[i]);
                rhs_store[qp][i] = rm[i];
            }
        }
        const Eigen::VectorXd sol = A.fullPivLu().solve(b);

        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(space, ed, state, qp, true, true, f);
            for (int i = 0; i < dim; ++i) f.visc[i] *= nu;
            double out[3], K[3][3];
            condensed_subscale_update(sub.at(e * ed.nqp + qp), f.gradu, f.gradpp,
                                      rhs_store[qp].data(), tau_store[qp], dt, dim, out, K);
            for (int i = 0; i < dim; ++i)
                CHECK(out[i] == doctest::Approx(sol(qp * dim + i)).epsilon(1e-12));
        }
    }
}

namespace {

// directional finite-difference check of the assembled Jacobian with tau
// frozen at the base state
void check_jacobian(const DivConformingSpace& space, const BasisCache& cache,
                    NavierStokesAssembler& assembler, const Vector& x0, unsigned seed) {
    AssembledProblem problem(assembler, x0);
    assembler.freeze_tau_at(x0);

    const int n = problem.system_size();
    Vector R0(n);
    problem.assemble(&R0, &problem.jacobian_storage());

    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    Vector dir(n);
    for (int i = 0; i < n; ++i) dir[i] = ur(rng);
    dir.normalize();

    const double eps = 1e-6;
    AssembledProblem pp(assembler, x0);
    pp.apply_update(eps * dir);
    Vector Rp(n);
    pp.assemble(&Rp, nullptr);
    AssembledProblem pm(assembler, x0);
    pm.apply_update(-eps * dir);
    Vector Rm(n);
    pm.assemble(&Rm, nullptr);

    const Vector fd = (Rp - Rm) / (2.0 * eps);
    const Vector jd = problem.jacobian_storage().matrix() * dir;
    const double scale = std::max(jd.norm(), 1e-12);
    CHECK((fd - jd).norm() / scale < 1e-5);
    assembler.unfreeze_tau();
}

} // namespace

TEST_CASE("jacobian consistency across models and schemes (2d)") {
    std::mt19937 rng(3);
    const Mesh mesh = make_square_mesh(0.0, 2.0 * M_PI, 4);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_periodic(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, true);

    FluidParams params;
    params.nu = 0.02;
    params.source = [](const double* x, double t, double* fv) {
        fv[0] = 0.3 * std::sin(x[0] + t);
        fv[1] = -0.2 * std::cos(x[1]);
        fv[2] = 0.0;
    };

    Vector x0 = vms::test::random_solenoidal_2d(space, rng);
    std::uniform_real_distribution<double> ur(-0.5, 0.5);
    for (int i = space.pressure_offset; i < space.total_dofs; ++i) x0[i] = ur(rng);
    Vector x_old = vms::test::random_solenoidal_2d(space, rng);

    struct Combo {
        SubscaleModel model;
        TimeScheme scheme;
    };
    const Combo combos[] = {
        {SubscaleModel::dynamic, TimeScheme::backward_euler},
        {SubscaleModel::dynamic, TimeScheme::midpoint},
        {SubscaleModel::quasi_static, TimeScheme::backward_euler},
        {SubscaleModel::quasi_static, TimeScheme::midpoint},
        {SubscaleModel::quasi_static, TimeScheme::steady},
        {SubscaleModel::none, TimeScheme::backward_euler},
        {SubscaleModel::none, TimeScheme::steady},
    };
    unsigned seed = 100;
    for (const Combo& c : combos) {
        CAPTURE(static_cast<int>(c.model));
        CAPTURE(static_cast<int>(c.scheme));
        StabilizationConfig stab;
        stab.model = c.model;
        NavierStokesAssembler assembler(space, cache, params, stab);
        SubscaleState sub = SubscaleState::zero(layout);
        for (double& w : sub.uprime) w = 0.2 * ur(rng);
        const double dt = (c.scheme == TimeScheme::steady) ? 0.0 : 0.05;
        assembler.set_step(x_old, sub, 0.1, dt, c.scheme);
        check_jacobian(space, cache, assembler, x0, seed++);
    }
}

TEST_CASE("jacobian consistency (3d, dynamic midpoint)") {
    std::mt19937 rng(6);
    const Mesh mesh = make_cube_mesh(0.0, M_PI, 3);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_free_slip(3));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, true);

    FluidParams params;
    params.nu = 1.0 / 1600.0;
    std::uniform_real_distribution<double> ur(-0.5, 0.5);
    Vector x0 = Vector::Zero(space.total_dofs);
    for (int i = 0; i < space.total_dofs; ++i)
        if (!space.constrained[i]) x0[i] = ur(rng);
    Vector x_old = x0;
    for (int i = 0; i < space.total_dofs; ++i)
        if (!space.constrained[i]) x_old[i] += 0.1 * ur(rng);

    for (SubscaleModel model : {SubscaleModel::dynamic, SubscaleModel::quasi_static}) {
        StabilizationConfig stab;
        stab.model = model;
        NavierStokesAssembler assembler(space, cache, params, stab);
        SubscaleState sub = SubscaleState::zero(layout);
        for (double& w : sub.uprime) w = 0.2 * ur(rng);
        assembler.set_step(x_old, sub, 0.0, 0.05, TimeScheme::midpoint);
        check_jacobian(space, cache, assembler, x0, 55);
    }
}

TEST_CASE("with closures disabled the system is plain Galerkin") {
    // independent Galerkin assembly oracle: backward Euler + skew convection
    std::mt19937 rng(9);
    const Mesh mesh = make_square_mesh(0.0, 2.0 * M_PI, 4);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_periodic(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, true);

    FluidParams params;
    params.nu = 0.05;
    StabilizationConfig stab;
    stab.model = SubscaleModel::none;
    stab.tau_c_rule = TauCRule::zero;
    NavierStokesAssembler assembler(space, cache, params, stab);

    const Vector x_old = vms::test::random_solenoidal_2d(space, rng);
    Vector x0 = vms::test::random_solenoidal_2d(space, rng);
    std::uniform_real_distribution<double> ur(-0.5, 0.5);
    for (int i = space.pressure_offset; i < space.pressure_offset + space.pressure.total; ++i)
        x0[i] = ur(rng);
    SubscaleState sub = SubscaleState::zero(layout);
    const double dt = 0.04;
    assembler.set_step(x_old, sub, 0.0, dt, TimeScheme::backward_euler);

    AssembledProblem problem(assembler, x0);
    Vector R(problem.system_size());
    problem.assemble(&R, &problem.jacobian_storage());

    // ---- independent oracle ----
    const SystemMap& map = assembler.map();
    Eigen::MatrixXd J_ref = Eigen::MatrixXd::Zero(map.n_sys, map.n_sys);
    Vector R_ref = Vector::Zero(map.n_sys);
    ElemData ed;
    QpFields f;
    const int dim = 2;
    for (long e = 0; e < layout.n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            eval_qp_fields(space, ed, x0, qp, false, false, f);
            double u_old[3];
            eval_velocity_value(space, ed, x_old, qp, u_old);
            const double w = ed.qp_weight[qp];

            // residual rows: velocity tests
            for (int cf = 0; cf < dim; ++cf) {
                const int nl = ed.n_loc[cf];
                for (int i = 0; i < nl; ++i) {
                    const int rs = map.dof_to_sys[ed.dofs[cf][i]];
                    if (rs < 0) continue;
                    const double phi = ed.value[cf][static_cast<size_t>(qp) * nl + i];
                    const double* g = &ed.grad[cf][(static_cast<size_t>(qp) * nl + i) * 3];
                    double conv = 0.0, visc = 0.0, skew2 = 0.0;
                    for (int j = 0; j < dim; ++j) {
                        conv += f.gradu[cf][j] * f.u[j];
                        visc += params.nu * (f.gradu[cf][j] + f.gradu[j][cf]) * g[j];
                        skew2 += f.u[cf] * f.u[j] * g[j];
                    }
                    R_ref[rs] += w * (phi * ((f.u[cf] - u_old[cf]) / dt + 0.5 * conv) -
                                      0.5 * skew2 + visc - g[cf] * f.p);
                    // jacobian: velocity trials
                    for (int tf = 0; tf < dim; ++tf) {
                        const int nlb = ed.n_loc[tf];
                        for (int b = 0; b < nlb; ++b) {
                            const int cs = map.dof_to_sys[ed.dofs[tf][b]];
                            if (cs < 0) continue;
                            const double phib = ed.value[tf][static_cast<size_t>(qp) * nlb + b];
                            const double* gb =
                                &ed.grad[tf][(static_cast<size_t>(qp) * nlb + b) * 3];
                            double v = 0.0;
                            if (tf == cf) {
                                double ug = 0.0, lap = 0.0;
                                for (int j = 0; j < dim; ++j) {
                                    ug += f.u[j] * gb[j];
                                    lap += params.nu * g[j] * gb[j];
                                }
                                v += phi * (phib / dt + 0.5 * ug) + lap;
                            }
                            v += phi * 0.5 * phib * f.gradu[cf][tf];
                            v += params.nu * g[tf] * gb[cf];
                            // d of the skew C-part: -1/2 d(u_cf u_j) . g_j
                            for (int j = 0; j < dim; ++j) {
                                double dprod = 0.0;
                                if (cf == tf) dprod += phib * f.u[j];
                                if (j == tf) dprod += f.u[cf] * phib;
                                v -= 0.5 * dprod * g[j];
                            }
                            J_ref(rs, cs) += w * v;
                        }
                    }
                    // pressure trial
                    const int pf = dim;
                    const int nlp = ed.n_loc[pf];
                    for (int b = 0; b < nlp; ++b) {
                        const int cs = map.dof_to_sys[ed.dofs[pf][b]];
                        if (cs < 0) continue;
                        J_ref(rs, cs) -= w * g[cf] *
                                         ed.value[pf][static_cast<size_t>(qp) * nlp + b];
                    }
                }
            }
            // continuity rows
            const int pf = dim;
            const int nlp = ed.n_loc[pf];
            for (int i = 0; i < nlp; ++i) {
                const int rs = map.dof_to_sys[ed.dofs[pf][i]];
                if (rs < 0) continue;
                const double psi = ed.value[pf][static_cast<size_t>(qp) * nlp + i];
                R_ref[rs] += w * psi * (f.gradu[0][0] + f.gradu[1][1]);
                for (int tf = 0; tf < dim; ++tf) {
                    const int nlb = ed.n_loc[tf];
                    for (int b = 0; b < nlb; ++b) {
                        const int cs = map.dof_to_sys[ed.dofs[tf][b]];
                        if (cs < 0) continue;
                        J_ref(rs, cs) += w * psi *
                                         ed.grad[tf][(static_cast<size_t>(qp) * nlb + b) * 3 + tf];
                    }
                }
            }
        }
    }

    // compare residuals and matrices except the pinned pressure row
    const int pin_row = assembler.pins()[0].sys_row;
    double worst_r = 0.0, worst_j = 0.0, scale = 0.0;
    const Eigen::MatrixXd J_dense = Eigen::MatrixXd(problem.jacobian_storage().matrix());
    for (int r = 0; r < map.n_sys; ++r) {
        if (r == pin_row) continue;
        worst_r = std::max(worst_r, std::abs(R[r] - R_ref[r]));
        for (int c = 0; c < map.n_sys; ++c) {
            worst_j = std::max(worst_j, std::abs(J_dense(r, c) - J_ref(r, c)));
            scale = std::max(scale, std::abs(J_ref(r, c)));
        }
    }
    CHECK(worst_r < 1e-12);
    CHECK(worst_j < 1e-12 * std::max(1.0, scale));
}
