#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vms/cases.hpp"
#include "vms/diagnostics.hpp"
#include "test_helpers.hpp"

using namespace vms;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("stokes projector reproduces discrete targets (idempotence)") {
    std::mt19937 rng(31);
    const Mesh mesh = make_square_mesh(0.0, 2.0 * M_PI, 6);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_periodic(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);

    Vector target_coeffs = vms::test::random_solenoidal_2d(space, rng);
    const TargetField target = spline_target(space, target_coeffs);
    const Vector projected = stokes_projector(space, cache, target, 0.01, 0.1);
    for (int i = 0; i < space.velocity_dofs(); ++i)
        CHECK(projected[i] == doctest::Approx(target_coeffs[i]).epsilon(1e-9));
}

TEST_CASE("stokes projector of zero is zero") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 4);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_no_slip(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);
    TargetField target;
    target.value = [](const double*, double* u) { u[0] = u[1] = 0.0; };
    target.gradient = [](const double*, double g[3][3]) { (void)g; };
    const Vector projected = stokes_projector(space, cache, target, 1.0, 0.1);
    CHECK(projected.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("projected 3d vortex initial condition is pointwise divergence-free") {
    const Mesh mesh = make_cube_mesh(0.0, kPi, 6);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_free_slip(3));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);
    const CoarseState state = tgv3d_initial_state(space, cache, 1.0 / 1600.0);

    CHECK(div_sup(cache, state.coeffs) < 1e-9);
    // and it actually resembles the vortex: domain-averaged energy near 1/8
    CHECK(kinetic_energy(cache, state.coeffs) == doctest::Approx(0.125).epsilon(0.02));
}

TEST_CASE("2d vortex initial state: divergence-free and energy 1/4") {
    const Mesh mesh = make_square_mesh(0.0, 2.0 * kPi, 8);
    const DivConformingSpace space = build_space(mesh, 1, BoundarySpec::all_periodic(2));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);
    const CoarseState state = tgv2d_initial_state(space, cache, 0.01);
    CHECK(div_sup(cache, state.coeffs) < 1e-9);
    CHECK(kinetic_energy(cache, state.coeffs) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("solenoidal lifting: zero data, cavity data, idempotence") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 6);
    LdcCase ldc = make_ldc_case(0.01);
    const DivConformingSpace space =
        build_space(mesh, 2, BoundarySpec::all_prescribed(2, ldc.boundary_velocity));
    const IntegrationLayout layout = IntegrationLayout::build(space, 4);
    const BasisCache cache(space, layout, false);

    // zero boundary data gives the zero vector
    const Vector zero_lift =
        solenoidal_lifting(space, cache, [](const double*, double* u) { u[0] = u[1] = 0.0; });
    CHECK(zero_lift.lpNorm<Eigen::Infinity>() < 1e-12);

    // the regularized-cavity field lifts to a pointwise divergence-free field
    const Vector lift = solenoidal_lifting(space, cache, ldc.boundary_velocity);
    CHECK(div_sup(cache, lift) < 1e-9);
    CHECK(lift.lpNorm<Eigen::Infinity>() > 0.1); // nontrivial

    // projection idempotence on an exactly representable solenoidal field
    std::mt19937 rng(7);
    const Vector v = vms::test::random_solenoidal_2d(space, rng);
    const TargetField tv = spline_target(space, v);
    VelocityField vf = [&tv](const double* x, double* u) { tv.value(x, u); };
    const Vector relift = solenoidal_lifting(space, cache, vf);
    for (int i = 0; i < space.velocity_dofs(); ++i)
        CHECK(relift[i] == doctest::Approx(v[i]).epsilon(1e-10));
}

TEST_CASE("iterated penalty lifting agrees with the direct saddle solve") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 5);
    LdcCase ldc = make_ldc_case(0.01);
    const DivConformingSpace space =
        build_space(mesh, 1, BoundarySpec::all_prescribed(2, ldc.boundary_velocity));
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);

    const Vector direct = solenoidal_lifting(space, cache, ldc.boundary_velocity);
    const Vector penalty = solenoidal_lifting_iterated_penalty(space, cache,
                                                               ldc.boundary_velocity);
    for (int i = 0; i < space.velocity_dofs(); ++i)
        CHECK(penalty[i] == doctest::Approx(direct[i]).epsilon(1e-7));
    CHECK(div_sup(cache, penalty) < 1e-8);
}

TEST_CASE("incompatible boundary data is rejected") {
    const Mesh mesh = make_square_mesh(0.0, 1.0, 4);
    VelocityField bad = [](const double* x, double* u) {
        u[0] = x[0]; // net outflow
        u[1] = 0.0;
    };
    BoundarySpec bc = BoundarySpec::all_prescribed(2, bad);
    const DivConformingSpace space = build_space(mesh, 1, bc);
    const IntegrationLayout layout = IntegrationLayout::build(space, 3);
    const BasisCache cache(space, layout, false);
    CHECK_THROWS_AS(solenoidal_lifting(space, cache, bad), DataError);
}
