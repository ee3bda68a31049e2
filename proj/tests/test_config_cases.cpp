#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "vms/cases.hpp"

using namespace vms;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("config parsing: minimal files, defaults, conversions") {
    const CaseConfig c = parse_config_text("case=tgv2d\nk_prime=1\nn=16\nT=1\nnu=0.01\ndt=0.05\n");
    CHECK(c.case_id == "tgv2d");
    CHECK(c.scheme == TimeScheme::midpoint);          // default
    CHECK(c.model == SubscaleModel::quasi_static);    // default
    CHECK(c.c_inv == 36.0);
    CHECK(c.viscosity() == doctest::Approx(0.01));

    // Re conversion with unit length and velocity scales
    const CaseConfig ldc = parse_config_text("case=ldc\nre=100\nn=8\n");
    CHECK(ldc.viscosity() == doctest::Approx(0.01));

    // comments and blank lines are fine
    CHECK_NOTHROW(parse_config_text("# a comment\n\ncase=ldc # inline\nre=100\nn=8\n"));
}

TEST_CASE("config validation errors name the offending key") {
    auto message_of = [](const std::string& text) {
        try {
            parse_config_text(text);
            return std::string();
        } catch (const InputError& e) {
            return std::string(e.what());
        }
    };
    CHECK(message_of("case=ldc\nre=100\nn=8\nwhatever=1\n").find("whatever") !=
          std::string::npos);
    CHECK(message_of("case=ldc\nre=100\nre=200\nn=8\n").find("duplicate") != std::string::npos);
    CHECK(message_of("case=ldc\nre=100\nnu=0.01\nn=8\n").find("not both") != std::string::npos);
    CHECK(message_of("case=tgv2d\nn=16\nT=1\ndt=0.1\n").find("nu") != std::string::npos);
    CHECK(message_of("case=tgv2d\nn=16\nnu=0.01\ndt=0.1\n").find("T") != std::string::npos);
    CHECK(message_of("case=nope\n").find("nope") != std::string::npos);
    CHECK(message_of("case=ldc\nre=abc\nn=8\n").find("re") != std::string::npos);
    CHECK(message_of("garbage line\n").find("key=value") != std::string::npos);
    // dt must come with h_ref when proportional
    CHECK(message_of("case=tgv2d\nn=16\nnu=0.01\nT=1\ndt_ref=0.1\n").find("h_ref") !=
          std::string::npos);
}

TEST_CASE("command-line overrides win over file values") {
    const CaseConfig c = parse_config_text("case=ldc\nre=100\nn=8\n",
                                           {{"n", "16"}, {"k_prime", "2"}});
    CHECK(c.n == 16);
    CHECK(c.k_prime == 2);
    CHECK_THROWS_AS(parse_config_text("case=ldc\nre=100\nn=8\n", {{"n", "16"}, {"n", "32"}}),
                    InputError);
}

TEST_CASE("cavity exact data: no-penetration boundaries and validated source") {
    const LdcCase c = make_ldc_case(0.01);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ur(0.0, 1.0);

    // normal components vanish on all faces (each factor has roots at 0, 1)
    for (int i = 0; i < 20; ++i) {
        const double s = ur(rng);
        double u[3];
        double x0[3] = {0.0, s, 0.0}, x1[3] = {1.0, s, 0.0};
        c.exact_u.value(x0, u);
        CHECK(std::abs(u[0]) < 1e-14);
        c.exact_u.value(x1, u);
        CHECK(std::abs(u[0]) < 1e-14);
        double y0[3] = {s, 0.0, 0.0}, y1[3] = {s, 1.0, 0.0};
        c.exact_u.value(y0, u);
        CHECK(std::abs(u[1]) < 1e-14);
        c.exact_u.value(y1, u);
        CHECK(std::abs(u[1]) < 1e-14);
        // the lid actually moves
        c.exact_u.value(y1, u);
    }
    double lid[3] = {0.5, 1.0, 0.0}, u[3];
    c.exact_u.value(lid, u);
    CHECK(u[0] == doctest::Approx(1.0)); // unit lid speed at the center

    // analytic divergence vanishes
    for (int i = 0; i < 20; ++i) {
        double x[3] = {ur(rng), ur(rng), 0.0};
        double g[3][3] = {};
        c.exact_u.gradient(x, g);
        CHECK(std::abs(g[0][0] + g[1][1]) < 1e-13);
    }

    // finite-difference validation of the generated source
    const double step = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        double x[3] = {0.05 + 0.9 * ur(rng), 0.05 + 0.9 * ur(rng), 0.0};
        double f[3];
        c.source(x, 0.0, f);
        for (int i = 0; i < 2; ++i) {
            double conv = 0.0, lap = 0.0;
            double u0[3];
            c.exact_u.value(x, u0);
            for (int d = 0; d < 2; ++d) {
                double xp[3] = {x[0], x[1], 0.0}, xm[3] = {x[0], x[1], 0.0};
                xp[d] += step;
                xm[d] -= step;
                double up[3], um[3];
                c.exact_u.value(xp, up);
                c.exact_u.value(xm, um);
                conv += u0[d] * (up[i] - um[i]) / (2 * step);
                lap += (up[i] - 2 * u0[i] + um[i]) / (step * step);
            }
            double xp[3] = {x[0], x[1], 0.0}, xm[3] = {x[0], x[1], 0.0};
            xp[i] += step;
            xm[i] -= step;
            const double gp = (c.exact_p(xp) - c.exact_p(xm)) / (2 * step);
            CHECK(std::abs(conv - 0.01 * lap + gp - f[i]) < 1e-6);
        }
    }
}

TEST_CASE("2d vortex exact solution: energy law and solenoidality") {
    const Tgv2dCase c{0.02};
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> ur(0.0, 2.0 * kPi);
    for (double t : {0.0, 0.7}) {
        const ExactVelocity e = c.exact_at(t);
        for (int i = 0; i < 15; ++i) {
            double x[3] = {ur(rng), ur(rng), 0.0};
            double g[3][3] = {};
            e.gradient(x, g);
            CHECK(std::abs(g[0][0] + g[1][1]) < 1e-14);
        }
    }
    // analytic E_k(t)/E_k(0) = exp(-4 nu t): quadrature over the box
    const GaussRule rule = gauss_rule(5);
    auto energy_at = [&](double t) {
        const ExactVelocity e = c.exact_at(t);
        double energy = 0.0;
        const int n = 8;
        const double h = 2.0 * kPi / n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int q0 = 0; q0 < 5; ++q0)
                    for (int q1 = 0; q1 < 5; ++q1) {
                        double x[3] = {(i + rule.points[q0]) * h, (j + rule.points[q1]) * h,
                                       0.0};
                        double u[3];
                        e.value(x, u);
                        energy += rule.weights[q0] * rule.weights[q1] * h * h * 0.5 *
                                  (u[0] * u[0] + u[1] * u[1]);
                    }
        return energy / std::pow(2.0 * kPi, 2);
    };
    const double ratio = energy_at(1.0) / energy_at(0.0);
    CHECK(ratio == doctest::Approx(std::exp(-4.0 * 0.02)).epsilon(1e-9));
    CHECK(energy_at(0.0) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("3d vortex initial condition: planar and solenoidal") {
    const ExactVelocity e = tgv3d_initial_condition();
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ur(0.0, kPi);
    for (int i = 0; i < 25; ++i) {
        double x[3] = {ur(rng), ur(rng), ur(rng)};
        double u[3];
        e.value(x, u);
        CHECK(u[2] == 0.0);
        double g[3][3] = {};
        e.gradient(x, g);
        CHECK(std::abs(g[0][0] + g[1][1] + g[2][2]) < 1e-14);
    }
}

TEST_CASE("the quick invariant suite passes") { CHECK(run_check() == 0); }

TEST_CASE("run_case writes csv and metadata with the documented naming") {
    CaseConfig cfg = parse_config_text("case=ldc\nre=100\nn=8\nout_dir=/tmp/vms_case_out\n");
    CHECK(run_case(cfg) == 0);
    std::FILE* fp = std::fopen("/tmp/vms_case_out/ldc_1_8.csv", "r");
    REQUIRE(fp != nullptr);
    std::fclose(fp);
    fp = std::fopen("/tmp/vms_case_out/ldc_1_8.meta", "r");
    REQUIRE(fp != nullptr);
    char line[256];
    bool found_case = false;
    while (std::fgets(line, sizeof line, fp))
        if (std::string(line).find("case=ldc") != std::string::npos) found_case = true;
    std::fclose(fp);
    CHECK(found_case);
}
