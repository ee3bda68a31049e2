#include "vms/time_integration.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace vms {

DiagnosticsRecord step(NavierStokesAssembler& assembler, DirectSolver& solver,
                       CoarseState& state, SubscaleState& subscales, double dt,
                       TimeScheme scheme, const NonlinearSettings& newton) {
    AssembledProblem problem(assembler, state.coeffs);
    return step(assembler, solver, problem, state, subscales, dt, scheme, newton);
}

DiagnosticsRecord step(NavierStokesAssembler& assembler, DirectSolver& solver,
                       AssembledProblem& problem, CoarseState& state, SubscaleState& subscales,
                       double dt, TimeScheme scheme, const NonlinearSettings& newton) {
    assembler.set_step(state.coeffs, subscales, state.t, dt, scheme);
    problem.set_state(state.coeffs);
    const NewtonReport report = solve_nonlinear(problem, solver, newton);

    // recover end-of-step fields; midpoint solves for the mid-step values
    Vector x_new = problem.state();
    if (scheme == TimeScheme::midpoint) {
        const DivConformingSpace& sp = assembler.cache().space();
        for (int dof = 0; dof < sp.velocity_dofs(); ++dof)
            x_new[dof] = 2.0 * x_new[dof] - state.coeffs[dof];
    }

    // subscale synchronization from the converged solve
    SubscaleState new_subscales = subscales;
    assembler.update_subscales(problem.state(), new_subscales);

    // zero-mean shift of both pressures (the pin rows enforce this up to
    // solver tolerance; the shift makes it exact)
    {
        const DivConformingSpace& sp = assembler.cache().space();
        MeanConstraint mc = pressure_mean_constraint(sp, false);
        mc.shift_to(x_new.data() + sp.pressure_offset, 0.0);
        if (sp.fine_pressure.total > 0) {
            MeanConstraint mf = pressure_mean_constraint(sp, true);
            mf.shift_to(x_new.data() + sp.fine_pressure_offset, 0.0);
        }
    }

    state.coeffs = std::move(x_new);
    state.t += dt;
    subscales = std::move(new_subscales);

    const StepDiagnostics d = assembler.diagnostics(state.coeffs, subscales);
    DiagnosticsRecord rec;
    rec.t = state.t;
    rec.E_k = d.kinetic_energy;
    rec.eps_resolved = d.eps_resolved;
    rec.div_max = d.div_max;
    rec.newton_iters = report.iterations;
    rec.assumption2_violated = d.assumption2_violations > 0;
    rec.E_total = d.total_energy;
    rec.u_max = d.u_max;
    return rec;
}

TransientResult run_transient(NavierStokesAssembler& assembler, CoarseState state,
                              SubscaleState subscales, const TimeSettings& time,
                              const TransientOptions& options) {
    time.validate();
    const DivConformingSpace& sp = assembler.cache().space();
    const double h = sp.mesh.h_max();
    const double dt_nominal = time.effective_dt(h);
    if (!(dt_nominal > 0)) throw InputError("run_transient: nonpositive time step");

    TransientResult result;
    DirectSolver solver;
    AssembledProblem problem(assembler, state.coeffs);
    const double t_end = time.T;
    double u_scale = 0.0;

    while (state.t < t_end - 1e-12 * t_end) {
        double dt = std::min(dt_nominal, t_end - state.t);
        int halvings = 0;
        while (true) {
            try {
                CoarseState trial_state = state;
                SubscaleState trial_sub = subscales;
                DiagnosticsRecord rec =
                    step(assembler, solver, problem, trial_state, trial_sub, dt, time.scheme,
                         options.newton);
                state = std::move(trial_state);
                subscales = std::move(trial_sub);

                u_scale = std::max(u_scale, rec.u_max);
                const double div_bound =
                    options.mass_tolerance_scale * std::max(u_scale, 1e-12) / h;
                if (rec.div_max > div_bound)
                    throw NumericalError("run_transient: discrete mass conservation violated, "
                                         "max |div u| = " +
                                         std::to_string(rec.div_max));
                result.records.push_back(rec);
                break;
            } catch (const NonconvergenceError&) {
                if (++halvings > options.max_dt_halvings) throw;
                dt *= 0.5;
            }
        }
    }

    dissipation_split(result.records);
    if (!options.checkpoint_path.empty())
        write_checkpoint(options.checkpoint_path, state, subscales);
    result.final_state = std::move(state);
    result.final_subscales = std::move(subscales);
    return result;
}

void write_checkpoint(const std::string& path, const CoarseState& state,
                      const SubscaleState& subscales) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw IoError("write_checkpoint: cannot open " + path);
    std::fprintf(fp, "vms-checkpoint 1\n");
    std::fprintf(fp, "t %.17g\n", state.t);
    std::fprintf(fp, "coeffs %ld\n", static_cast<long>(state.coeffs.size()));
    for (long i = 0; i < state.coeffs.size(); ++i)
        std::fprintf(fp, "%.17g\n", state.coeffs[i]);
    std::fprintf(fp, "subscales %ld\n", static_cast<long>(subscales.uprime.size()));
    for (double v : subscales.uprime) std::fprintf(fp, "%.17g\n", v);
    if (std::fclose(fp) != 0) throw IoError("write_checkpoint: write failure on " + path);
}

void read_checkpoint(const std::string& path, CoarseState& state, SubscaleState& subscales) {
    std::ifstream in(path);
    if (!in) throw IoError("read_checkpoint: cannot open " + path);
    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (tag != "vms-checkpoint" || version != 1)
        throw IoError("read_checkpoint: unrecognized format in " + path);
    long n = 0;
    in >> tag >> state.t;
    if (tag != "t") throw IoError("read_checkpoint: malformed header in " + path);
    in >> tag >> n;
    if (tag != "coeffs" || n < 0) throw IoError("read_checkpoint: malformed header in " + path);
    state.coeffs.resize(n);
    for (long i = 0; i < n; ++i) in >> state.coeffs[i];
    in >> tag >> n;
    if (tag != "subscales" || n < 0)
        throw IoError("read_checkpoint: malformed header in " + path);
    subscales.uprime.resize(n);
    for (long i = 0; i < n; ++i) in >> subscales.uprime[i];
    if (in.fail()) throw IoError("read_checkpoint: truncated data in " + path);
}

} // namespace vms
