#ifndef VMS_TIME_INTEGRATION_HPP
#define VMS_TIME_INTEGRATION_HPP

#include <optional>
#include <string>

#include "vms/diagnostics.hpp"
#include "vms/forms.hpp"

namespace vms {

struct TimeSettings {
    double dt = 0.0;
    double T = 0.0;
    TimeScheme scheme = TimeScheme::midpoint;

    // dt proportional to h: dt = dt_ref * (h / h_ref) when enabled
    bool dt_proportional_to_h = false;
    double dt_ref = 0.0;
    double h_ref = 0.0;

    double effective_dt(double h) const {
        if (!dt_proportional_to_h) return dt;
        return dt_ref * (h / h_ref);
    }
    void validate() const {
        if (scheme == TimeScheme::steady) throw InputError("TimeSettings: scheme must be transient");
        if (dt_proportional_to_h) {
            if (!(dt_ref > 0) || !(h_ref > 0))
                throw InputError("TimeSettings: dt_ref and h_ref must be > 0");
        } else if (!(dt > 0)) {
            throw InputError("TimeSettings: dt must be > 0");
        }
        if (!(T > 0)) throw InputError("TimeSettings: T must be >= dt");
    }
};

/// One accepted time step: converged nonlinear solve, subscale advancement
/// and per-step diagnostics. Throws NonconvergenceError on failure (the
/// caller may cut dt). The AssembledProblem carries the sparse pattern and
/// is reused across steps.
DiagnosticsRecord step(NavierStokesAssembler& assembler, DirectSolver& solver,
                       AssembledProblem& problem, CoarseState& state, SubscaleState& subscales,
                       double dt, TimeScheme scheme, const NonlinearSettings& newton);

/// Convenience overload building the problem for a single step.
DiagnosticsRecord step(NavierStokesAssembler& assembler, DirectSolver& solver,
                       CoarseState& state, SubscaleState& subscales, double dt,
                       TimeScheme scheme, const NonlinearSettings& newton);

struct TransientResult {
    std::vector<DiagnosticsRecord> records;
    CoarseState final_state;
    SubscaleState final_subscales;
};

struct TransientOptions {
    NonlinearSettings newton;
    int max_dt_halvings = 3; // per failing step
    std::string checkpoint_path;   // optional, written at the end
    double mass_tolerance_scale = 1e-9; // div_max <= scale * U / h enforced
};

/// Run from state.t to T with diagnostics at every accepted step; on solver
/// nonconvergence the failing step is halved (up to max_dt_halvings) before
/// erroring out. Dissipation rates are filled from the energy history.
TransientResult run_transient(NavierStokesAssembler& assembler, CoarseState state,
                              SubscaleState subscales, const TimeSettings& time,
                              const TransientOptions& options);

// checkpoint: versioned text format, exact (17 significant digit) round trip
void write_checkpoint(const std::string& path, const CoarseState& state,
                      const SubscaleState& subscales);
void read_checkpoint(const std::string& path, CoarseState& state, SubscaleState& subscales);

} // namespace vms

#endif
