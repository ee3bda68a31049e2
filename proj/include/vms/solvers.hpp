#ifndef VMS_SOLVERS_HPP
#define VMS_SOLVERS_HPP

#include <memory>
#include <vector>

#include "vms/assembly.hpp"

namespace vms {

struct NonlinearSettings {
    double rel_tol = 1e-8;
    double abs_tol = 1e-12;
    int max_iters = 20;
    double relaxation = 1.0;
    // Reuse the factorized Jacobian across iterations (and steps) until the
    // residual contraction stalls; refreshed automatically.
    bool chord_iterations = false;
    double chord_refresh_ratio = 0.5; // refresh when ||R_k+1|| > ratio * ||R_k||
    int chord_max_extra_iters = 40;   // iteration budget in chord mode

    void validate() const {
        if (rel_tol <= 0 || abs_tol <= 0) throw InputError("NonlinearSettings: tolerances must be > 0");
        if (max_iters < 1) throw InputError("NonlinearSettings: max_iters must be >= 1");
        if (relaxation <= 0 || relaxation > 1) throw InputError("NonlinearSettings: relaxation in (0,1]");
    }
};

struct NewtonReport {
    bool converged = false;
    int iterations = 0;      // linear solves performed
    int factorizations = 0;
    std::vector<double> residual_history;
};

/// Nonconvergence carries the iteration history so callers can backtrack
/// (e.g. cut the time step) with full information.
struct NonconvergenceError : SolverError {
    NewtonReport report;
    explicit NonconvergenceError(const std::string& what, NewtonReport rep)
        : SolverError(what), report(std::move(rep)) {}
};

/// Sparse direct factorization (UMFPACK when available, Eigen SparseLU
/// otherwise) with symbolic/numeric split so patterns are analyzed once.
class DirectSolver {
public:
    DirectSolver();
    ~DirectSolver();
    DirectSolver(DirectSolver&&) noexcept;
    DirectSolver& operator=(DirectSolver&&) noexcept;

    void analyze(const SpMat& A);
    void factorize(const SpMat& A); // analyze() implied on first use
    Vector solve(const Vector& b) const;
    bool ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot solve of a square sparse system with a residual accuracy check.
Vector solve_linear(const SpMat& A, const Vector& b);

/// Nonlinear system interface for the Newton loop. The state vector lives in
/// the problem object; dx updates are scattered through its dof map.
class NonlinearSystem {
public:
    virtual ~NonlinearSystem() = default;
    virtual int system_size() const = 0;
    /// Assemble residual and/or Jacobian at the current state. Either output
    /// may be null.
    virtual void assemble(Vector* R, CsMatrix* J) = 0;
    virtual const CsMatrix& jacobian_storage() const = 0;
    virtual CsMatrix& jacobian_storage() = 0;
    virtual void apply_update(const Vector& dx) = 0;
};

/// Newton (or chord-Newton) iteration; `solver` retains its factorization,
/// so repeated calls on the same pattern skip symbolic analysis and chord
/// mode can start from a previous step's factorization.
NewtonReport solve_nonlinear(NonlinearSystem& problem, DirectSolver& solver,
                             const NonlinearSettings& settings);

} // namespace vms

#endif
