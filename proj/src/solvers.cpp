#include "vms/solvers.hpp"

#include <cmath>

#ifdef VMS_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#else
#include <Eigen/SparseLU>
#endif

namespace vms {

struct DirectSolver::Impl {
#ifdef VMS_HAVE_UMFPACK
    Eigen::UmfPackLU<SpMat> lu;
    Impl() {
        // structurally symmetric saddle systems; nested-dissection ordering
        // keeps the 3D fill manageable
        lu.umfpackControl()[UMFPACK_STRATEGY] = UMFPACK_STRATEGY_SYMMETRIC;
        lu.umfpackControl()[UMFPACK_ORDERING] = UMFPACK_ORDERING_CHOLMOD;
    }
#else
    Eigen::SparseLU<SpMat> lu;
#endif
    bool analyzed = false;
    bool factorized = false;
};

DirectSolver::DirectSolver() : impl_(std::make_unique<Impl>()) {}
DirectSolver::~DirectSolver() = default;
DirectSolver::DirectSolver(DirectSolver&&) noexcept = default;
DirectSolver& DirectSolver::operator=(DirectSolver&&) noexcept = default;

void DirectSolver::analyze(const SpMat& A) {
    impl_->lu.analyzePattern(A);
    impl_->analyzed = true;
    impl_->factorized = false;
}

void DirectSolver::factorize(const SpMat& A) {
    if (!impl_->analyzed) analyze(A);
    impl_->lu.factorize(A);
    if (impl_->lu.info() != Eigen::Success)
        throw SolverError("linear solve: factorization failed, matrix is singular or nearly "
                          "singular (is the pressure mean pinned?)");
    impl_->factorized = true;
}

Vector DirectSolver::solve(const Vector& b) const {
    if (!impl_->factorized) throw SolverError("DirectSolver::solve before factorize");
    Vector x = impl_->lu.solve(b);
    if (impl_->lu.info() != Eigen::Success) throw SolverError("linear solve: back substitution failed");
    return x;
}

bool DirectSolver::ready() const { return impl_->factorized; }

Vector solve_linear(const SpMat& A, const Vector& b) {
    if (A.rows() != A.cols() || A.rows() != b.size())
        throw InputError("solve_linear: system must be square and match the rhs");
    DirectSolver solver;
    solver.factorize(A);
    Vector x = solver.solve(b);
    const double bn = b.norm();
    const double rn = (A * x - b).norm();
    if (bn > 0 && rn > 1e-10 * bn)
        throw SolverError("linear solve: residual accuracy not met, ||Ax-b|| = " +
                          std::to_string(rn) + " for ||b|| = " + std::to_string(bn));
    return x;
}

NewtonReport solve_nonlinear(NonlinearSystem& problem, DirectSolver& solver,
                             const NonlinearSettings& settings) {
    settings.validate();
    NewtonReport report;

    Vector R(problem.system_size());
    problem.assemble(&R, nullptr);
    double rnorm = R.norm();
    report.residual_history.push_back(rnorm);
    const double r0 = rnorm;
    const double target = std::max(settings.rel_tol * r0, settings.abs_tol);

    const int iter_budget =
        settings.chord_iterations ? settings.max_iters + settings.chord_max_extra_iters
                                  : settings.max_iters;
    bool have_fresh_jacobian = false;

    while (true) {
        if (!std::isfinite(rnorm)) throw NumericalError("Newton: non-finite residual norm");
        if (rnorm <= target) {
            report.converged = true;
            return report;
        }
        if (report.iterations >= iter_budget) break;

        const bool reuse = settings.chord_iterations && solver.ready() && !have_fresh_jacobian;
        if (!reuse) {
            problem.assemble(nullptr, &problem.jacobian_storage());
            solver.factorize(problem.jacobian_storage().matrix());
            ++report.factorizations;
            have_fresh_jacobian = true;
        }

        const Vector dx = solver.solve(-R);
        problem.apply_update(settings.relaxation * dx);
        ++report.iterations;

        problem.assemble(&R, nullptr);
        const double rnew = R.norm();
        report.residual_history.push_back(rnew);

        if (settings.chord_iterations) {
            // stalling contraction: refresh the factorization once, then give up
            if (rnew > settings.chord_refresh_ratio * rnorm && rnew > target) {
                if (!have_fresh_jacobian) {
                    problem.assemble(nullptr, &problem.jacobian_storage());
                    solver.factorize(problem.jacobian_storage().matrix());
                    ++report.factorizations;
                    have_fresh_jacobian = true;
                } else if (rnew > rnorm) {
                    break; // diverging with a fresh Jacobian
                }
            } else {
                have_fresh_jacobian = false; // keep reusing while it contracts
            }
        } else {
            have_fresh_jacobian = false;
        }
        rnorm = rnew;
    }

    throw NonconvergenceError("Newton: no convergence after " +
                                  std::to_string(report.iterations) + " iterations, residual " +
                                  std::to_string(rnorm) + " (target " + std::to_string(target) + ")",
                              report);
}

} // namespace vms
