#ifndef VMS_ERRORS_HPP
#define VMS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vms {

/// Bad arguments, malformed configuration, points outside the domain.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input data that is structurally valid but physically inconsistent
/// (e.g. Dirichlet data with nonzero net flux, non-solenoidal advection).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Linear or nonlinear solver failure (singular matrix, nonconvergence).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values, ill-conditioned local systems, invariant violations.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace vms

#endif
