#ifndef VMS_SPLINE_BASIS_HPP
#define VMS_SPLINE_BASIS_HPP

#include <array>
#include <vector>

namespace vms {

/// Uniform univariate B-spline knot vector, clamped (open) or periodic.
/// Knots are stored in physical units, so basis derivatives come out in
/// physical units directly.
struct KnotVector {
    std::vector<double> knots;
    int degree = 0;
    bool periodic = false;

    int n_elements = 0; // nonzero spans inside [a, b]
    double a = 0.0;     // domain start
    double b = 1.0;     // domain end
    double h = 1.0;     // uniform span width

    /// Basis functions before periodic wraparound identification.
    int num_funcs() const { return static_cast<int>(knots.size()) - degree - 1; }

    /// Independent coefficients: n_elements for periodic, n_elements + degree
    /// for clamped.
    int num_dofs() const { return periodic ? n_elements : n_elements + degree; }

    /// Wraparound identification of raw function index -> dof index.
    int dof_of_func(int func) const { return periodic ? func % n_elements : func; }

    /// Map x into [a, b) for periodic vectors; pass through otherwise.
    double wrap(double x) const;

    /// Knot-span index containing x (throws InputError outside the domain
    /// of a non-periodic vector).
    int span_of(double x) const;
};

KnotVector open_knot_vector(int degree, int n_elements, double a, double b);
KnotVector periodic_knot_vector(int degree, int n_elements, double a, double b);

/// Values and derivatives of the degree+1 basis functions supported on one
/// knot span. Index j corresponds to function span - degree + j.
struct BasisEval {
    int span = 0;
    int first_func = 0;
    std::array<double, 4> values{};
    std::array<double, 4> d1{};
    std::array<double, 4> d2{};
};

/// Cox-de Boor evaluation with derivatives up to max_deriv (<= 2).
BasisEval eval_basis(const KnotVector& kv, double x, int max_deriv);

/// Coefficient map of d/dx: applied to the coefficients of a spline in `kv`
/// it yields the coefficients of the derivative in derivative_knot_vector(kv)
/// (degree reduced by one, same elements). Exact, no quadrature involved.
KnotVector derivative_knot_vector(const KnotVector& kv);
std::vector<double> derivative_coefficients(const KnotVector& kv,
                                            const std::vector<double>& coeffs);

/// Value/gradient/Hessian of every active tensor-product basis function at
/// a point. Active functions are ordered with the first direction fastest.
struct TensorBasisEval {
    int n_active = 0;
    std::array<int, 3> first_func{};            // per direction
    std::array<int, 3> count{};                 // degree+1 per direction
    std::vector<double> value;                  // [n_active]
    std::vector<std::array<double, 3>> grad;    // [n_active][dim]
    std::vector<std::array<double, 6>> hess;    // xx, yy, zz, xy, xz, yz
};

void tensor_eval(const KnotVector* kvs, int dim, const double* x, int max_deriv,
                 TensorBasisEval& out);

} // namespace vms

#endif
