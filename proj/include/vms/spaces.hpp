#ifndef VMS_SPACES_HPP
#define VMS_SPACES_HPP

#include <array>
#include <functional>
#include <vector>

#include "vms/mesh.hpp"
#include "vms/spline_basis.hpp"

namespace vms {

enum class FaceCondition { periodic, no_penetration, no_slip, free_slip, prescribed };

/// Velocity field callable: fills u[0..dim-1] at position x.
using VelocityField = std::function<void(const double* x, double* u)>;

struct BoundarySpec {
    // face[d][s]: condition on the face x_d = lo (s=0) or x_d = hi (s=1)
    std::array<std::array<FaceCondition, 2>, 3> face{};
    VelocityField prescribed_velocity;

    bool direction_periodic(int d) const {
        return face[d][0] == FaceCondition::periodic;
    }
    void validate(int dim) const;

    static BoundarySpec all_periodic(int dim);
    static BoundarySpec all_prescribed(int dim, VelocityField g);
    static BoundarySpec all_no_slip(int dim);
    static BoundarySpec all_free_slip(int dim);
};

/// Scalar tensor-product spline space over a box mesh.
struct TensorSpace {
    int dim = 2;
    std::array<KnotVector, 3> kv;
    std::array<int, 3> dofs{1, 1, 1}; // per-direction dof counts
    int total = 0;

    int linear_index(const std::array<int, 3>& t) const {
        int idx = t[dim - 1];
        for (int d = dim - 2; d >= 0; --d) idx = idx * dofs[d] + t[d];
        return idx;
    }
    std::array<int, 3> tensor_index(int lin) const {
        std::array<int, 3> t{0, 0, 0};
        for (int d = 0; d < dim; ++d) {
            t[d] = lin % dofs[d];
            lin /= dofs[d];
        }
        return t;
    }
};

TensorSpace make_tensor_space(const Mesh& mesh, const std::array<int, 3>& degrees,
                              const std::array<bool, 3>& periodic);

/// Exact integral of every basis function (product of univariate knot-average
/// integrals); used for mean constraints and zero-mean shifts.
std::vector<double> basis_integrals(const TensorSpace& s);

/// Divergence-conforming velocity/pressure spaces with DOF numbering,
/// periodic identification and strong-constraint bookkeeping. Field order in
/// the global coefficient vector: velocity components, coarse pressure, fine
/// pressure.
struct DivConformingSpace {
    Mesh mesh;              // coarse mesh
    Mesh fine_mesh;         // fine-pressure mesh (refined `fine_refine` times)
    int k_prime = 1;
    int fine_refine = 0;
    BoundarySpec bc;

    std::array<TensorSpace, 3> velocity;
    TensorSpace pressure;
    TensorSpace fine_pressure;

    std::array<int, 3> vel_offset{};
    int pressure_offset = 0;
    int fine_pressure_offset = 0;
    int total_dofs = 0;

    std::vector<char> constrained;          // per global dof (velocity only)
    std::vector<double> basis_integral;     // per global dof

    int n_fields() const { return mesh.dim + 2; }
    bool is_velocity_field(int f) const { return f < mesh.dim; }
    const TensorSpace& field_space(int f) const {
        if (f < mesh.dim) return velocity[f];
        return f == mesh.dim ? pressure : fine_pressure;
    }
    int field_offset(int f) const {
        if (f < mesh.dim) return vel_offset[f];
        return f == mesh.dim ? pressure_offset : fine_pressure_offset;
    }
    int velocity_dofs() const { return pressure_offset; }

    /// Global dofs of the outer coefficient layer of `component` on face
    /// (direction, side). Only meaningful for non-periodic directions.
    std::vector<int> face_layer(int component, int direction, int side) const;

    bool fully_periodic() const {
        for (int d = 0; d < mesh.dim; ++d)
            if (!bc.direction_periodic(d)) return false;
        return true;
    }
    /// True when no boundary face admits a prescribed normal flux, so that
    /// constant pressures are in the nullspace of the divergence constraint.
    bool needs_pressure_pin() const { return true; } // enclosed flows only
};

DivConformingSpace build_space(const Mesh& mesh, int k_prime, const BoundarySpec& bc,
                               int fine_pressure_refinement = 0);

/// Exact coefficient map of the divergence: coefficients of div(u^h) in the
/// coarse pressure space. Demonstrates div V^h subset Q^h.
std::vector<double> divergence_coefficients(const DivConformingSpace& space,
                                            const double* velocity_coeffs);

/// Coarse-pressure dofs that receive no contribution from any unconstrained
/// velocity dof through the divergence map (e.g. box corners under strong
/// full-Dirichlet constraints). The divergence constraint cannot control the
/// pressure in these coefficients, so direct saddle-point solvers must pin
/// them.
std::vector<int> uncontrolled_pressure_dofs(const DivConformingSpace& space);

/// Mean functional m with m(q) = integral of q over the domain, as a weight
/// vector over the dofs of one pressure field.
struct MeanConstraint {
    std::vector<double> weights; // basis integrals
    double domain_volume = 0.0;
    double value(const double* coeffs) const {
        double s = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) s += weights[i] * coeffs[i];
        return s;
    }
    /// Shift the field by a constant so that value(coeffs) == target.
    void shift_to(double* coeffs, double target) const {
        const double c = (value(coeffs) - target) / domain_volume;
        for (size_t i = 0; i < weights.size(); ++i) coeffs[i] -= c;
    }
};

MeanConstraint pressure_mean_constraint(const DivConformingSpace& space, bool fine);
MeanConstraint component_mean_constraint(const DivConformingSpace& space, int component);

} // namespace vms

#endif
