#ifndef VMS_QUADRATURE_HPP
#define VMS_QUADRATURE_HPP

#include <vector>

#include "vms/mesh.hpp"

namespace vms {

/// Gauss-Legendre rule on [0, 1]. n points integrate degree 2n-1 exactly.
struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;
    int size() const { return static_cast<int>(points.size()); }
};

GaussRule gauss_rule(int n_points);

/// Element metric tensor of the affine box map: G = (dxi/dx)^T (dxi/dx) with
/// xi the unit parent-element coordinate, so G = diag(1/h_i^2).
struct ElementMetric {
    int dim = 2;
    std::array<double, 3> G{}; // diagonal entries 1/h_i^2
    double trace = 0.0;
    double GG = 0.0; // G : G

    double u_G_u(const double* u) const {
        double s = 0.0;
        for (int d = 0; d < dim; ++d) s += u[d] * G[d] * u[d];
        return s;
    }
};

/// All elements of a uniform mesh share the same metric; the element index
/// is validated but otherwise unused.
ElementMetric metric(const Mesh& mesh, long element);

} // namespace vms

#endif
