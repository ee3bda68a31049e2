#ifndef VMS_TEST_HELPERS_HPP
#define VMS_TEST_HELPERS_HPP

#include <Eigen/Dense>
#include <functional>
#include <random>

#include "vms/forms.hpp"

namespace vms::test {

/// Exactly divergence-free random velocity coefficients from a discrete
/// stream function: u = (d_y psi, -d_x psi) with psi in S_{k'+1,k'+1}. When
/// zero_boundary_layers > 0 the outer psi layers vanish, so the velocity has
/// zero trace.
inline Vector random_solenoidal_2d(const DivConformingSpace& space, std::mt19937& rng,
                                   int zero_boundary_layers = 0) {
    const Mesh& mesh = space.mesh;
    const int kp = space.k_prime;
    std::array<bool, 3> per{};
    for (int d = 0; d < 2; ++d) per[d] = space.bc.direction_periodic(d);
    const TensorSpace psi_space =
        make_tensor_space(mesh, {kp + 1, kp + 1, kp + 1}, per);

    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    std::vector<double> psi(psi_space.total);
    for (int lin = 0; lin < psi_space.total; ++lin) {
        const auto t = psi_space.tensor_index(lin);
        bool zero = false;
        for (int d = 0; d < 2; ++d) {
            if (per[d]) continue;
            if (t[d] < zero_boundary_layers || t[d] >= psi_space.dofs[d] - zero_boundary_layers)
                zero = true;
        }
        psi[lin] = zero ? 0.0 : ur(rng);
    }

    Vector out = Vector::Zero(space.total_dofs);
    // u_1 = d/dy psi: apply the univariate derivative map along y per x-line
    {
        const KnotVector& kvy = psi_space.kv[1];
        for (int i = 0; i < psi_space.dofs[0]; ++i) {
            std::vector<double> line(psi_space.dofs[1]);
            for (int j = 0; j < psi_space.dofs[1]; ++j)
                line[j] = psi[psi_space.linear_index({i, j, 0})];
            const auto dline = derivative_coefficients(kvy, line);
            const TensorSpace& v0 = space.velocity[0];
            for (size_t j = 0; j < dline.size(); ++j)
                out[space.vel_offset[0] + v0.linear_index({i, static_cast<int>(j), 0})] =
                    dline[j];
        }
    }
    // u_2 = -d/dx psi
    {
        const KnotVector& kvx = psi_space.kv[0];
        for (int j = 0; j < psi_space.dofs[1]; ++j) {
            std::vector<double> line(psi_space.dofs[0]);
            for (int i = 0; i < psi_space.dofs[0]; ++i)
                line[i] = psi[psi_space.linear_index({i, j, 0})];
            const auto dline = derivative_coefficients(kvx, line);
            const TensorSpace& v1 = space.velocity[1];
            for (size_t i = 0; i < dline.size(); ++i)
                out[space.vel_offset[1] + v1.linear_index({static_cast<int>(i), j, 0})] =
                    -dline[i];
        }
    }
    return out;
}

/// Greville-point interpolation of a scalar callable into a tensor space
/// (exact for polynomials contained in the space).
inline std::vector<double> interpolate_scalar(const TensorSpace& ts,
                                              const std::function<double(const double*)>& f) {
    const int dim = ts.dim;
    std::array<std::vector<double>, 3> grev;
    std::array<Eigen::MatrixXd, 3> inv;
    for (int d = 0; d < dim; ++d) {
        const KnotVector& kv = ts.kv[d];
        const int n = kv.num_dofs();
        grev[d].resize(n);
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            double g = 0.0;
            if (kv.degree > 0) {
                for (int k = 1; k <= kv.degree; ++k) g += kv.knots[i + k];
                g /= kv.degree;
            } else {
                g = 0.5 * (kv.knots[i] + kv.knots[i + 1]);
            }
            if (!kv.periodic) g = std::clamp(g, kv.a, kv.b);
            grev[d][i] = g;
            const BasisEval be = eval_basis(kv, g, 0);
            for (int j = 0; j <= kv.degree; ++j)
                A(i, kv.dof_of_func(be.first_func + j)) += be.values[j];
        }
        inv[d] = A.fullPivLu().inverse();
    }
    // interpolate dimension by dimension
    std::vector<double> c(ts.total);
    for (int lin = 0; lin < ts.total; ++lin) {
        const auto t = ts.tensor_index(lin);
        double x[3] = {0, 0, 0};
        for (int d = 0; d < dim; ++d) x[d] = grev[d][t[d]];
        c[lin] = f(x);
    }
    // solve per-direction (tensorized back-substitution via the dense inverses)
    for (int d = 0; d < dim; ++d) {
        const int nd = ts.dofs[d];
        const long n_lines = static_cast<long>(ts.total) / nd;
        for (long l = 0; l < n_lines; ++l) {
            std::array<int, 3> t{0, 0, 0};
            long rem = l;
            for (int dd = 0; dd < dim; ++dd) {
                if (dd == d) continue;
                t[dd] = static_cast<int>(rem % ts.dofs[dd]);
                rem /= ts.dofs[dd];
            }
            Eigen::VectorXd line(nd);
            for (int i = 0; i < nd; ++i) {
                t[d] = i;
                line(i) = c[ts.linear_index(t)];
            }
            Eigen::VectorXd sol = inv[d] * line;
            for (int i = 0; i < nd; ++i) {
                t[d] = i;
                c[ts.linear_index(t)] = sol(i);
            }
        }
    }
    return c;
}

/// Interpolate a velocity field componentwise and a pressure field into the
/// global layout.
inline Vector interpolate_fields(const DivConformingSpace& space,
                                 const std::function<void(const double*, double*)>& u,
                                 const std::function<double(const double*)>& p) {
    Vector out = Vector::Zero(space.total_dofs);
    for (int c = 0; c < space.mesh.dim; ++c) {
        auto comp = [&u, c](const double* x) {
            double uv[3] = {0, 0, 0};
            u(x, uv);
            return uv[c];
        };
        const auto coeffs = interpolate_scalar(space.velocity[c], comp);
        for (size_t i = 0; i < coeffs.size(); ++i) out[space.vel_offset[c] + i] = coeffs[i];
    }
    if (p) {
        const auto coeffs = interpolate_scalar(space.pressure, p);
        for (size_t i = 0; i < coeffs.size(); ++i) out[space.pressure_offset + i] = coeffs[i];
    }
    return out;
}

} // namespace vms::test

#endif
