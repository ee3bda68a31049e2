#include "vms/spaces.hpp"

#include <numeric>

namespace vms {

void BoundarySpec::validate(int dim) const {
    bool any_prescribed = false;
    for (int d = 0; d < dim; ++d) {
        const bool lo_per = face[d][0] == FaceCondition::periodic;
        const bool hi_per = face[d][1] == FaceCondition::periodic;
        if (lo_per != hi_per)
            throw InputError("BoundarySpec: periodic faces must come in opposing pairs");
        for (int s = 0; s < 2; ++s)
            if (face[d][s] == FaceCondition::prescribed) any_prescribed = true;
    }
    if (any_prescribed && !prescribed_velocity)
        throw InputError("BoundarySpec: prescribed face without a velocity field");
}

static BoundarySpec uniform_spec(int dim, FaceCondition c) {
    BoundarySpec b;
    for (int d = 0; d < dim; ++d) b.face[d] = {c, c};
    return b;
}

BoundarySpec BoundarySpec::all_periodic(int dim) {
    return uniform_spec(dim, FaceCondition::periodic);
}
BoundarySpec BoundarySpec::all_no_slip(int dim) {
    return uniform_spec(dim, FaceCondition::no_slip);
}
BoundarySpec BoundarySpec::all_free_slip(int dim) {
    return uniform_spec(dim, FaceCondition::free_slip);
}
BoundarySpec BoundarySpec::all_prescribed(int dim, VelocityField g) {
    BoundarySpec b = uniform_spec(dim, FaceCondition::prescribed);
    b.prescribed_velocity = std::move(g);
    return b;
}

TensorSpace make_tensor_space(const Mesh& mesh, const std::array<int, 3>& degrees,
                              const std::array<bool, 3>& periodic) {
    TensorSpace s;
    s.dim = mesh.dim;
    s.total = 1;
    for (int d = 0; d < mesh.dim; ++d) {
        s.kv[d] = periodic[d]
                      ? periodic_knot_vector(degrees[d], mesh.n_elem[d], mesh.lo[d], mesh.hi[d])
                      : open_knot_vector(degrees[d], mesh.n_elem[d], mesh.lo[d], mesh.hi[d]);
        s.dofs[d] = s.kv[d].num_dofs();
        s.total *= s.dofs[d];
    }
    return s;
}

static std::vector<double> univariate_integrals(const KnotVector& kv) {
    // integral of N_{i,p} = (t_{i+p+1} - t_i)/(p+1); periodic wrapped sums are h
    const int p = kv.degree;
    std::vector<double> out(kv.num_dofs(), 0.0);
    if (kv.periodic) {
        std::fill(out.begin(), out.end(), kv.h);
        return out;
    }
    for (int i = 0; i < kv.num_funcs(); ++i)
        out[i] = (kv.knots[i + p + 1] - kv.knots[i]) / (p + 1);
    return out;
}

std::vector<double> basis_integrals(const TensorSpace& s) {
    std::array<std::vector<double>, 3> uni;
    for (int d = 0; d < s.dim; ++d) uni[d] = univariate_integrals(s.kv[d]);
    std::vector<double> out(s.total);
    for (int lin = 0; lin < s.total; ++lin) {
        const auto t = s.tensor_index(lin);
        double v = 1.0;
        for (int d = 0; d < s.dim; ++d) v *= uni[d][t[d]];
        out[lin] = v;
    }
    return out;
}

std::vector<int> DivConformingSpace::face_layer(int component, int direction, int side) const {
    const TensorSpace& s = velocity[component];
    std::vector<int> out;
    const int layer = (side == 0) ? 0 : s.dofs[direction] - 1;
    for (int lin = 0; lin < s.total; ++lin) {
        if (s.tensor_index(lin)[direction] == layer)
            out.push_back(vel_offset[component] + lin);
    }
    return out;
}

DivConformingSpace build_space(const Mesh& mesh, int k_prime, const BoundarySpec& bc,
                               int fine_pressure_refinement) {
    mesh.validate();
    bc.validate(mesh.dim);
    if (k_prime < 1 || k_prime > 2)
        throw InputError("build_space: k_prime must be 1 or 2");
    if (fine_pressure_refinement < 0)
        throw InputError("build_space: fine_pressure_refinement must be >= 0");

    DivConformingSpace sp;
    sp.mesh = mesh;
    sp.k_prime = k_prime;
    sp.fine_refine = fine_pressure_refinement;
    sp.fine_mesh = mesh.refined(fine_pressure_refinement);
    sp.bc = bc;

    std::array<bool, 3> periodic{};
    for (int d = 0; d < mesh.dim; ++d) periodic[d] = bc.direction_periodic(d);

    for (int c = 0; c < mesh.dim; ++c) {
        std::array<int, 3> deg{};
        for (int d = 0; d < mesh.dim; ++d) deg[d] = (d == c) ? k_prime + 1 : k_prime;
        sp.velocity[c] = make_tensor_space(mesh, deg, periodic);
    }
    const std::array<int, 3> pdeg{k_prime, k_prime, k_prime};
    sp.pressure = make_tensor_space(mesh, pdeg, periodic);
    sp.fine_pressure = make_tensor_space(sp.fine_mesh, pdeg, periodic);

    int off = 0;
    for (int c = 0; c < mesh.dim; ++c) {
        sp.vel_offset[c] = off;
        off += sp.velocity[c].total;
    }
    sp.pressure_offset = off;
    off += sp.pressure.total;
    sp.fine_pressure_offset = off;
    off += sp.fine_pressure.total;
    sp.total_dofs = off;

    sp.constrained.assign(sp.total_dofs, 0);
    for (int d = 0; d < mesh.dim; ++d) {
        if (periodic[d]) continue;
        for (int s = 0; s < 2; ++s) {
            const FaceCondition fc = bc.face[d][s];
            for (int c = 0; c < mesh.dim; ++c) {
                const bool normal = (c == d);
                bool constrain = false;
                switch (fc) {
                    case FaceCondition::no_penetration:
                    case FaceCondition::free_slip:
                        constrain = normal;
                        break;
                    case FaceCondition::no_slip:
                    case FaceCondition::prescribed:
                        constrain = true;
                        break;
                    case FaceCondition::periodic:
                        break;
                }
                if (!constrain) continue;
                for (int dof : sp.face_layer(c, d, s)) sp.constrained[dof] = 1;
            }
        }
    }

    sp.basis_integral.resize(sp.total_dofs);
    for (int f = 0; f < sp.n_fields(); ++f) {
        const auto ints = basis_integrals(sp.field_space(f));
        std::copy(ints.begin(), ints.end(), sp.basis_integral.begin() + sp.field_offset(f));
    }
    return sp;
}

std::vector<double> divergence_coefficients(const DivConformingSpace& space,
                                            const double* velocity_coeffs) {
    const int dim = space.mesh.dim;
    std::vector<double> div(space.pressure.total, 0.0);
    for (int c = 0; c < dim; ++c) {
        const TensorSpace& vs = space.velocity[c];
        const KnotVector& kv = vs.kv[c];
        const int n_line = vs.dofs[c];
        const long n_lines = vs.total / n_line;

        // stride of direction c in the component's lexicographic layout
        int stride = 1;
        for (int d = 0; d < c; ++d) stride *= vs.dofs[d];

        std::vector<double> line(n_line);
        for (long l = 0; l < n_lines; ++l) {
            // base linear index of this line (tensor index with t[c] = 0)
            long rem = l;
            std::array<int, 3> t{0, 0, 0};
            for (int d = 0; d < dim; ++d) {
                if (d == c) continue;
                t[d] = static_cast<int>(rem % vs.dofs[d]);
                rem /= vs.dofs[d];
            }
            t[c] = 0;
            const int base = vs.linear_index(t);
            for (int i = 0; i < n_line; ++i)
                line[i] = velocity_coeffs[space.vel_offset[c] + base + i * stride];
            const auto dline = derivative_coefficients(kv, line);

            // same transverse indices in the pressure layout
            std::array<int, 3> tp = t;
            tp[c] = 0;
            const int pbase = space.pressure.linear_index(tp);
            int pstride = 1;
            for (int d = 0; d < c; ++d) pstride *= space.pressure.dofs[d];
            for (size_t i = 0; i < dline.size(); ++i)
                div[pbase + i * pstride] += dline[i];
        }
    }
    return div;
}

std::vector<int> uncontrolled_pressure_dofs(const DivConformingSpace& space) {
    const int dim = space.mesh.dim;
    // pressure dof t is controlled if some component c contributes to it
    // through the derivative difference (t_c, t_c + 1) with an unconstrained
    // velocity coefficient; periodic directions always contribute
    std::vector<int> dead;
    for (int lin = 0; lin < space.pressure.total; ++lin) {
        const auto t = space.pressure.tensor_index(lin);
        bool controlled = false;
        for (int c = 0; c < dim && !controlled; ++c) {
            const TensorSpace& vs = space.velocity[c];
            if (vs.kv[c].periodic) {
                controlled = true;
                break;
            }
            for (int off = 0; off <= 1 && !controlled; ++off) {
                std::array<int, 3> vt = t;
                vt[c] = t[c] + off;
                if (vt[c] >= vs.dofs[c]) continue;
                const int dof = space.vel_offset[c] + vs.linear_index(vt);
                if (!space.constrained[dof]) controlled = true;
            }
        }
        if (!controlled) dead.push_back(lin);
    }
    return dead;
}

MeanConstraint pressure_mean_constraint(const DivConformingSpace& space, bool fine) {
    MeanConstraint m;
    m.weights = basis_integrals(fine ? space.fine_pressure : space.pressure);
    m.domain_volume = space.mesh.volume();
    return m;
}

MeanConstraint component_mean_constraint(const DivConformingSpace& space, int component) {
    MeanConstraint m;
    m.weights = basis_integrals(space.velocity[component]);
    m.domain_volume = space.mesh.volume();
    return m;
}

} // namespace vms
