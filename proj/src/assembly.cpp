#include "vms/assembly.hpp"

#include <algorithm>
#include <cmath>

namespace vms {

SystemMap SystemMap::build(const DivConformingSpace& space, const std::vector<int>& fields,
                           bool include_constrained) {
    SystemMap m;
    m.dof_to_sys.assign(space.total_dofs, -1);
    for (int f : fields) m.field_included[f] = true;
    for (int f : fields) {
        const int off = space.field_offset(f);
        const int n = space.field_space(f).total;
        for (int i = 0; i < n; ++i) {
            const int dof = off + i;
            if (!include_constrained && space.constrained[dof]) continue;
            m.dof_to_sys[dof] = m.n_sys++;
            m.sys_to_dof.push_back(dof);
        }
    }
    return m;
}

IntegrationLayout IntegrationLayout::build(const DivConformingSpace& space, int n_gauss_points) {
    IntegrationLayout l;
    l.int_mesh = space.fine_mesh;
    l.rule = gauss_rule(n_gauss_points);
    l.nqp_dir = n_gauss_points;
    l.nqp_elem = 1;
    for (int d = 0; d < l.int_mesh.dim; ++d) l.nqp_elem *= n_gauss_points;
    l.n_elements = l.int_mesh.total_elements();
    l.total_qp = l.n_elements * l.nqp_elem;
    return l;
}

BasisCache::BasisCache(const DivConformingSpace& space, const IntegrationLayout& layout,
                       bool velocity_hessians)
    : space_(&space), layout_(layout), hessians_(velocity_hessians) {
    const int dim = space.mesh.dim;
    for (int d = 0; d < dim; ++d) coarse_shift_[d] = layout.int_mesh.n_elem[d] / space.mesh.n_elem[d];

    for (int f = 0; f < space.n_fields(); ++f) {
        const TensorSpace& ts = space.field_space(f);
        for (int d = 0; d < dim; ++d) {
            const KnotVector& kv = ts.kv[d];
            UniTable& t = tables_[f][d];
            const int ne = layout.int_mesh.n_elem[d];
            const int nq = layout.nqp_dir;
            t.n_active = kv.degree + 1;
            t.first_func.resize(ne);
            t.val.resize(static_cast<size_t>(ne) * nq * t.n_active);
            t.d1.resize(t.val.size());
            t.d2.resize(t.val.size());
            const double h_int = layout.int_mesh.h(d);
            for (int e = 0; e < ne; ++e) {
                for (int q = 0; q < nq; ++q) {
                    const double x = layout.int_mesh.lo[d] + (e + layout.rule.points[q]) * h_int;
                    const BasisEval be = eval_basis(kv, x, 2);
                    t.first_func[e] = be.first_func;
                    for (int j = 0; j < t.n_active; ++j) {
                        const size_t idx = (static_cast<size_t>(e) * nq + q) * t.n_active + j;
                        t.val[idx] = be.values[j];
                        t.d1[idx] = be.d1[j];
                        t.d2[idx] = be.d2[j];
                    }
                }
            }
        }
    }
}

void BasisCache::fill(long element, ElemData& out) const {
    const DivConformingSpace& sp = *space_;
    const int dim = sp.mesh.dim;
    const int nq_dir = layout_.nqp_dir;
    const auto me = layout_.element_multi_index(element);

    out.dim = dim;
    out.n_fields = sp.n_fields();
    out.nqp = layout_.nqp_elem;
    out.element = element;

    // physical quadrature points and weights
    out.qp_x.resize(static_cast<size_t>(out.nqp) * 3);
    out.qp_weight.resize(out.nqp);
    double wscale = 1.0;
    for (int d = 0; d < dim; ++d) wscale *= layout_.int_mesh.h(d);
    for (int q = 0; q < out.nqp; ++q) {
        int rem = q;
        double w = wscale;
        for (int d = 0; d < dim; ++d) {
            const int qd = rem % nq_dir;
            rem /= nq_dir;
            out.qp_x[q * 3 + d] = layout_.int_mesh.lo[d] + (me[d] + layout_.rule.points[qd]) *
                                                               layout_.int_mesh.h(d);
            w *= layout_.rule.weights[qd];
        }
        out.qp_weight[q] = w;
    }

    int loc_off = 0;
    for (int f = 0; f < out.n_fields; ++f) {
        const TensorSpace& ts = sp.field_space(f);
        const bool is_vel = sp.is_velocity_field(f);
        const bool want_hess = is_vel && hessians_;

        std::array<const UniTable*, 3> tab{};
        std::array<int, 3> cnt{1, 1, 1};
        int n_loc = 1;
        for (int d = 0; d < dim; ++d) {
            tab[d] = &tables_[f][d];
            cnt[d] = tab[d]->n_active;
            n_loc *= cnt[d];
        }
        out.n_loc[f] = n_loc;
        out.loc_offset[f] = loc_off;
        loc_off += n_loc;

        out.dofs[f].resize(n_loc);
        out.value[f].resize(static_cast<size_t>(out.nqp) * n_loc);
        out.grad[f].resize(static_cast<size_t>(out.nqp) * n_loc * 3);
        if (want_hess) out.hess[f].resize(static_cast<size_t>(out.nqp) * n_loc * 6);
        else out.hess[f].clear();

        // global dofs (with periodic wraparound)
        for (int j = 0; j < n_loc; ++j) {
            int rem = j;
            std::array<int, 3> t{0, 0, 0};
            for (int d = 0; d < dim; ++d) {
                const int jd = rem % cnt[d];
                rem /= cnt[d];
                t[d] = ts.kv[d].dof_of_func(tab[d]->first_func[me[d]] + jd);
            }
            out.dofs[f][j] = sp.field_offset(f) + ts.linear_index(t);
        }

        // packed tensor-product values per quadrature point
        for (int q = 0; q < out.nqp; ++q) {
            std::array<int, 3> qd{0, 0, 0};
            int rem = q;
            for (int d = 0; d < dim; ++d) {
                qd[d] = rem % nq_dir;
                rem /= nq_dir;
            }
            std::array<const double*, 3> v{}, g1{}, g2{};
            for (int d = 0; d < dim; ++d) {
                const size_t base =
                    (static_cast<size_t>(me[d]) * nq_dir + qd[d]) * tab[d]->n_active;
                v[d] = &tab[d]->val[base];
                g1[d] = &tab[d]->d1[base];
                g2[d] = &tab[d]->d2[base];
            }
            for (int j = 0; j < n_loc; ++j) {
                int rem2 = j;
                std::array<int, 3> jd{0, 0, 0};
                for (int d = 0; d < dim; ++d) {
                    jd[d] = rem2 % cnt[d];
                    rem2 /= cnt[d];
                }
                double val = 1.0;
                for (int d = 0; d < dim; ++d) val *= v[d][jd[d]];
                out.value[f][static_cast<size_t>(q) * n_loc + j] = val;

                double* gr = &out.grad[f][(static_cast<size_t>(q) * n_loc + j) * 3];
                gr[0] = gr[1] = gr[2] = 0.0;
                for (int gdir = 0; gdir < dim; ++gdir) {
                    double gv = 1.0;
                    for (int d = 0; d < dim; ++d)
                        gv *= (d == gdir) ? g1[d][jd[d]] : v[d][jd[d]];
                    gr[gdir] = gv;
                }
                if (want_hess) {
                    double* he = &out.hess[f][(static_cast<size_t>(q) * n_loc + j) * 6];
                    for (int d2 = 0; d2 < 6; ++d2) he[d2] = 0.0;
                    for (int gdir = 0; gdir < dim; ++gdir) {
                        double hv = 1.0;
                        for (int d = 0; d < dim; ++d)
                            hv *= (d == gdir) ? g2[d][jd[d]] : v[d][jd[d]];
                        he[gdir] = hv;
                    }
                    static constexpr int pa[3] = {0, 0, 1};
                    static constexpr int pb[3] = {1, 2, 2};
                    const int n_pairs = dim * (dim - 1) / 2;
                    for (int m = 0; m < n_pairs; ++m) {
                        double hv = 1.0;
                        for (int d = 0; d < dim; ++d) {
                            if (d == pa[m] || d == pb[m]) hv *= g1[d][jd[d]];
                            else hv *= v[d][jd[d]];
                        }
                        he[3 + m] = hv;
                    }
                }
            }
        }
    }
    out.n_loc_total = loc_off;
}

void CsMatrix::set_pattern(int n, const std::vector<Eigen::Triplet<double>>& entries) {
    A_.resize(n, n);
    A_.setFromTriplets(entries.begin(), entries.end());
    A_.makeCompressed();
    zero();
}

void CsMatrix::zero() {
    std::fill(A_.valuePtr(), A_.valuePtr() + A_.nonZeros(), 0.0);
}

void CsMatrix::add(int row, int col, double v) {
    const int* outer = A_.outerIndexPtr();
    const int* inner = A_.innerIndexPtr();
    const int begin = outer[col];
    const int end = outer[col + 1];
    const int* it = std::lower_bound(inner + begin, inner + end, row);
    if (it == inner + end || *it != row)
        throw NumericalError("CsMatrix::add: entry outside the assembled pattern");
    A_.valuePtr()[it - inner] += v;
}

std::vector<Eigen::Triplet<double>> build_pattern(const BasisCache& cache, const SystemMap& map,
                                                  const std::vector<int>& dense_rows) {
    std::vector<Eigen::Triplet<double>> trips;
    ElemData ed;
    std::vector<int> sys;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        sys.clear();
        for (int f = 0; f < ed.n_fields; ++f) {
            if (!map.field_included[f]) continue;
            for (int dof : ed.dofs[f]) {
                const int s = map.dof_to_sys[dof];
                if (s >= 0) sys.push_back(s);
            }
        }
        for (int r : sys)
            for (int c : sys) trips.emplace_back(r, c, 0.0);
    }
    for (int r : dense_rows) {
        // a mean-pin row couples to every unknown of its own field; covering
        // all unknowns keeps this independent of which field the row pins
        for (int c = 0; c < map.n_sys; ++c) trips.emplace_back(r, c, 0.0);
    }
    return trips;
}

RowPin make_mean_pin(const DivConformingSpace& space, const SystemMap& map, int field,
                     double target, const std::vector<int>& taken_rows) {
    RowPin pin;
    pin.field = field;
    pin.target = target;
    const int off = space.field_offset(field);
    const int n = space.field_space(field).total;
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const int s = map.dof_to_sys[off + i];
        const double w = space.basis_integral[off + i];
        if (s >= 0) {
            pin.entries.emplace_back(s, w);
            const bool taken =
                std::find(taken_rows.begin(), taken_rows.end(), s) != taken_rows.end();
            if (!taken) pin.sys_row = s; // last non-colliding unknown hosts the row
        }
        norm2 += w * w;
    }
    if (pin.sys_row < 0) throw InputError("make_mean_pin: field has no available row");
    pin.scale = 1.0 / std::sqrt(norm2);
    for (auto& e : pin.entries) e.second *= pin.scale;
    return pin;
}

RowPin make_value_pin(const DivConformingSpace& space, const SystemMap& map, int field,
                      int field_local_dof, double target) {
    RowPin pin;
    pin.field = field;
    pin.target = target;
    pin.value_pin_dof = field_local_dof;
    const int s = map.dof_to_sys[space.field_offset(field) + field_local_dof];
    if (s < 0) throw InputError("make_value_pin: dof is not a system unknown");
    pin.sys_row = s;
    pin.entries.emplace_back(s, 1.0);
    return pin;
}

void apply_pins_residual(const std::vector<RowPin>& pins, const Vector& x_full,
                         const DivConformingSpace& space, Vector& R) {
    for (const RowPin& pin : pins) {
        const int off = space.field_offset(pin.field);
        if (pin.value_pin_dof >= 0) {
            R[pin.sys_row] = x_full[off + pin.value_pin_dof] - pin.target;
            continue;
        }
        const int n = space.field_space(pin.field).total;
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += space.basis_integral[off + i] * x_full[off + i];
        R[pin.sys_row] = pin.scale * (m - pin.target);
    }
}

void apply_pins_jacobian(const std::vector<RowPin>& pins, CsMatrix& J) {
    // zero the pinned rows, then write the mean weights
    SpMat& A = const_cast<SpMat&>(J.matrix());
    for (const RowPin& pin : pins) {
        for (int col = 0; col < A.outerSize(); ++col) {
            const int* outer = A.outerIndexPtr();
            const int* inner = A.innerIndexPtr();
            const int* it =
                std::lower_bound(inner + outer[col], inner + outer[col + 1], pin.sys_row);
            if (it != inner + outer[col + 1] && *it == pin.sys_row)
                A.valuePtr()[it - inner] = 0.0;
        }
        for (const auto& [col, w] : pin.entries) J.add(pin.sys_row, col, w);
    }
}

} // namespace vms
