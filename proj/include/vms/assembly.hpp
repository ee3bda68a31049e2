#ifndef VMS_ASSEMBLY_HPP
#define VMS_ASSEMBLY_HPP

#include <Eigen/Sparse>
#include <vector>

#include "vms/quadrature.hpp"
#include "vms/spaces.hpp"

namespace vms {

using SpMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Selects which global dofs are unknowns of a linear/nonlinear system.
/// Constrained dofs keep their values in the full coefficient vector and are
/// simply not part of the system.
struct SystemMap {
    std::vector<int> dof_to_sys; // -1 when not an unknown
    std::vector<int> sys_to_dof;
    std::array<bool, 5> field_included{};
    int n_sys = 0;

    /// include_constrained: lift the Dirichlet flags (used by the solenoidal
    /// lifting, which projects over the whole space).
    static SystemMap build(const DivConformingSpace& space, const std::vector<int>& fields,
                           bool include_constrained = false);
};

/// Quadrature layout: integration elements are the fine-pressure mesh
/// elements, with a tensor Gauss rule per element.
struct IntegrationLayout {
    Mesh int_mesh;
    GaussRule rule;
    int nqp_dir = 0;
    int nqp_elem = 0;
    long n_elements = 0;
    long total_qp = 0;

    static IntegrationLayout build(const DivConformingSpace& space, int n_gauss_points);

    std::array<int, 3> element_multi_index(long e) const {
        std::array<int, 3> me{0, 0, 0};
        for (int d = 0; d < int_mesh.dim; ++d) {
            me[d] = static_cast<int>(e % int_mesh.n_elem[d]);
            e /= int_mesh.n_elem[d];
        }
        return me;
    }
};

/// Per-direction univariate basis tables sampled at all quadrature points of
/// all integration elements, for one scalar field.
struct UniTable {
    int n_active = 0; // degree + 1
    std::vector<int> first_func;            // [n_int_elem_dir]
    std::vector<double> val, d1, d2;        // [n_int_elem_dir][nqp_dir][n_active]

    double v(int e, int q, int j, int nqp) const { return val[(e * nqp + q) * n_active + j]; }
    double g(int e, int q, int j, int nqp) const { return d1[(e * nqp + q) * n_active + j]; }
    double h(int e, int q, int j, int nqp) const { return d2[(e * nqp + q) * n_active + j]; }
};

/// Local (element) basis data for every field, packed per quadrature point.
struct ElemData {
    int dim = 2;
    int n_fields = 0;
    int nqp = 0;
    long element = -1;

    std::array<int, 5> n_loc{};
    std::array<int, 5> loc_offset{}; // into the concatenated local numbering
    int n_loc_total = 0;

    std::array<std::vector<int>, 5> dofs; // global dof per local function
    // value[f][qp * n_loc + j], grad[f][(qp * n_loc + j)*3 + d], hess likewise (*6)
    std::array<std::vector<double>, 5> value;
    std::array<std::vector<double>, 5> grad;
    std::array<std::vector<double>, 5> hess;

    std::vector<double> qp_x;      // [nqp][3]
    std::vector<double> qp_weight; // [nqp] physical weights
};

/// Precomputed univariate tables for all fields of a space over a layout;
/// fills ElemData per element.
class BasisCache {
public:
    BasisCache(const DivConformingSpace& space, const IntegrationLayout& layout,
               bool velocity_hessians = true);

    void fill(long element, ElemData& out) const;

    const DivConformingSpace& space() const { return *space_; }
    const IntegrationLayout& layout() const { return layout_; }

private:
    const DivConformingSpace* space_;
    IntegrationLayout layout_;
    bool hessians_;
    // tables[f][d]
    std::array<std::array<UniTable, 3>, 5> tables_;
    std::array<int, 3> coarse_shift_{}; // int elements per coarse element = 2^r
};

/// Sparse matrix with an immutable pattern and value-level scatter adds.
class CsMatrix {
public:
    void set_pattern(int n, const std::vector<Eigen::Triplet<double>>& entries);
    void zero();
    void add(int row, int col, double v); // entry must exist in the pattern
    const SpMat& matrix() const { return A_; }
    int size() const { return static_cast<int>(A_.rows()); }

private:
    SpMat A_;
};

/// Pattern over a SystemMap: element-connectivity couplings of all included
/// fields plus explicitly added dense rows (mean-constraint pins).
std::vector<Eigen::Triplet<double>> build_pattern(const BasisCache& cache, const SystemMap& map,
                                                  const std::vector<int>& dense_rows);

/// Mean-value pin: the matrix row `sys_row` is replaced by the (scaled) mean
/// functional of one field and the residual entry by scale*(m(x) - target).
struct RowPin {
    int sys_row = -1;
    int field = -1;
    double target = 0.0;
    double scale = 1.0;
    int value_pin_dof = -1; // >= 0: pin one coefficient instead of the mean
    std::vector<std::pair<int, double>> entries; // (sys col, weight)
};

/// The mean pin row must not collide with other pinned rows of the system;
/// pass the rows already taken.
RowPin make_mean_pin(const DivConformingSpace& space, const SystemMap& map, int field,
                     double target, const std::vector<int>& taken_rows = {});

/// Pin a single coefficient to a value (used for pressure coefficients the
/// divergence constraint cannot control).
RowPin make_value_pin(const DivConformingSpace& space, const SystemMap& map, int field,
                      int field_local_dof, double target);

void apply_pins_residual(const std::vector<RowPin>& pins, const Vector& x_full,
                         const DivConformingSpace& space, Vector& R);
void apply_pins_jacobian(const std::vector<RowPin>& pins, CsMatrix& J);

} // namespace vms

#endif
