#include "vms/spline_basis.hpp"
#include "vms/errors.hpp"

#include <algorithm>
#include <cmath>

namespace vms {

double KnotVector::wrap(double x) const {
    if (!periodic) return x;
    const double period = b - a;
    double y = x - period * std::floor((x - a) / period);
    if (y >= b) y = a; // exact multiples of the period land on a
    return y;
}

int KnotVector::span_of(double x) const {
    if (periodic) {
        const double y = wrap(x);
        int e = static_cast<int>((y - a) / h);
        e = std::clamp(e, 0, n_elements - 1);
        return degree + e;
    }
    const double tol = 1e-12 * (b - a);
    if (x < a - tol || x > b + tol)
        throw InputError("eval_basis: point outside the parametric domain");
    int e = static_cast<int>((x - a) / h);
    e = std::clamp(e, 0, n_elements - 1);
    return degree + e;
}

KnotVector open_knot_vector(int degree, int n_elements, double a, double b) {
    if (degree < 0) throw InputError("open_knot_vector: degree must be >= 0");
    if (n_elements < 1) throw InputError("open_knot_vector: need at least one element");
    if (!(b > a)) throw InputError("open_knot_vector: degenerate interval");

    KnotVector kv;
    kv.degree = degree;
    kv.periodic = false;
    kv.n_elements = n_elements;
    kv.a = a;
    kv.b = b;
    kv.h = (b - a) / n_elements;
    kv.knots.reserve(n_elements + 2 * degree + 1);
    for (int i = 0; i <= degree; ++i) kv.knots.push_back(a);
    for (int i = 1; i < n_elements; ++i) kv.knots.push_back(a + i * kv.h);
    for (int i = 0; i <= degree; ++i) kv.knots.push_back(b);
    return kv;
}

KnotVector periodic_knot_vector(int degree, int n_elements, double a, double b) {
    if (degree < 0) throw InputError("periodic_knot_vector: degree must be >= 0");
    if (!(b > a)) throw InputError("periodic_knot_vector: degenerate interval");
    if (n_elements <= degree)
        throw InputError("periodic_knot_vector: need n_elements > degree, "
                         "wrapped functions would overlap themselves");

    KnotVector kv;
    kv.degree = degree;
    kv.periodic = true;
    kv.n_elements = n_elements;
    kv.a = a;
    kv.b = b;
    kv.h = (b - a) / n_elements;
    // uniform knots extended by `degree` spans on each side
    kv.knots.reserve(n_elements + 2 * degree + 1);
    for (int j = 0; j <= n_elements + 2 * degree; ++j)
        kv.knots.push_back(a + (j - degree) * kv.h);
    return kv;
}

BasisEval eval_basis(const KnotVector& kv, double x, int max_deriv) {
    if (max_deriv < 0 || max_deriv > 2)
        throw InputError("eval_basis: max_deriv must be 0, 1 or 2");

    const double y = kv.periodic ? kv.wrap(x) : x;
    const int span = kv.span_of(y);
    const int p = kv.degree;
    const double* U = kv.knots.data();

    BasisEval out;
    out.span = span;
    out.first_func = span - p;

    // Cox-de Boor triangular table (values plus knot differences).
    double ndu[5][5];
    double left[5], right[5];
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = y - U[span + 1 - j];
        right[j] = U[span + j] - y;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for (int j = 0; j <= p; ++j) out.values[j] = ndu[j][p];

    if (max_deriv == 0 || p == 0) return out;

    // Derivatives from the lower-degree columns of the table.
    const int nders = std::min(max_deriv, p);
    double a2[2][5];
    double ders[2][5] = {};
    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a2[0][0] = 1.0;
        for (int k = 1; k <= nders; ++k) {
            double d = 0.0;
            const int rk = r - k;
            const int pk = p - k;
            if (r >= k) {
                a2[s2][0] = a2[s1][0] / ndu[pk + 1][rk];
                d = a2[s2][0] * ndu[rk][pk];
            }
            const int j1 = (rk >= -1) ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a2[s2][j] = (a2[s1][j] - a2[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a2[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a2[s2][k] = -a2[s1][k - 1] / ndu[pk + 1][r];
                d += a2[s2][k] * ndu[r][pk];
            }
            ders[k - 1][r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = p;
    for (int k = 1; k <= nders; ++k) {
        for (int r = 0; r <= p; ++r) {
            if (k == 1) out.d1[r] = ders[0][r] * factor;
            else out.d2[r] = ders[1][r] * factor;
        }
        factor *= (p - k);
    }
    return out;
}

KnotVector derivative_knot_vector(const KnotVector& kv) {
    if (kv.degree < 1)
        throw InputError("derivative_knot_vector: degree must be >= 1");
    return kv.periodic ? periodic_knot_vector(kv.degree - 1, kv.n_elements, kv.a, kv.b)
                       : open_knot_vector(kv.degree - 1, kv.n_elements, kv.a, kv.b);
}

std::vector<double> derivative_coefficients(const KnotVector& kv,
                                            const std::vector<double>& coeffs) {
    const int p = kv.degree;
    if (p < 1) throw InputError("derivative_coefficients: degree must be >= 1");
    if (static_cast<int>(coeffs.size()) != kv.num_dofs())
        throw InputError("derivative_coefficients: coefficient count mismatch");

    // d/dx sum_i c_i N_{i,p} = sum_i p (c_i - c_{i-1}) / (t_{i+p} - t_i) N_{i,p-1},
    // written over the raw (pre-identification) function indices; the interior
    // functions i = 1 .. m-1 of degree p-1 are exactly the derivative space.
    if (!kv.periodic) {
        const int n_out = kv.num_dofs() - 1; // = n_elements + p - 1
        std::vector<double> out(n_out);
        for (int i = 0; i < n_out; ++i) {
            const double dt = kv.knots[i + 1 + p] - kv.knots[i + 1];
            out[i] = p * (coeffs[i + 1] - coeffs[i]) / dt;
        }
        return out;
    }
    // Periodic: every knot difference equals p*h and indices wrap. Raw
    // derivative function j carries p (c_{j+1} - c_j) / (p h); expressed in
    // the derivative space's own extended knots this lands on dof j.
    const int n = kv.n_elements;
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = (coeffs[(i + 1) % n] - coeffs[i]) / kv.h;
    return out;
}

void tensor_eval(const KnotVector* kvs, int dim, const double* x, int max_deriv,
                 TensorBasisEval& out) {
    std::array<BasisEval, 3> uni;
    int n_active = 1;
    for (int d = 0; d < dim; ++d) {
        uni[d] = eval_basis(kvs[d], x[d], max_deriv);
        out.first_func[d] = uni[d].first_func;
        out.count[d] = kvs[d].degree + 1;
        n_active *= out.count[d];
    }
    out.n_active = n_active;
    out.value.resize(n_active);
    if (max_deriv >= 1) out.grad.resize(n_active);
    if (max_deriv >= 2) out.hess.resize(n_active);

    std::array<int, 3> idx{};
    for (int k = 0; k < n_active; ++k) {
        int rem = k;
        for (int d = 0; d < dim; ++d) {
            idx[d] = rem % out.count[d];
            rem /= out.count[d];
        }
        double v = 1.0;
        for (int d = 0; d < dim; ++d) v *= uni[d].values[idx[d]];
        out.value[k] = v;
        if (max_deriv >= 1) {
            for (int g = 0; g < dim; ++g) {
                double gv = 1.0;
                for (int d = 0; d < dim; ++d)
                    gv *= (d == g) ? uni[d].d1[idx[d]] : uni[d].values[idx[d]];
                out.grad[k][g] = gv;
            }
        }
        if (max_deriv >= 2) {
            // diagonal entries then (xy, xz, yz)
            for (int g = 0; g < dim; ++g) {
                double hv = 1.0;
                for (int d = 0; d < dim; ++d)
                    hv *= (d == g) ? uni[d].d2[idx[d]] : uni[d].values[idx[d]];
                out.hess[k][g] = hv;
            }
            static constexpr int pair_a[3] = {0, 0, 1};
            static constexpr int pair_b[3] = {1, 2, 2};
            const int n_pairs = dim * (dim - 1) / 2;
            for (int m = 0; m < n_pairs; ++m) {
                double hv = 1.0;
                for (int d = 0; d < dim; ++d) {
                    if (d == pair_a[m] || d == pair_b[m]) hv *= uni[d].d1[idx[d]];
                    else hv *= uni[d].values[idx[d]];
                }
                out.hess[k][3 + m] = hv;
            }
        }
    }
}

} // namespace vms
