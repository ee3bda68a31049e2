#include "vms/quadrature.hpp"
#include "vms/errors.hpp"

namespace vms {

GaussRule gauss_rule(int n_points) {
    // Abscissae on [-1, 1], mapped to [0, 1] below.
    static const double x1[] = {0.0};
    static const double w1[] = {2.0};
    static const double x2[] = {-0.57735026918962576451, 0.57735026918962576451};
    static const double w2[] = {1.0, 1.0};
    static const double x3[] = {-0.77459666924148337704, 0.0, 0.77459666924148337704};
    static const double w3[] = {0.55555555555555555556, 0.88888888888888888889,
                                0.55555555555555555556};
    static const double x4[] = {-0.86113631159405257522, -0.33998104358485626480,
                                0.33998104358485626480, 0.86113631159405257522};
    static const double w4[] = {0.34785484513745385737, 0.65214515486254614263,
                                0.65214515486254614263, 0.34785484513745385737};
    static const double x5[] = {-0.90617984593866399280, -0.53846931010568309104, 0.0,
                                0.53846931010568309104, 0.90617984593866399280};
    static const double w5[] = {0.23692688505618908751, 0.47862867049936646804,
                                0.56888888888888888889, 0.47862867049936646804,
                                0.23692688505618908751};
    static const double x6[] = {-0.93246951420315202781, -0.66120938646626451366,
                                -0.23861918608319690863, 0.23861918608319690863,
                                0.66120938646626451366,  0.93246951420315202781};
    static const double w6[] = {0.17132449237917034504, 0.36076157304813860757,
                                0.46791393457269104739, 0.46791393457269104739,
                                0.36076157304813860757, 0.17132449237917034504};
    static const double* xs[] = {x1, x2, x3, x4, x5, x6};
    static const double* ws[] = {w1, w2, w3, w4, w5, w6};

    if (n_points < 1 || n_points > 6)
        throw InputError("gauss_rule: supported point counts are 1..6");

    GaussRule r;
    r.points.resize(n_points);
    r.weights.resize(n_points);
    for (int i = 0; i < n_points; ++i) {
        r.points[i] = 0.5 * (xs[n_points - 1][i] + 1.0);
        r.weights[i] = 0.5 * ws[n_points - 1][i];
    }
    return r;
}

ElementMetric metric(const Mesh& mesh, long element) {
    if (element < 0 || element >= mesh.total_elements())
        throw InputError("metric: element index out of range");
    ElementMetric m;
    m.dim = mesh.dim;
    for (int d = 0; d < mesh.dim; ++d) {
        const double hd = mesh.h(d);
        m.G[d] = 1.0 / (hd * hd);
        m.trace += m.G[d];
        m.GG += m.G[d] * m.G[d];
    }
    return m;
}

} // namespace vms
