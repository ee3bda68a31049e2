#ifndef VMS_MESH_HPP
#define VMS_MESH_HPP

#include <array>

#include "vms/errors.hpp"

namespace vms {

/// Axis-aligned structured box mesh with uniform spacing per direction.
struct Mesh {
    int dim = 2;
    std::array<double, 3> lo{};
    std::array<double, 3> hi{};
    std::array<int, 3> n_elem{};

    double extent(int d) const { return hi[d] - lo[d]; }
    double h(int d) const { return extent(d) / n_elem[d]; }
    double h_max() const {
        double m = 0.0;
        for (int d = 0; d < dim; ++d) m = h(d) > m ? h(d) : m;
        return m;
    }
    double volume() const {
        double v = 1.0;
        for (int d = 0; d < dim; ++d) v *= extent(d);
        return v;
    }
    long total_elements() const {
        long n = 1;
        for (int d = 0; d < dim; ++d) n *= n_elem[d];
        return n;
    }
    /// Dyadically refined copy (each direction split 2^levels times).
    Mesh refined(int levels) const {
        Mesh m = *this;
        for (int d = 0; d < dim; ++d) m.n_elem[d] <<= levels;
        return m;
    }
    void validate() const {
        if (dim != 2 && dim != 3) throw InputError("Mesh: dim must be 2 or 3");
        for (int d = 0; d < dim; ++d) {
            if (n_elem[d] < 1) throw InputError("Mesh: need at least one element per direction");
            if (!(hi[d] > lo[d])) throw InputError("Mesh: degenerate extent");
        }
    }
};

inline Mesh make_box_mesh(int dim, std::array<double, 3> lo, std::array<double, 3> hi,
                          std::array<int, 3> n_elem) {
    Mesh m;
    m.dim = dim;
    m.lo = lo;
    m.hi = hi;
    m.n_elem = n_elem;
    m.validate();
    return m;
}

inline Mesh make_square_mesh(double a, double b, int n) {
    return make_box_mesh(2, {a, a, 0.0}, {b, b, 1.0}, {n, n, 1});
}

inline Mesh make_cube_mesh(double a, double b, int n) {
    return make_box_mesh(3, {a, a, a}, {b, b, b}, {n, n, n});
}

} // namespace vms

#endif
