#include "vms/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace vms {

void evaluate_velocity(const DivConformingSpace& space, const Vector& coeffs, const double* x,
                       double* u, double gradu[3][3]) {
    const int dim = space.mesh.dim;
    TensorBasisEval tb;
    for (int c = 0; c < dim; ++c) {
        const TensorSpace& ts = space.velocity[c];
        tensor_eval(ts.kv.data(), dim, x, gradu ? 1 : 0, tb);
        double val = 0.0;
        double gr[3] = {0, 0, 0};
        for (int k = 0; k < tb.n_active; ++k) {
            int rem = k;
            std::array<int, 3> t{0, 0, 0};
            for (int d = 0; d < dim; ++d) {
                const int jd = rem % tb.count[d];
                rem /= tb.count[d];
                t[d] = ts.kv[d].dof_of_func(tb.first_func[d] + jd);
            }
            const double cj = coeffs[space.vel_offset[c] + ts.linear_index(t)];
            val += cj * tb.value[k];
            if (gradu)
                for (int d = 0; d < dim; ++d) gr[d] += cj * tb.grad[k][d];
        }
        u[c] = val;
        if (gradu)
            for (int d = 0; d < dim; ++d) gradu[c][d] = gr[d];
    }
}

double evaluate_pressure(const DivConformingSpace& space, const Vector& coeffs, const double* x,
                         bool fine) {
    const int dim = space.mesh.dim;
    const TensorSpace& ts = fine ? space.fine_pressure : space.pressure;
    const int off = fine ? space.fine_pressure_offset : space.pressure_offset;
    TensorBasisEval tb;
    tensor_eval(ts.kv.data(), dim, x, 0, tb);
    double val = 0.0;
    for (int k = 0; k < tb.n_active; ++k) {
        int rem = k;
        std::array<int, 3> t{0, 0, 0};
        for (int d = 0; d < dim; ++d) {
            const int jd = rem % tb.count[d];
            rem /= tb.count[d];
            t[d] = ts.kv[d].dof_of_func(tb.first_func[d] + jd);
        }
        val += coeffs[off + ts.linear_index(t)] * tb.value[k];
    }
    return val;
}

TargetField spline_target(const DivConformingSpace& space, Vector coeffs) {
    auto data = std::make_shared<Vector>(std::move(coeffs));
    TargetField t;
    t.value = [&space, data](const double* x, double* u) {
        evaluate_velocity(space, *data, x, u);
    };
    t.gradient = [&space, data](const double* x, double gradu[3][3]) {
        double u[3];
        evaluate_velocity(space, *data, x, u, gradu);
    };
    return t;
}

namespace {

template <typename F>
void sweep(const BasisCache& cache, F&& fn) {
    ElemData ed;
    QpFields f;
    const DivConformingSpace& sp = cache.space();
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) fn(ed, qp, f, sp);
    }
}

} // namespace

double kinetic_energy(const BasisCache& cache, const Vector& coeffs) {
    double e = 0.0;
    sweep(cache, [&](const ElemData& ed, int qp, QpFields& f, const DivConformingSpace& sp) {
        eval_qp_fields(sp, ed, coeffs, qp, false, false, f);
        double uu = 0.0;
        for (int d = 0; d < sp.mesh.dim; ++d) uu += f.u[d] * f.u[d];
        e += ed.qp_weight[qp] * 0.5 * uu;
    });
    return e / cache.space().mesh.volume();
}

double viscous_dissipation(const BasisCache& cache, const Vector& coeffs, double nu) {
    double eps = 0.0;
    sweep(cache, [&](const ElemData& ed, int qp, QpFields& f, const DivConformingSpace& sp) {
        eval_qp_fields(sp, ed, coeffs, qp, false, false, f);
        double s2 = 0.0;
        const int dim = sp.mesh.dim;
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                const double s = 0.5 * (f.gradu[i][j] + f.gradu[j][i]);
                s2 += s * s;
            }
        eps += ed.qp_weight[qp] * 2.0 * nu * s2;
    });
    return eps / cache.space().mesh.volume();
}

double div_sup(const BasisCache& cache, const Vector& coeffs) {
    double m = 0.0;
    sweep(cache, [&](const ElemData& ed, int qp, QpFields& f, const DivConformingSpace& sp) {
        eval_qp_fields(sp, ed, coeffs, qp, false, false, f);
        double div = 0.0;
        for (int d = 0; d < sp.mesh.dim; ++d) div += f.gradu[d][d];
        m = std::max(m, std::abs(div));
    });
    return m;
}

void dissipation_split(std::vector<DiagnosticsRecord>& records) {
    const size_t n = records.size();
    if (n < 2) return;
    auto slope2 = [](const DiagnosticsRecord& a, const DiagnosticsRecord& b) {
        return (b.E_k - a.E_k) / (b.t - a.t);
    };
    for (size_t i = 0; i < n; ++i) {
        double dEdt;
        if (i == 0) dEdt = slope2(records[0], records[1]);
        else if (i == n - 1) dEdt = slope2(records[n - 2], records[n - 1]);
        else {
            // 3-point Lagrange derivative, exact for quadratics on nonuniform grids
            const double t0 = records[i - 1].t, t1 = records[i].t, t2 = records[i + 1].t;
            const double e0 = records[i - 1].E_k, e1 = records[i].E_k, e2 = records[i + 1].E_k;
            dEdt = e0 * (t1 - t2) / ((t0 - t1) * (t0 - t2)) +
                   e1 * (2 * t1 - t0 - t2) / ((t1 - t0) * (t1 - t2)) +
                   e2 * (t1 - t0) / ((t2 - t0) * (t2 - t1));
        }
        records[i].eps_total = -dEdt;
        records[i].eps_model = records[i].eps_total - records[i].eps_resolved;
    }
}

double h1_seminorm_error(const BasisCache& cache, const Vector& coeffs,
                         const ExactVelocity& exact) {
    double err = 0.0;
    sweep(cache, [&](const ElemData& ed, int qp, QpFields& f, const DivConformingSpace& sp) {
        eval_qp_fields(sp, ed, coeffs, qp, false, false, f);
        double ge[3][3] = {};
        exact.gradient(f.x, ge);
        double s = 0.0;
        const int dim = sp.mesh.dim;
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                const double d = f.gradu[i][j] - ge[i][j];
                s += d * d;
            }
        err += ed.qp_weight[qp] * s;
    });
    return std::sqrt(err);
}

double l2_error(const BasisCache& cache, const Vector& coeffs, const ExactVelocity& exact) {
    double err = 0.0;
    sweep(cache, [&](const ElemData& ed, int qp, QpFields& f, const DivConformingSpace& sp) {
        eval_qp_fields(sp, ed, coeffs, qp, false, false, f);
        double ue[3] = {0, 0, 0};
        exact.value(f.x, ue);
        double s = 0.0;
        for (int d = 0; d < sp.mesh.dim; ++d) {
            const double di = f.u[d] - ue[d];
            s += di * di;
        }
        err += ed.qp_weight[qp] * s;
    });
    return std::sqrt(err);
}

double h1_seminorm(const BasisCache& cache, const ExactVelocity& exact) {
    double s = 0.0;
    ElemData ed;
    for (long e = 0; e < cache.layout().n_elements; ++e) {
        cache.fill(e, ed);
        for (int qp = 0; qp < ed.nqp; ++qp) {
            double ge[3][3] = {};
            exact.gradient(&ed.qp_x[qp * 3], ge);
            double v = 0.0;
            const int dim = ed.dim;
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) v += ge[i][j] * ge[i][j];
            s += ed.qp_weight[qp] * v;
        }
    }
    return std::sqrt(s);
}

void write_csv(const std::vector<DiagnosticsRecord>& records, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw IoError("write_csv: cannot open " + path);
    std::fprintf(fp, "t,E_k,eps_total,eps_resolved,eps_model,div_max,newton_iters\n");
    for (const auto& r : records)
        std::fprintf(fp, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.t, r.E_k, r.eps_total,
                     r.eps_resolved, r.eps_model, r.div_max, r.newton_iters);
    if (std::fclose(fp) != 0) throw IoError("write_csv: write failure on " + path);
}

std::vector<DiagnosticsRecord> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("read_csv: empty file " + path);
    std::vector<DiagnosticsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        DiagnosticsRecord r;
        std::istringstream ss(line);
        char comma;
        ss >> r.t >> comma >> r.E_k >> comma >> r.eps_total >> comma >> r.eps_resolved >> comma >>
            r.eps_model >> comma >> r.div_max >> comma >> r.newton_iters;
        if (ss.fail()) throw IoError("read_csv: malformed row in " + path);
        out.push_back(r);
    }
    return out;
}

void sample_field(const DivConformingSpace& space, const Vector& coeffs, int points_per_dir,
                  bool pressure, const std::string& path) {
    if (points_per_dir < 2) throw InputError("sample_field: need at least 2 points per direction");
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw IoError("sample_field: cannot open " + path);
    const int dim = space.mesh.dim;
    if (dim == 2) std::fprintf(fp, pressure ? "x,y,p\n" : "x,y,u,v\n");
    else std::fprintf(fp, pressure ? "x,y,z,p\n" : "x,y,z,u,v,w\n");

    long total = 1;
    for (int d = 0; d < dim; ++d) total *= points_per_dir;
    for (long k = 0; k < total; ++k) {
        double x[3] = {0, 0, 0};
        long rem = k;
        for (int d = 0; d < dim; ++d) {
            const long i = rem % points_per_dir;
            rem /= points_per_dir;
            x[d] = space.mesh.lo[d] + space.mesh.extent(d) * static_cast<double>(i) /
                                          (points_per_dir - 1);
        }
        for (int d = 0; d < dim; ++d) std::fprintf(fp, "%.17g,", x[d]);
        if (pressure) {
            std::fprintf(fp, "%.17g\n", evaluate_pressure(space, coeffs, x));
        } else {
            double u[3] = {0, 0, 0};
            evaluate_velocity(space, coeffs, x, u);
            for (int d = 0; d < dim; ++d)
                std::fprintf(fp, d + 1 == dim ? "%.17g\n" : "%.17g,", u[d]);
        }
    }
    if (std::fclose(fp) != 0) throw IoError("sample_field: write failure on " + path);
}

} // namespace vms
