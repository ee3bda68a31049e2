#include "vms/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace vms {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InputError("config: invalid numeric value for key '" + key + "': " + v);
    }
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int i = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw InputError("config: invalid integer value for key '" + key + "': " + v);
    }
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    if (out.empty()) throw InputError("config: empty list for key '" + key + "'");
    return out;
}

} // namespace

double CaseConfig::viscosity() const {
    if (has_nu) return nu;
    if (has_re) return 1.0 / re; // unit length and velocity scales
    throw InputError("config: case '" + case_id + "' needs nu or re");
}

TimeSettings CaseConfig::time_settings(double h) const {
    TimeSettings t;
    t.scheme = scheme;
    t.T = T;
    if (dt_ref > 0) {
        t.dt_proportional_to_h = true;
        t.dt_ref = dt_ref;
        t.h_ref = h_ref;
    } else {
        t.dt = dt;
    }
    (void)h;
    return t;
}

StabilizationConfig CaseConfig::stabilization() const {
    StabilizationConfig s;
    s.c_inv = c_inv;
    s.model = model;
    s.tau_c_rule = tau_c_rule;
    s.newton = newton;
    s.newton.chord_iterations = chord;
    return s;
}

std::string CaseConfig::tag() const {
    return case_id + "_" + std::to_string(k_prime) + "_" + std::to_string(n);
}

namespace {

CaseConfig from_map(const std::map<std::string, std::string>& kv) {
    static const std::set<std::string> known = {
        "case",       "k_prime",   "n",          "n_list",         "nu",
        "re",         "scheme",    "model",      "dt",             "dt_ref",
        "h_ref",      "T",         "c_inv",      "tau_c_rule",     "out_dir",
        "checkpoint", "regime",    "sample_points", "newton_rel_tol", "newton_abs_tol",
        "newton_max_iters", "newton_relaxation", "chord", "fine_pressure_refinement",
        "projector_solver"};
    for (const auto& [k, v] : kv)
        if (!known.count(k)) throw InputError("config: unknown key '" + k + "'");

    CaseConfig c;
    auto get = [&kv](const char* k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };

    const std::string* v = get("case");
    if (!v) throw InputError("config: missing required key 'case'");
    c.case_id = *v;
    if (c.case_id != "oseen-conv" && c.case_id != "ldc" && c.case_id != "tgv2d" &&
        c.case_id != "tgv3d")
        throw InputError("config: unknown case '" + c.case_id + "'");

    if ((v = get("k_prime"))) c.k_prime = to_int("k_prime", *v);
    if (c.k_prime < 1 || c.k_prime > 2) throw InputError("config: k_prime must be 1 or 2");
    if ((v = get("n"))) c.n = to_int("n", *v);
    if ((v = get("n_list"))) c.n_list = to_int_list("n_list", *v);

    if ((v = get("nu"))) {
        c.nu = to_double("nu", *v);
        c.has_nu = true;
        if (!(c.nu > 0)) throw InputError("config: nu must be > 0");
    }
    if ((v = get("re"))) {
        c.re = to_double("re", *v);
        c.has_re = true;
        if (!(c.re > 0)) throw InputError("config: re must be > 0");
    }
    if (c.has_nu && c.has_re) throw InputError("config: give either nu or re, not both");

    if ((v = get("scheme"))) {
        if (*v == "backward-euler") c.scheme = TimeScheme::backward_euler;
        else if (*v == "midpoint") c.scheme = TimeScheme::midpoint;
        else throw InputError("config: scheme must be backward-euler or midpoint");
    }
    if ((v = get("model"))) {
        if (*v == "dynamic") c.model = SubscaleModel::dynamic;
        else if (*v == "quasi-static") c.model = SubscaleModel::quasi_static;
        else if (*v == "none") c.model = SubscaleModel::none;
        else throw InputError("config: model must be dynamic, quasi-static or none");
    }
    if ((v = get("dt"))) {
        c.dt = to_double("dt", *v);
        if (!(c.dt > 0)) throw InputError("config: dt must be > 0");
    }
    if ((v = get("dt_ref"))) {
        c.dt_ref = to_double("dt_ref", *v);
        if (!(c.dt_ref > 0)) throw InputError("config: dt_ref must be > 0");
    }
    if ((v = get("h_ref"))) {
        c.h_ref = to_double("h_ref", *v);
        if (!(c.h_ref > 0)) throw InputError("config: h_ref must be > 0");
    }
    if ((v = get("T"))) {
        c.T = to_double("T", *v);
        if (!(c.T > 0)) throw InputError("config: T must be > 0");
    }
    if ((v = get("c_inv"))) {
        c.c_inv = to_double("c_inv", *v);
        if (!(c.c_inv > 0)) throw InputError("config: c_inv must be > 0");
    }
    if ((v = get("tau_c_rule"))) {
        if (*v == "standard") c.tau_c_rule = TauCRule::standard;
        else if (*v == "zero") c.tau_c_rule = TauCRule::zero;
        else throw InputError("config: tau_c_rule must be standard or zero");
    }
    if ((v = get("fine_pressure_refinement"))) {
        c.fine_pressure_refinement = to_int("fine_pressure_refinement", *v);
        if (c.fine_pressure_refinement < 0)
            throw InputError("config: fine_pressure_refinement must be >= 0");
    }
    if ((v = get("out_dir"))) c.out_dir = *v;
    if ((v = get("checkpoint"))) c.checkpoint = *v;
    if ((v = get("sample_points"))) c.sample_points = to_int("sample_points", *v);
    if ((v = get("newton_rel_tol"))) c.newton.rel_tol = to_double("newton_rel_tol", *v);
    if ((v = get("newton_abs_tol"))) c.newton.abs_tol = to_double("newton_abs_tol", *v);
    if ((v = get("newton_max_iters"))) c.newton.max_iters = to_int("newton_max_iters", *v);
    if ((v = get("newton_relaxation"))) c.newton.relaxation = to_double("newton_relaxation", *v);
    if ((v = get("chord"))) c.chord = to_int("chord", *v) != 0;
    if ((v = get("regime"))) {
        if (*v == "advective") c.regime = OseenRegime::advective;
        else if (*v == "diffusive") c.regime = OseenRegime::diffusive;
        else throw InputError("config: regime must be advective or diffusive");
    }
    if ((v = get("projector_solver"))) {
        if (*v != "direct" && *v != "iterated-penalty")
            throw InputError("config: projector_solver must be direct or iterated-penalty");
        c.projector_solver = *v;
    }
    c.newton.validate();

    // per-case requirements
    const bool transient = (c.case_id == "tgv2d" || c.case_id == "tgv3d");
    if (transient) {
        if (!(c.T > 0)) throw InputError("config: missing required key 'T'");
        if (!(c.dt > 0) && !(c.dt_ref > 0 && c.h_ref > 0))
            throw InputError("config: transient cases need dt, or dt_ref with h_ref");
    }
    if (c.case_id == "tgv2d" && !c.has_nu)
        throw InputError("config: tgv2d requires an explicit nu");
    if (c.case_id == "ldc" && !c.has_nu && !c.has_re)
        throw InputError("config: ldc requires nu or re");
    if (c.case_id == "tgv3d" && !c.has_nu && !c.has_re)
        throw InputError("config: tgv3d requires nu or re");
    if (c.case_id == "ldc" && c.model == SubscaleModel::dynamic)
        throw InputError("config: the steady cavity uses quasi-static subscales");
    return c;
}

CaseConfig build(const std::vector<std::string>& lines, const std::vector<KeyValue>& overrides) {
    std::map<std::string, std::string> kv;
    for (const auto& raw : lines) {
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config: expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw InputError("config: empty key in '" + line + "'");
        if (kv.count(key)) throw InputError("config: duplicate key '" + key + "'");
        kv[key] = value;
    }
    std::set<std::string> seen;
    for (const auto& [k, val] : overrides) {
        if (seen.count(k)) throw InputError("config: duplicate override '--" + k + "'");
        seen.insert(k);
        kv[k] = val; // command line wins over the file
    }
    return from_map(kv);
}

} // namespace

CaseConfig parse_config(const std::string& path, const std::vector<KeyValue>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return build(lines, overrides);
}

CaseConfig parse_config_text(const std::string& text, const std::vector<KeyValue>& overrides) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return build(lines, overrides);
}

} // namespace vms
