#ifndef VMS_CONFIG_HPP
#define VMS_CONFIG_HPP

#include <string>
#include <vector>

#include "vms/oseen.hpp"
#include "vms/time_integration.hpp"

namespace vms {

/// Validated case configuration. Input grammar: flat `key=value` lines
/// ('#' starts a comment) plus command-line overrides `--key value`;
/// overrides win over file values, duplicates within one source are errors.
struct CaseConfig {
    std::string case_id; // oseen-conv | ldc | tgv2d | tgv3d
    int k_prime = 1;
    int n = 0;
    std::vector<int> n_list;

    double nu = 0.0;
    bool has_nu = false;
    double re = 0.0;
    bool has_re = false;

    TimeScheme scheme = TimeScheme::midpoint;
    SubscaleModel model = SubscaleModel::quasi_static;
    double dt = 0.0;
    double dt_ref = 0.0;
    double h_ref = 0.0;
    double T = 0.0;

    double c_inv = 36.0;
    TauCRule tau_c_rule = TauCRule::standard;
    int fine_pressure_refinement = 0;

    std::string out_dir = ".";
    std::string checkpoint;
    int sample_points = 0;

    NonlinearSettings newton;
    bool chord = false; // reuse factorized Jacobians across iterations/steps

    OseenRegime regime = OseenRegime::advective;
    std::string projector_solver = "direct"; // direct | iterated-penalty

    /// Viscosity after Re conversion (unit length and velocity scales).
    double viscosity() const;
    TimeSettings time_settings(double h) const;
    StabilizationConfig stabilization() const;
    std::string tag() const; // "<case>_<k'>_<n>"
};

using KeyValue = std::pair<std::string, std::string>;

CaseConfig parse_config(const std::string& path, const std::vector<KeyValue>& overrides = {});
CaseConfig parse_config_text(const std::string& text, const std::vector<KeyValue>& overrides = {});

} // namespace vms

#endif
