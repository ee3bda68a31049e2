// command-line driver: solver run <config> [--key value ...]
//                      solver rates <config> [--key value ...]
//                      solver check
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "vms/cases.hpp"

namespace {

void usage() {
    std::printf("usage:\n"
                "  solver run <config> [--key value ...]    run one case\n"
                "  solver rates <config> [--key value ...]  mesh-refinement study\n"
                "  solver check                              quick invariant suite\n"
                "\nconfig files hold key=value lines; --key value overrides them.\n"
                "SOLVER_OUTPUT_DIR overrides out_dir when set.\n");
}

std::vector<vms::KeyValue> parse_overrides(int argc, char** argv, int start) {
    std::vector<vms::KeyValue> out;
    for (int i = start; i < argc; i += 2) {
        const std::string key = argv[i];
        if (key.rfind("--", 0) != 0 || key.size() <= 2)
            throw vms::InputError("expected --key value, got '" + key + "'");
        if (i + 1 >= argc) throw vms::InputError("missing value for override '" + key + "'");
        out.emplace_back(key.substr(2), argv[i + 1]);
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        usage();
        return 2;
    }
    const std::string cmd = argv[1];
    try {
        if (cmd == "check") {
            return vms::run_check();
        }
        if (cmd == "run" || cmd == "rates") {
            if (argc < 3) {
                usage();
                return 2;
            }
            vms::CaseConfig cfg = vms::parse_config(argv[2], parse_overrides(argc, argv, 3));
            if (const char* env = std::getenv("SOLVER_OUTPUT_DIR"); env && *env)
                cfg.out_dir = env;
            return cmd == "run" ? vms::run_case(cfg) : vms::run_rates(cfg);
        }
        usage();
        return 2;
    } catch (const vms::InputError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const vms::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const vms::SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 3;
    } catch (const vms::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const vms::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
