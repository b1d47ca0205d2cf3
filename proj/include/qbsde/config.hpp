#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbsde/io.hpp"

namespace qbsde {

/// Shared numeric environment of every experiment command. All fields carry
/// their defaults here, so a serialized config always shows the complete
/// effective state, and its hash identifies the run.
struct ExperimentConfig {
    std::string driver = "quadratic:gamma=1";
    std::string terminal = "tanh";
    double T = 1.0;
    int m = 200;
    double dx = 0.02;
    double L = 8.0;
    int N = 20000;
    std::uint64_t seed = 2026;
    int threads = 0;

    // truncation sweep
    std::vector<double> schedule = {1.0, 2.0, 4.0, 8.0, 16.0};
    double early_stop_gap = 0.0;
    double gap_p = 2.0;
    int bmo_bins = 8;

    // certified test functions
    double eps = 0.5;
    double r_y = 1.0;
    int budget = 128;
    double z_radius = 8.0;

    // coupled motions
    std::vector<double> rhos = {0.0, 0.5, 0.9, 1.0};
    std::vector<double> epss = {1.0, 0.5, 0.25};
    double k_solve = 16.0;
};

/// Serializes everything that affects the numbers. `threads` is deliberately
/// absent: results are byte-identical for every worker count, so it is not
/// part of the run's identity.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["driver"] = c.driver;
    j["terminal"] = c.terminal;
    j["T"] = c.T;
    j["m"] = c.m;
    j["dx"] = c.dx;
    j["L"] = c.L;
    j["N"] = c.N;
    j["seed"] = c.seed;
    j["schedule"] = c.schedule;
    j["early_stop_gap"] = c.early_stop_gap;
    j["gap_p"] = c.gap_p;
    j["bmo_bins"] = c.bmo_bins;
    j["eps"] = c.eps;
    j["r_y"] = c.r_y;
    j["budget"] = c.budget;
    j["z_radius"] = c.z_radius;
    j["rhos"] = c.rhos;
    j["epss"] = c.epss;
    j["k_solve"] = c.k_solve;
    return j;
}

/// Strict parse: every key must be known, every value must have the right
/// shape. Unknown keys are configuration errors, not silent no-ops.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    ExperimentConfig c;
    for (const auto& [key, val] : j.items()) {
        try {
            if (key == "driver") c.driver = val.get<std::string>();
            else if (key == "terminal") c.terminal = val.get<std::string>();
            else if (key == "T") c.T = val.get<double>();
            else if (key == "m") c.m = val.get<int>();
            else if (key == "dx") c.dx = val.get<double>();
            else if (key == "L") c.L = val.get<double>();
            else if (key == "N") c.N = val.get<int>();
            else if (key == "seed") c.seed = val.get<std::uint64_t>();
            else if (key == "threads") c.threads = val.get<int>(); // accepted, never hashed
            else if (key == "schedule") c.schedule = val.get<std::vector<double>>();
            else if (key == "early_stop_gap") c.early_stop_gap = val.get<double>();
            else if (key == "gap_p") c.gap_p = val.get<double>();
            else if (key == "bmo_bins") c.bmo_bins = val.get<int>();
            else if (key == "eps") c.eps = val.get<double>();
            else if (key == "r_y") c.r_y = val.get<double>();
            else if (key == "budget") c.budget = val.get<int>();
            else if (key == "z_radius") c.z_radius = val.get<double>();
            else if (key == "rhos") c.rhos = val.get<std::vector<double>>();
            else if (key == "epss") c.epss = val.get<std::vector<double>>();
            else if (key == "k_solve") c.k_solve = val.get<double>();
            else throw std::invalid_argument("config: unknown key '" + key + "'");
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config: bad value for key '" + key + "'");
        }
    }
    return c;
}

/// Canonical serialization (object keys are stored sorted) hashed with
/// FNV-1a; embedded in every artifact an experiment writes.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    return fnv1a64(config_to_json(c).dump());
}

} // namespace qbsde
