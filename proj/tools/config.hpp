#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace slowfast::cli {

/// Every knob of a CLI run. Zero counts mean "the subcommand's default".
struct ExperimentConfig {
    std::string command;
    std::string zoo = "ou-smooth";
    std::string effective = "closed-form";  ///< or "numeric"

    std::vector<double> epsilons{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
    double epsilon = 1.0 / 64;
    double macro_dt = 1.0 / 256;
    std::uint64_t micro_substeps = 0;
    double horizon = 1.0;
    double stability_factor = 0.05;
    std::uint64_t n_mc = 0;
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    std::vector<double> x0;
    std::vector<double> y0;

    double measure_dt = 1e-3;
    double burn_in = 10.0;
    std::uint64_t measure_count = 20000;
    std::uint64_t thinning = 100;
    double cache_pitch = 1e-2;
    std::vector<double> y_points{-1.0, -0.5, 0.0, 0.5, 1.0};

    bool gate = true;
    double t_probe = 1.0;
    double effective_macro_dt = 1.0 / 1024;
    std::uint64_t effective_paths = 0;

    std::vector<double> alphas{0.5, 1.0};
    std::vector<double> levels{4, 8, 16, 32, 64};
    double grid_lo = -2.0;
    double grid_hi = 2.0;
    std::uint64_t grid_points = 41;
    std::uint64_t quadrature_order = 8;
    std::uint64_t quadrature_panels = 64;

    std::vector<double> y{0.5};
    std::vector<double> x_points{-2.25, -1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75, 2.25};
    double t_max = 20.0;
    double poisson_dt = 1e-2;

    double probe_t = 0.0;
    std::vector<double> probe_x{3.0};
    std::vector<double> probe_y{0.0};

    bool plot = false;
    std::string output_dir = ".";
    std::uint64_t workers = 1;

    /// Throws ConfigError naming the first offending field.
    void check() const;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Fields missing from `j` keep their value in `base`; unknown keys and type
/// mismatches raise ConfigError naming the key.
ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base = {});

/// Canonical JSON without the fields that may not influence results
/// (workers, output_dir).
std::string canonical_json(const ExperimentConfig& c);
std::string config_hash(const ExperimentConfig& c);

}  // namespace slowfast::cli
