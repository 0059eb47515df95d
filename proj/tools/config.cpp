#include "config.hpp"

#include <cmath>

#include "slowfast/csv.hpp"

namespace slowfast::cli {

namespace {

using nlohmann::json;

// One table drives serialisation in both directions so the two never drift.
template <class F>
void for_each_field(ExperimentConfig& c, F&& f) {
    f("command", c.command);
    f("zoo", c.zoo);
    f("effective", c.effective);
    f("epsilons", c.epsilons);
    f("epsilon", c.epsilon);
    f("macro_dt", c.macro_dt);
    f("micro_substeps", c.micro_substeps);
    f("horizon", c.horizon);
    f("stability_factor", c.stability_factor);
    f("n_mc", c.n_mc);
    f("seed", c.seed);
    f("path_index", c.path_index);
    f("x0", c.x0);
    f("y0", c.y0);
    f("measure_dt", c.measure_dt);
    f("burn_in", c.burn_in);
    f("measure_count", c.measure_count);
    f("thinning", c.thinning);
    f("cache_pitch", c.cache_pitch);
    f("y_points", c.y_points);
    f("gate", c.gate);
    f("t_probe", c.t_probe);
    f("effective_macro_dt", c.effective_macro_dt);
    f("effective_paths", c.effective_paths);
    f("alphas", c.alphas);
    f("levels", c.levels);
    f("grid_lo", c.grid_lo);
    f("grid_hi", c.grid_hi);
    f("grid_points", c.grid_points);
    f("quadrature_order", c.quadrature_order);
    f("quadrature_panels", c.quadrature_panels);
    f("y", c.y);
    f("x_points", c.x_points);
    f("t_max", c.t_max);
    f("poisson_dt", c.poisson_dt);
    f("probe_t", c.probe_t);
    f("probe_x", c.probe_x);
    f("probe_y", c.probe_y);
    f("plot", c.plot);
    f("output_dir", c.output_dir);
    f("workers", c.workers);
}

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw ConfigError("invalid config field '" + field + "': " + why);
}

void positive(const std::string& field, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(field, "must be positive, got " + format_double(v));
}

}  // namespace

void ExperimentConfig::check() const {
    if (epsilons.empty()) fail("epsilons", "must not be empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        positive("epsilons", epsilons[i]);
        if (i > 0 && !(epsilons[i] < epsilons[i - 1])) fail("epsilons", "must be decreasing");
    }
    positive("epsilon", epsilon);
    positive("macro_dt", macro_dt);
    positive("horizon", horizon);
    positive("stability_factor", stability_factor);
    positive("measure_dt", measure_dt);
    if (!(burn_in >= 0.0)) fail("burn_in", "must be non-negative");
    if (measure_count == 0) fail("measure_count", "must be positive");
    if (thinning == 0) fail("thinning", "must be positive");
    positive("cache_pitch", cache_pitch);
    positive("t_probe", t_probe);
    positive("effective_macro_dt", effective_macro_dt);
    for (double a : alphas)
        if (!(a > 0.0 && a <= 2.0)) fail("alphas", "entries must lie in (0, 2]");
    for (double n : levels)
        if (!(n >= 1.0) || n != std::floor(n)) fail("levels", "entries must be positive integers");
    if (!(grid_hi > grid_lo)) fail("grid_hi", "must exceed grid_lo");
    if (grid_points == 0) fail("grid_points", "must be positive");
    if (quadrature_order < 8) fail("quadrature_order", "must be at least 8");
    if (quadrature_panels == 0) fail("quadrature_panels", "must be positive");
    positive("t_max", t_max);
    positive("poisson_dt", poisson_dt);
    if (!(probe_t >= 0.0)) fail("probe_t", "must be non-negative");
    if (workers == 0) fail("workers", "must be positive");
    if (effective != "closed-form" && effective != "numeric")
        fail("effective", "must be 'closed-form' or 'numeric'");
}

json to_json(const ExperimentConfig& c) {
    json j = json::object();
    auto copy = c;
    for_each_field(copy, [&](const char* key, const auto& value) { j[key] = value; });
    return j;
}

ExperimentConfig from_json(const json& j, ExperimentConfig base) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::vector<std::string> known;
    for_each_field(base, [&](const char* key, auto& value) {
        known.emplace_back(key);
        const auto it = j.find(key);
        if (it == j.end()) return;
        using T = std::remove_reference_t<decltype(value)>;
        try {
            if constexpr (std::is_same_v<T, std::uint64_t>) {
                if (!it->is_number_unsigned()) fail(key, "expected a non-negative integer");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) fail(key, "expected a number");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) fail(key, "expected true or false");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) fail(key, "expected a string");
            } else {
                if (!it->is_array()) fail(key, "expected an array of numbers");
                for (const auto& e : *it)
                    if (!e.is_number()) fail(key, "expected an array of numbers");
            }
            value = it->template get<T>();
        } catch (const json::exception& e) {
            fail(key, e.what());
        }
    });
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config field '" + key + "'");
    return base;
}

std::string canonical_json(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("workers");
    j.erase("output_dir");
    return j.dump();
}

std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(canonical_json(c))); }

}  // namespace slowfast::cli
