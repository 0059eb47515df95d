#include "slowfast/model_zoo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

namespace gaussian {
double mean_sin(double m) { return std::sin(m) * std::exp(-0.5); }
double mean_exp_neg_sq(double m) { return std::exp(-m * m / 3.0) / std::sqrt(3.0); }
}  // namespace gaussian

namespace {

constexpr Arity kXY{false, true, true};
constexpr Arity kY{false, false, true};
constexpr Shape kScalar{1, 1};

CoefficientField ou_drift(double theta) {
    return CoefficientField(
        "b", kXY, kScalar,
        [theta](double, std::span<const double> x, std::span<const double> y,
                std::span<double> out) { out[0] = theta * (std::tanh(y[0]) - x[0]); },
        HolderMeta{1.0, 2.0, std::nullopt});
}

CoefficientField ou_sigma(double theta) {
    return CoefficientField::constant("sigma", kScalar, {std::sqrt(2.0 * theta)});
}

SamplingPlan default_plan() { return SamplingPlan::centered_box(1, 1, 4.0); }

EffectiveSystem unit_noise_effective(std::function<double(double)> drift, std::string text) {
    return EffectiveSystem(
        1,
        [drift = std::move(drift)](double, std::span<const double> y, std::span<double> out) {
            out[0] = drift(y[0]);
        },
        [](double, std::span<const double>, std::span<double> out) { out[0] = 1.0; },
        EffectiveSystem::Provenance::ClosedForm, std::move(text));
}

ZooEntry ou_smooth() {
    ZooEntry e;
    e.id = "ou-smooth";
    e.alpha = 2.0;
    e.delta = 1.0;
    e.notes = "F = sin(x) - y, G = 1; Fbar(y) = sin(tanh y) e^{-1/2} - y";
    e.validation_plan = default_plan();
    e.make = [](double eps) {
        CoefficientField F(
            "F", kXY, kScalar,
            [](double, std::span<const double> x, std::span<const double> y,
               std::span<double> out) { out[0] = std::sin(x[0]) - y[0]; },
            HolderMeta{1.0, 2.0, std::nullopt});
        return SlowFastSystem("ou-smooth", 1, 1, ou_drift(1.0), ou_sigma(1.0), std::move(F),
                              CoefficientField::constant("G", kScalar, {1.0}), eps, false, {0.0},
                              {0.5});
    };
    e.closed_form_effective = unit_noise_effective(
        [](double y) { return gaussian::mean_sin(std::tanh(y)) - y; },
        "ou-smooth closed form: Fbar(y) = sin(tanh y) e^{-1/2} - y, Gbar = 1");
    return e;
}

ZooEntry ou_holder(double alpha, const std::string& id) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw LookupError("ou-holder exponent must lie in (0, 1], got " + format_double(alpha));
    auto holder = [alpha](double y) { return std::min(std::pow(std::abs(y), alpha), 1.0); };
    ZooEntry e;
    e.id = id;
    e.alpha = alpha;
    e.delta = 1.0;
    e.notes = "F = sin(x) + min(|y|^alpha, 1) - y, G = 1, started on the singularity y = 0";
    e.validation_plan = default_plan();
    e.make = [alpha, holder, id](double eps) {
        CoefficientField F(
            "F", kXY, kScalar,
            [holder](double, std::span<const double> x, std::span<const double> y,
                     std::span<double> out) { out[0] = std::sin(x[0]) + holder(y[0]) - y[0]; },
            HolderMeta{1.0, alpha, std::nullopt});
        return SlowFastSystem(id, 1, 1, ou_drift(1.0), ou_sigma(1.0), std::move(F),
                              CoefficientField::constant("G", kScalar, {1.0}), eps, false, {0.0},
                              {0.0});
    };
    e.closed_form_effective = unit_noise_effective(
        [holder](double y) { return gaussian::mean_sin(std::tanh(y)) + holder(y) - y; },
        id + " closed form: Fbar(y) = sin(tanh y) e^{-1/2} + min(|y|^alpha, 1) - y, Gbar = 1");
    return e;
}

// Weak-mode system with x-dependent slow noise. The slow fast-relaxation
// (theta = 1/2) and the fast start x0 = 3 give an O(eps) initial layer that
// dominates the weak error.
constexpr double kCoupledTheta = 0.5;
constexpr double kCoupledAmplitude = 2.5;

double coupled_h(double y) {
    const double m = std::tanh(y);
    return 0.5 * m * m;
}

ZooEntry fully_coupled_weak() {
    ZooEntry e;
    e.id = "fully-coupled-weak";
    e.alpha = 2.0;
    e.delta = 1.0;
    e.notes =
        "theta = 1/2, F = 2.5 sin(x) - y, G = sqrt(1 + e^{-x^2}/2 + tanh(y)^2/2); "
        "Gbar^2 = 1 + e^{-m^2/3}/(2 sqrt 3) + tanh(y)^2/2 with m = tanh y";
    e.validation_plan = default_plan();
    e.make = [](double eps) {
        CoefficientField F(
            "F", kXY, kScalar,
            [](double, std::span<const double> x, std::span<const double> y,
               std::span<double> out) { out[0] = kCoupledAmplitude * std::sin(x[0]) - y[0]; },
            HolderMeta{1.0, 2.0, std::nullopt});
        CoefficientField G(
            "G", kXY, kScalar,
            [](double, std::span<const double> x, std::span<const double> y,
               std::span<double> out) {
                out[0] = std::sqrt(1.0 + 0.5 * std::exp(-x[0] * x[0]) + coupled_h(y[0]));
            },
            HolderMeta{1.0, 2.0, std::nullopt}, std::sqrt(2.0));
        return SlowFastSystem("fully-coupled-weak", 1, 1, ou_drift(kCoupledTheta),
                              ou_sigma(kCoupledTheta), std::move(F), std::move(G), eps, true,
                              {3.0}, {0.5});
    };
    e.closed_form_effective = EffectiveSystem(
        1,
        [](double, std::span<const double> y, std::span<double> out) {
            out[0] = kCoupledAmplitude * gaussian::mean_sin(std::tanh(y[0])) - y[0];
        },
        [](double, std::span<const double> y, std::span<double> out) {
            const double m = std::tanh(y[0]);
            out[0] = std::sqrt(1.0 + 0.5 * gaussian::mean_exp_neg_sq(m) + coupled_h(y[0]));
        },
        EffectiveSystem::Provenance::ClosedForm,
        "fully-coupled-weak closed form: Fbar = 2.5 sin(tanh y) e^{-1/2} - y, "
        "Gbar^2 = 1 + e^{-m^2/3}/(2 sqrt 3) + tanh(y)^2/2");
    return e;
}

ZooEntry unbounded_local() {
    ZooEntry e;
    e.id = "unbounded-local";
    e.alpha = 2.0;
    e.delta = 1.0;
    e.notes = "F = sin(x) sqrt(1 + y^2) - 2y grows linearly in y; dissipative, G = 1";
    e.validation_plan = default_plan();
    e.make = [](double eps) {
        CoefficientField F(
            "F", kXY, kScalar,
            [](double, std::span<const double> x, std::span<const double> y,
               std::span<double> out) {
                out[0] = std::sin(x[0]) * std::sqrt(1.0 + y[0] * y[0]) - 2.0 * y[0];
            },
            HolderMeta{1.0, 2.0, std::nullopt});
        return SlowFastSystem("unbounded-local", 1, 1, ou_drift(1.0), ou_sigma(1.0),
                              std::move(F), CoefficientField::constant("G", kScalar, {1.0}), eps,
                              false, {0.0}, {2.0});
    };
    e.closed_form_effective = unit_noise_effective(
        [](double y) {
            return gaussian::mean_sin(std::tanh(y)) * std::sqrt(1.0 + y * y) - 2.0 * y;
        },
        "unbounded-local closed form: Fbar = sin(tanh y) e^{-1/2} sqrt(1 + y^2) - 2y, Gbar = 1");
    return e;
}

std::optional<double> parse_holder_exponent(const std::string& id) {
    std::string_view rest;
    const std::string_view s(id);
    if (s.starts_with("ou-holder(") && s.ends_with(")"))
        rest = s.substr(10, s.size() - 11);
    else if (s.starts_with("ou-holder-"))
        rest = s.substr(10);
    else
        return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
    if (ec != std::errc() || ptr != rest.data() + rest.size() || rest.empty())
        throw LookupError("cannot parse the exponent in zoo id '" + id + "'");
    return value;
}

}  // namespace

ZooEntry get_zoo(const std::string& id) {
    if (id == "ou-smooth") return ou_smooth();
    if (id == "fully-coupled-weak") return fully_coupled_weak();
    if (id == "unbounded-local") return unbounded_local();
    if (const auto alpha = parse_holder_exponent(id)) return ou_holder(*alpha, id);
    throw LookupError("unknown zoo id '" + id + "'");
}

std::vector<std::string> list_zoo() {
    return {"fully-coupled-weak", "ou-holder-0.5", "ou-holder-1", "ou-smooth",
            "unbounded-local"};
}

}  // namespace slowfast
