#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "slowfast/averaging.hpp"
#include "slowfast/core_model.hpp"
#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"
#include "slowfast/harness.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model_zoo.hpp"
#include "slowfast/mollify.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/poisson.hpp"
#include "slowfast/stats.hpp"
#include "slowfast/svg.hpp"

namespace slowfast::cli {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kMeasureTag = 0x706f6973;  // stream tag for the Poisson measure chain

struct Context {
    const ExperimentConfig& cfg;
    std::ostream& out;
};

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

std::ofstream open_output(const Context& ctx, const std::string& name) {
    const fs::path dir(ctx.cfg.output_dir);
    fs::create_directories(dir);
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw ArgumentError("cannot open output file " + (dir / name).string());
    return os;
}

/// Every output file starts with the same provenance block.
void write_provenance(std::ostream& os, const ExperimentConfig& cfg) {
    CsvWriter csv(os);
    csv.comment("slowfast", SLOWFAST_VERSION);
    csv.comment("command", cfg.command);
    csv.comment("config_hash", config_hash(cfg));
    csv.comment("seed", std::to_string(cfg.seed));
    csv.comment("config", canonical_json(cfg));
}

SlowFastSystem make_system(const ExperimentConfig& cfg, const ZooEntry& entry, double epsilon) {
    SlowFastSystem sys = entry.system(epsilon);
    if (cfg.x0.empty() && cfg.y0.empty()) return sys;
    auto x0 = cfg.x0.empty() ? sys.x0() : cfg.x0;
    auto y0 = cfg.y0.empty() ? sys.y0() : cfg.y0;
    if (x0.size() != sys.d1()) throw ConfigError("invalid config field 'x0': expected " +
                                                 std::to_string(sys.d1()) + " components");
    if (y0.size() != sys.d2()) throw ConfigError("invalid config field 'y0': expected " +
                                                 std::to_string(sys.d2()) + " components");
    return sys.with_initial_state(std::move(x0), std::move(y0));
}

AveragingConfig averaging_config(const ExperimentConfig& cfg) {
    AveragingConfig a;
    a.measure.dt = cfg.measure_dt;
    a.measure.burn_in = cfg.burn_in;
    a.measure.count = cfg.measure_count;
    a.measure.thinning = cfg.thinning;
    a.cache_pitch = cfg.cache_pitch;
    a.master_seed = cfg.seed;
    return a;
}

EffectiveSystem make_effective(const Context& ctx, const ZooEntry& entry,
                               const SlowFastSystem& sys) {
    if (ctx.cfg.effective == "closed-form") {
        if (entry.closed_form_effective) return *entry.closed_form_effective;
        ctx.out << "note: " << entry.id << " has no closed-form effective system; averaging numerically\n";
    }
    return build_effective_system(sys, averaging_config(ctx.cfg));
}

/// Splits a flat list into points of `dim` coordinates.
std::vector<std::vector<double>> group_points(const std::vector<double>& flat, std::size_t dim,
                                              const std::string& field) {
    if (flat.empty() || flat.size() % dim != 0)
        throw ConfigError("invalid config field '" + field + "': expected a non-empty multiple of " +
                          std::to_string(dim) + " values");
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < flat.size(); i += dim)
        pts.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i),
                         flat.begin() + static_cast<std::ptrdiff_t>(i + dim));
    return pts;
}

RateExperiment rate_experiment(const ExperimentConfig& cfg, std::size_t default_paths) {
    RateExperiment ex;
    ex.epsilons = cfg.epsilons;
    ex.macro_dt = cfg.macro_dt;
    ex.horizon = cfg.horizon;
    ex.stability_factor = cfg.stability_factor;
    ex.n_mc = cfg.n_mc ? cfg.n_mc : default_paths;
    ex.master_seed = cfg.seed;
    ex.workers = cfg.workers;
    return ex;
}

void write_rate_svg(const Context& ctx, const std::string& name, const std::string& title,
                    const ErrorTable& table, const std::optional<RateFit>& fit) {
    auto os = open_output(ctx, name);
    std::optional<LogLogLine> line;
    if (fit) line = LogLogLine{fit->slope, fit->intercept};
    write_loglog_svg(os, title, "epsilon", "error", table.epsilons, table.errors, line);
}

int cmd_validate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto sys = make_system(cfg, entry, cfg.epsilon);
    const auto report = validate_system(sys, entry.validation_plan);
    auto os = open_output(ctx, "validate.txt");
    write_provenance(os, cfg);
    os << report.to_text();
    ctx.out << "validate " << sys.id() << ": " << report.violation_count << " violations, lambda_hat "
            << format_double(report.lambda_hat) << ", recurrence "
            << (report.recurrence_ok ? "ok" : "failed") << ": " << verdict(report.passed()) << '\n';
    return report.passed() ? kExitPass : kExitCheckFailed;
}

int cmd_simulate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto sys = make_system(cfg, entry, cfg.epsilon);
    StepPlan plan = cfg.micro_substeps
                        ? StepPlan{cfg.macro_dt, static_cast<std::size_t>(cfg.micro_substeps), cfg.horizon}
                        : StepPlan::for_epsilon(cfg.macro_dt, cfg.horizon, cfg.epsilon,
                                                cfg.stability_factor);
    plan.check_coupled(cfg.epsilon, cfg.stability_factor);

    const auto coupled = simulate_coupled(sys, plan, cfg.path_index, cfg.seed, cfg.stability_factor);
    const auto effective = make_effective(ctx, entry, sys);
    auto streams = coupled_pair(cfg.seed, cfg.path_index, sys.d2());
    const auto ybar = simulate_effective(effective, plan, streams.second, sys.y0());

    auto os = open_output(ctx, "simulate.csv");
    write_provenance(os, cfg);
    CsvWriter csv(os);
    csv.comment("system", sys.id());
    csv.comment("epsilon", format_double(cfg.epsilon));
    csv.comment("macro_dt", format_double(plan.macro_dt));
    csv.comment("micro_substeps", std::to_string(plan.micro_substeps));
    csv.comment("path_index", std::to_string(cfg.path_index));
    csv.comment("effective", effective.description());
    std::vector<std::string> cols{"t"};
    for (std::size_t i = 0; i < sys.d1(); ++i) cols.push_back("x" + std::to_string(i + 1));
    for (std::size_t i = 0; i < sys.d2(); ++i) cols.push_back("y" + std::to_string(i + 1));
    for (std::size_t i = 0; i < sys.d2(); ++i) cols.push_back("ybar" + std::to_string(i + 1));
    csv.header(cols);
    std::vector<double> row;
    for (std::size_t k = 0; k < coupled.size(); ++k) {
        row.assign(1, coupled.times()[k]);
        const auto s = coupled.state(k);
        row.insert(row.end(), s.begin(), s.end());
        const auto e = ybar.state(k);
        row.insert(row.end(), e.begin(), e.end());
        csv.row(row);
    }
    ctx.out << "simulate " << sys.id() << ": " << coupled.size() << " macro states written\n";
    return kExitPass;
}

int cmd_average(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto sys = make_system(cfg, entry, cfg.epsilon);
    const std::size_t d2 = sys.d2();
    const auto ys = group_points(cfg.y_points, d2, "y_points");
    const auto table = effective_table(sys, averaging_config(cfg), 0.0, ys);
    const auto& closed = entry.closed_form_effective;

    std::vector<std::string> cols;
    auto idx = [](std::size_t i) { return std::to_string(i + 1); };
    for (std::size_t i = 0; i < d2; ++i) cols.push_back("y" + idx(i));
    for (std::size_t i = 0; i < d2; ++i) cols.push_back("drift" + idx(i));
    for (std::size_t i = 0; i < d2; ++i) cols.push_back("drift_stderr" + idx(i));
    for (std::size_t i = 0; i < d2; ++i)
        for (std::size_t j = 0; j < d2; ++j) cols.push_back("diffusion" + idx(i) + idx(j));
    if (closed) {
        for (std::size_t i = 0; i < d2; ++i) cols.push_back("closed_drift" + idx(i));
        for (std::size_t i = 0; i < d2; ++i)
            for (std::size_t j = 0; j < d2; ++j) cols.push_back("closed_diffusion" + idx(i) + idx(j));
        for (std::size_t i = 0; i < d2; ++i) cols.push_back("z" + idx(i));
    }

    bool ok = true;
    double worst_z = 0.0;
    std::vector<std::vector<double>> rows;
    for (const auto& r : table) {
        std::vector<double> row(r.y);
        row.insert(row.end(), r.drift.begin(), r.drift.end());
        row.insert(row.end(), r.drift_stderr.begin(), r.drift_stderr.end());
        row.insert(row.end(), r.diffusion.begin(), r.diffusion.end());
        if (closed) {
            std::vector<double> drift(d2), diff(d2 * d2);
            closed->drift(r.t, r.y, drift);
            closed->diffusion(r.t, r.y, diff);
            row.insert(row.end(), drift.begin(), drift.end());
            row.insert(row.end(), diff.begin(), diff.end());
            for (std::size_t i = 0; i < d2; ++i) {
                const double z = r.drift_stderr[i] > 0.0
                                     ? (r.drift[i] - drift[i]) / r.drift_stderr[i]
                                     : (r.drift[i] == drift[i] ? 0.0 : HUGE_VAL);
                worst_z = std::max(worst_z, std::abs(z));
                if (std::abs(z) > 3.0) ok = false;
                row.push_back(z);
            }
        }
        rows.push_back(std::move(row));
    }

    auto os = open_output(ctx, "average.csv");
    write_provenance(os, cfg);
    CsvWriter csv(os);
    csv.comment("system", sys.id());
    csv.comment("measure_count", std::to_string(cfg.measure_count));
    if (closed) csv.comment("max_abs_z", format_double(worst_z));
    csv.header(cols);
    for (const auto& row : rows) csv.row(row);

    ctx.out << "average " << sys.id() << ": " << table.size() << " points";
    if (closed) ctx.out << ", max |z| " << format_double(worst_z) << ": " << verdict(ok);
    ctx.out << '\n';
    return ok ? kExitPass : kExitCheckFailed;
}

int cmd_strong_rate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto ex = rate_experiment(cfg, 4000);
    const auto sys = make_system(cfg, entry, ex.epsilons.front());
    const auto effective = make_effective(ctx, entry, sys);

    std::optional<DiscretizationGate> gate;
    ErrorTable table;
    if (cfg.gate) {
        gate = strong_discretization_gate(sys, effective, ex);
        table = gate->coarse;
    } else {
        table = strong_error(sys, effective, ex);
    }

    const double expected = std::min(entry.alpha, 1.0);
    std::optional<RateFit> fit;
    std::string fit_problem;
    try {
        fit = fit_rate(table, false);
    } catch (const InsufficientDataError& e) {
        fit_problem = e.what();
    }

    bool ok = fit.has_value();
    std::optional<EnvelopeCheck> envelope;
    std::string rule;
    if (fit) {
        if (entry.alpha >= 1.0) {
            ok = fit->within(expected, 0.3);
            rule = "|slope - " + format_double(expected) + "| <= 0.3";
        } else {
            envelope = envelope_check(table, expected);
            ok = fit->slope >= expected - 0.2 && envelope->bounded;
            rule = "slope >= " + format_double(expected - 0.2) + " and error <= C eps^" +
                   format_double(expected);
        }
    }
    if (gate && !gate->passed) ok = false;

    {
        auto os = open_output(ctx, "strong-rate.csv");
        write_provenance(os, cfg);
        table.write_csv(os);
    }
    if (gate) {
        auto os = open_output(ctx, "strong-rate-fine.csv");
        write_provenance(os, cfg);
        gate->fine.write_csv(os);
    }
    {
        auto os = open_output(ctx, "strong-rate-fit.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.comment("expected_slope", format_double(expected));
        csv.comment("rule", rule.empty() ? fit_problem : rule);
        if (gate) {
            csv.comment("gate_max_log_change", format_double(gate->max_log_change));
            csv.comment("gate_passed", gate->passed ? "true" : "false");
        }
        if (envelope) {
            csv.comment("envelope_constant", format_double(envelope->constant));
            csv.comment("envelope_bounded", envelope->bounded ? "true" : "false");
        }
        csv.comment("verdict", verdict(ok));
        if (fit) fit->write_csv(os);
    }
    if (cfg.plot) write_rate_svg(ctx, "strong-rate.svg", "strong error " + sys.id(), table, fit);

    ctx.out << "strong-rate " << sys.id() << ": ";
    if (fit)
        ctx.out << "slope " << format_double(fit->slope) << " (" << rule << ")";
    else
        ctx.out << fit_problem;
    if (gate) ctx.out << ", gate max log change " << format_double(gate->max_log_change);
    ctx.out << ": " << verdict(ok) << '\n';
    return ok ? kExitPass : kExitCheckFailed;
}

int cmd_weak_rate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto ex = rate_experiment(cfg, 100000);
    const auto sys = make_system(cfg, entry, ex.epsilons.front());
    const auto effective = make_effective(ctx, entry, sys);
    const Observable phi = [](std::span<const double> y) { return std::tanh(y[0]); };
    WeakOptions opts;
    opts.t_probe = cfg.t_probe;
    opts.effective_macro_dt = cfg.effective_macro_dt;
    opts.effective_paths = cfg.effective_paths;

    const auto table = weak_error(sys, effective, phi, ex, opts);
    const double expected = std::min(entry.alpha / 2.0, 1.0);
    std::optional<RateFit> fit;
    std::string fit_problem;
    try {
        fit = fit_rate(table, true);
    } catch (const InsufficientDataError& e) {
        fit_problem = e.what();
    }
    const bool ok = fit && fit->within(expected, 0.3);

    {
        auto os = open_output(ctx, "weak-rate.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.comment("observable", "tanh(y1)");
        csv.comment("t_probe", format_double(opts.t_probe));
        csv.comment("effective_macro_dt", format_double(opts.effective_macro_dt));
        table.write_csv(os);
    }
    {
        auto os = open_output(ctx, "weak-rate-fit.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.comment("expected_slope", format_double(expected));
        csv.comment("band", "0.3");
        if (!fit) csv.comment("problem", fit_problem);
        csv.comment("verdict", verdict(ok));
        if (fit) fit->write_csv(os);
    }
    if (cfg.plot) write_rate_svg(ctx, "weak-rate.svg", "weak error " + sys.id(), table, fit);

    ctx.out << "weak-rate " << sys.id() << ": ";
    if (fit)
        ctx.out << "slope " << format_double(fit->slope) << " on " << fit->used.size()
                << " points (expected " << format_double(expected) << " +- 0.3)";
    else
        ctx.out << fit_problem;
    ctx.out << ": " << verdict(ok) << '\n';
    return ok ? kExitPass : kExitCheckFailed;
}

CoefficientField holder_field(double alpha) {
    return CoefficientField(
        "min(|y|^alpha, 1)", Arity{false, false, true}, Shape{1, 1},
        [alpha](double, std::span<const double>, std::span<const double> y, std::span<double> out) {
            out[0] = std::min(std::pow(std::abs(y[0]), alpha), 1.0);
        },
        HolderMeta{1.0, alpha, std::nullopt}, 1.0);
}

int cmd_mollify_check(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (cfg.alphas.empty()) throw ConfigError("invalid config field 'alphas': must not be empty");
    std::vector<unsigned> ns;
    for (double n : cfg.levels) ns.push_back(static_cast<unsigned>(n));
    const auto points = scan_line(cfg.grid_lo, cfg.grid_hi, cfg.grid_points, 1, 1);
    const MollifyQuadrature quad{cfg.quadrature_order, cfg.quadrature_panels};

    struct Row {
        double alpha;
        ScanResult sup;
        DerivativeScanResult deriv;
    };
    std::vector<Row> results;
    for (double alpha : cfg.alphas) {
        const auto f = holder_field(alpha);
        results.push_back({alpha, sup_error_scan(f, ns, points, alpha, quad, cfg.workers),
                           derivative_growth_scan(f, ns, points, alpha, quad, cfg.workers)});
    }

    bool ok = true;
    {
        auto os = open_output(ctx, "mollify-check.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.header({"alpha", "n", "sup_error", "time_derivative_sup", "hessian_sup"});
        for (const auto& r : results)
            for (std::size_t i = 0; i < r.sup.ns.size(); ++i)
                csv.row({r.alpha, static_cast<double>(r.sup.ns[i]), r.sup.values[i],
                         r.deriv.time_sups[i], r.deriv.hessian_sups[i]});
    }
    {
        auto os = open_output(ctx, "mollify-fits.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.header({"alpha", "sup_slope", "sup_threshold", "hessian_slope", "hessian_threshold",
                    "passed"});
        for (const auto& r : results) {
            const bool pass = r.sup.passed && r.deriv.passed;
            ok = ok && pass;
            const double hs = r.deriv.hessian_fit ? r.deriv.hessian_fit->slope : std::nan("");
            csv.row({r.alpha, r.sup.fit.slope, r.sup.threshold, hs, r.deriv.threshold,
                     pass ? 1.0 : 0.0});
            ctx.out << "mollify-check alpha " << format_double(r.alpha) << ": sup slope "
                    << format_double(r.sup.fit.slope) << " (<= " << format_double(r.sup.threshold)
                    << "), hessian slope " << format_double(hs) << " (<= "
                    << format_double(r.deriv.threshold) << "): " << verdict(pass) << '\n';
        }
    }
    if (cfg.plot) {
        for (const auto& r : results) {
            auto os = open_output(ctx, "mollify-alpha-" + format_double(r.alpha) + ".svg");
            std::vector<double> xs(r.sup.ns.begin(), r.sup.ns.end());
            write_loglog_svg(os, "sup |f - f_n|, alpha " + format_double(r.alpha), "n",
                             "sup error", xs, r.sup.values,
                             LogLogLine{r.sup.fit.slope, r.sup.fit.intercept});
        }
    }
    return ok ? kExitPass : kExitCheckFailed;
}

int cmd_poisson_check(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto sys = make_system(cfg, entry, cfg.epsilon);
    if (cfg.y.size() != sys.d2())
        throw ConfigError("invalid config field 'y': expected " + std::to_string(sys.d2()) +
                          " components");
    const auto frozen = sys.freeze(cfg.y);
    // The chain runs at the solver's step so both see the same discrete
    // stationary law.
    auto mcfg = averaging_config(cfg).measure;
    mcfg.dt = cfg.poisson_dt;
    const auto mu = estimate_invariant_measure(
        frozen, mcfg, NoiseSource(derive_seed(cfg.seed, kMeasureTag), 0, Channel::Aux, sys.d1()));

    const CoefficientField raw(
        "sin(x1)", Arity{false, true, false}, Shape{1, 1},
        [](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
            out[0] = std::sin(x[0]);
        },
        HolderMeta{}, 1.0);
    const PoissonProblem problem(frozen, center(raw, mu), mu);

    const auto centers = group_points(cfg.x_points, sys.d1(), "x_points");
    const auto points = residual_stencil(centers);
    PoissonConfig pcfg;
    pcfg.t_max = cfg.t_max;
    pcfg.n_paths = cfg.n_mc ? cfg.n_mc : 4000;
    pcfg.dt = cfg.poisson_dt;
    pcfg.master_seed = cfg.seed;
    pcfg.workers = cfg.workers;
    const auto solution = solve_poisson_mc(problem, points, pcfg);
    const auto report = residual_check(problem, solution, centers);

    {
        auto os = open_output(ctx, "poisson-check.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.comment("system", sys.id());
        csv.comment("source", "sin(x1) centred against the estimated invariant measure");
        for (const auto& w : solution.warnings) csv.comment("warning", w);
        solution.write_csv(os);
    }
    {
        auto os = open_output(ctx, "poisson-residual.csv");
        write_provenance(os, cfg);
        CsvWriter csv(os);
        csv.comment("median_relative", format_double(report.median_relative));
        csv.comment("verdict", verdict(report.passed));
        std::vector<std::string> cols;
        for (std::size_t i = 0; i < sys.d1(); ++i) cols.push_back("x" + std::to_string(i + 1));
        cols.push_back("residual");
        cols.push_back("relative");
        csv.header(cols);
        for (std::size_t i = 0; i < report.centers.size(); ++i) {
            std::vector<double> row(report.centers[i]);
            row.push_back(report.residuals[i]);
            row.push_back(report.relative[i]);
            csv.row(row);
        }
    }
    for (const auto& w : solution.warnings) ctx.out << "warning: " << w << '\n';
    ctx.out << "poisson-check " << sys.id() << ": median relative residual "
            << format_double(report.median_relative) << " (<= 0.1): " << verdict(report.passed)
            << '\n';
    return report.passed ? kExitPass : kExitCheckFailed;
}

int cmd_pde_limit(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto entry = get_zoo(cfg.zoo);
    const auto sys = make_system(cfg, entry, cfg.epsilons.front());
    const auto effective = make_effective(ctx, entry, sys);
    const Observable psi = [](std::span<const double> y) { return y[0] > 0.0 ? 1.0 : 0.0; };
    const Observable phi = [](std::span<const double> y) { return std::tanh(y[0]); };

    if (cfg.probe_x.size() != sys.d1() || cfg.probe_y.size() != sys.d2())
        throw ConfigError("invalid config field 'probe_x': probe dimensions do not match the system");
    const std::vector<PdeProbe> probes{{cfg.probe_t, cfg.probe_x, cfg.probe_y}};

    PdeLimitConfig pcfg;
    pcfg.horizon = cfg.horizon;
    pcfg.epsilons = cfg.epsilons;
    pcfg.macro_dt = cfg.macro_dt;
    pcfg.stability_factor = cfg.stability_factor;
    pcfg.n_mc = cfg.n_mc ? cfg.n_mc : 20000;
    pcfg.master_seed = cfg.seed;
    pcfg.workers = cfg.workers;
    const auto result = pde_limit_experiment(sys, effective, psi, phi, probes, pcfg);

    // Trend: least-squares slope of the gap against log epsilon must be
    // positive, so the gap shrinks along the ladder.
    const std::size_t last = result.epsilons.size() - 1;
    std::vector<double> logs, gaps;
    for (std::size_t e = 0; e <= last; ++e) {
        logs.push_back(std::log(result.epsilons[e]));
        gaps.push_back(result.gap(e, 0));
    }
    const double trend = logs.size() >= 2 ? least_squares(logs, gaps).slope : 0.0;
    const bool trending = trend > 0.0;
    const bool small = result.gap(last, 0) <= 3.0 * result.gap_stderr(last, 0);
    const bool ok = trending && small;

    auto os = open_output(ctx, "pde-limit.csv");
    write_provenance(os, cfg);
    CsvWriter csv(os);
    csv.comment("psi", "1{y1 > 0}");
    csv.comment("phi", "tanh(y1)");
    csv.comment("trend_slope", format_double(trend));
    csv.comment("final_gap_over_stderr",
                format_double(result.gap(last, 0) / result.gap_stderr(last, 0)));
    csv.comment("verdict", verdict(ok));
    result.write_csv(os);

    ctx.out << "pde-limit " << sys.id() << ": gap trend slope " << format_double(trend)
            << ", final gap " << format_double(result.gap(last, 0)) << " vs 3 SE "
            << format_double(3.0 * result.gap_stderr(last, 0)) << ": " << verdict(ok) << '\n';
    return ok ? kExitPass : kExitCheckFailed;
}

using Command = int (*)(const Context&);

const std::vector<std::pair<std::string, Command>>& command_table() {
    static const std::vector<std::pair<std::string, Command>> table{
        {"validate", cmd_validate},         {"simulate", cmd_simulate},
        {"average", cmd_average},           {"strong-rate", cmd_strong_rate},
        {"weak-rate", cmd_weak_rate},       {"mollify-check", cmd_mollify_check},
        {"poisson-check", cmd_poisson_check}, {"pde-limit", cmd_pde_limit},
    };
    return table;
}

std::string flag_names(const std::string& key) {
    std::string kebab = key;
    std::replace(kebab.begin(), kebab.end(), '_', '-');
    return kebab == key ? "--" + key : "--" + kebab + ",--" + key;
}

std::uint64_t workers_from_environment() {
    const char* env = std::getenv("SLOWFAST_WORKERS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || v == 0)
        throw ConfigError(std::string("invalid SLOWFAST_WORKERS value '") + env + "'");
    return v;
}

}  // namespace

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, _] : command_table()) v.push_back(name);
        return v;
    }();
    return names;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Averaging experiments for slow-fast stochastic differential equations",
                 "slowfast"};
    app.set_version_flag("--version", SLOWFAST_VERSION);

    std::string command;
    app.add_option("command", command, "Subcommand")
        ->required()
        ->check(CLI::IsMember(subcommands()));
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its values");

    std::vector<std::function<void(ExperimentConfig&)>> setters;
    auto bind = [&](const std::string& key, auto member, const std::string& help) {
        using T = std::remove_cvref_t<decltype(std::declval<ExperimentConfig&>().*member)>;
        auto* opt = app.add_option_function<T>(
            flag_names(key),
            [&setters, member](const T& v) {
                setters.push_back([member, v](ExperimentConfig& c) { c.*member = v; });
            },
            help);
        if constexpr (std::is_same_v<T, std::vector<double>>) opt->delimiter(',');
        return opt;
    };
    using C = ExperimentConfig;
    bind("zoo", &C::zoo, "Model zoo id");
    bind("effective", &C::effective, "closed-form or numeric effective system");
    bind("epsilons", &C::epsilons, "Decreasing epsilon ladder");
    bind("epsilon", &C::epsilon, "Single epsilon for validate, simulate, average, poisson-check");
    bind("macro_dt", &C::macro_dt, "Macro step");
    bind("micro_substeps", &C::micro_substeps, "Micro steps per macro step (0: from stability factor)");
    bind("horizon", &C::horizon, "Time horizon");
    bind("stability_factor", &C::stability_factor, "Micro step bound as a multiple of epsilon");
    bind("n_mc", &C::n_mc, "Monte Carlo paths (0: subcommand default)");
    bind("seed", &C::seed, "Master seed");
    bind("path_index", &C::path_index, "Path simulated by simulate");
    bind("x0", &C::x0, "Initial fast state");
    bind("y0", &C::y0, "Initial slow state");
    bind("measure_dt", &C::measure_dt, "Invariant-measure chain step");
    bind("burn_in", &C::burn_in, "Invariant-measure burn-in time");
    bind("measure_count", &C::measure_count, "Invariant-measure sample count");
    bind("thinning", &C::thinning, "Invariant-measure thinning");
    bind("cache_pitch", &C::cache_pitch, "Averaging cache node spacing");
    bind("y_points", &C::y_points, "Slow states tabulated by average");
    bind("t_probe", &C::t_probe, "Weak-error probe time");
    bind("effective_macro_dt", &C::effective_macro_dt, "Effective step in weak-rate");
    bind("effective_paths", &C::effective_paths, "Effective path count in weak-rate (0: n_mc)");
    bind("alphas", &C::alphas, "Hölder exponents scanned by mollify-check");
    bind("levels", &C::levels, "Mollification levels n");
    bind("grid_lo", &C::grid_lo, "Scan line start");
    bind("grid_hi", &C::grid_hi, "Scan line end");
    bind("grid_points", &C::grid_points, "Scan line points");
    bind("quadrature_order", &C::quadrature_order, "Gauss-Legendre nodes per panel");
    bind("quadrature_panels", &C::quadrature_panels, "Quadrature panels per axis");
    bind("y", &C::y, "Frozen slow state for poisson-check");
    bind("x_points", &C::x_points, "Poisson residual centres");
    bind("t_max", &C::t_max, "Poisson time truncation");
    bind("poisson_dt", &C::poisson_dt, "Poisson Euler-Maruyama step");
    bind("probe_t", &C::probe_t, "PDE probe time");
    bind("probe_x", &C::probe_x, "PDE probe fast state");
    bind("probe_y", &C::probe_y, "PDE probe slow state");
    bind("output_dir", &C::output_dir, "Output directory");
    bind("workers", &C::workers, "Worker threads (default: SLOWFAST_WORKERS or 1)");
    app.add_flag_function(
        "--no-gate",
        [&setters](std::int64_t) { setters.push_back([](C& c) { c.gate = false; }); },
        "Skip the strong-rate discretisation gate");
    app.add_flag_function(
        "--plot", [&setters](std::int64_t) { setters.push_back([](C& c) { c.plot = true; }); },
        "Also write SVG plots");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitPass : kExitError;
    }

    try {
        ExperimentConfig cfg;
        cfg.workers = workers_from_environment();
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw ConfigError("cannot read config file " + config_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(is);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError("config file " + config_path + " is not valid JSON: " + e.what());
            }
            cfg = from_json(j, cfg);
        }
        for (const auto& set : setters) set(cfg);
        cfg.command = command;
        cfg.check();

        const Context ctx{cfg, out};
        for (const auto& [name, fn] : command_table())
            if (name == command) return fn(ctx);
        throw ConfigError("unknown subcommand '" + command + "'");
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return kExitError;
}

}  // namespace slowfast::cli
