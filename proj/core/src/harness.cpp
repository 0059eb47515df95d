#include "slowfast/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/parallel.hpp"

namespace slowfast {

namespace {

constexpr std::uint64_t kWeakCoupledTag = 0x7765616b01;
constexpr std::uint64_t kWeakEffectiveTag = 0x7765616b02;
constexpr std::uint64_t kPdeCoupledTag = 0x70646501;
constexpr std::uint64_t kPdeEffectiveTag = 0x70646502;
constexpr std::uint64_t kMomentTag = 0x6d6f6d01;

// Per-time accumulators for one block of paths.
struct SeriesBlock {
    std::vector<double> sum;
    std::vector<double> sumsq;
};

void check_positive_ladder(std::span<const double> eps) {
    if (eps.empty()) throw ArgumentError("epsilon ladder is empty");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0) || !std::isfinite(eps[i]))
            throw ArgumentError("epsilon values must be positive");
        if (i > 0 && !(eps[i] < eps[i - 1]))
            throw ArgumentError("epsilon ladder must be strictly decreasing");
    }
}

RunningStats reduce(const std::vector<RunningStats>& blocks) {
    RunningStats total;
    for (const auto& b : blocks) total.merge(b);
    return total;
}

std::size_t grid_index(double t, double dt, const char* what) {
    const double r = t / dt;
    const double k = std::round(r);
    if (!(t >= 0.0) || std::abs(r - k) > 1e-9 * std::max(1.0, r))
        throw ArgumentError(std::string(what) + " must be a non-negative multiple of macro_dt");
    return static_cast<std::size_t>(k);
}

}  // namespace

void RateExperiment::check() const {
    check_positive_ladder(epsilons);
    if (n_mc < 2) throw ArgumentError("n_mc must be at least 2");
    if (block_size == 0) throw ArgumentError("block_size must be positive");
    if (workers == 0) throw ArgumentError("workers must be positive");
    if (!(stability_factor > 0.0)) throw ArgumentError("stability_factor must be positive");
    StepPlan{macro_dt, 1, horizon}.check();
}

void ErrorTable::write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    csv.comment("kind", kind);
    csv.comment("n_mc", std::to_string(n_mc));
    csv.comment("macro_dt", format_double(macro_dt));
    csv.comment("stability_factor", format_double(stability_factor));
    csv.comment("seed", std::to_string(master_seed));
    csv.header({"epsilon", "error", "stderr", "micro_substeps"});
    for (std::size_t i = 0; i < epsilons.size(); ++i)
        csv.row({epsilons[i], errors[i], stderrs[i], static_cast<double>(micro_substeps[i])});
}

void RateFit::write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    std::string rows;
    for (std::size_t i = 0; i < used.size(); ++i)
        rows += (i ? " " : "") + std::to_string(used[i]);
    csv.comment("rows_used", rows);
    csv.header({"slope", "intercept", "r_squared", "residual_rms"});
    csv.row({slope, intercept, r_squared, residual_rms});
}

RateFit fit_rate(const ErrorTable& table, bool drop_below_floor) {
    std::vector<double> xs, ys;
    RateFit fit;
    for (std::size_t i = 0; i < table.epsilons.size(); ++i) {
        const double err = table.errors[i];
        if (!(err > 0.0) || !std::isfinite(err)) continue;
        if (drop_below_floor && err < 5.0 * table.stderrs[i]) continue;
        xs.push_back(std::log(table.epsilons[i]));
        ys.push_back(std::log(err));
        fit.used.push_back(i);
    }
    if (xs.size() < 3)
        throw InsufficientDataError("rate fit needs at least 3 usable rows, have " +
                                    std::to_string(xs.size()));
    const LinearFit lf = least_squares(xs, ys);
    fit.slope = lf.slope;
    fit.intercept = lf.intercept;
    fit.r_squared = std::clamp(lf.r_squared, 0.0, 1.0);
    fit.residual_rms = lf.residual_rms;
    return fit;
}

ErrorTable strong_error(const SlowFastSystem& system, const EffectiveSystem& effective,
                        const RateExperiment& experiment) {
    if (system.g_depends_on_x())
        throw ContractError(
            "strong_error: the slow diffusion G depends on the fast variable, and the strong "
            "convergence for such a system may not be true; use weak_error instead");
    experiment.check();
    if (effective.d2() != system.d2())
        throw ArgumentError("effective system dimension does not match");

    ErrorTable table;
    table.kind = "strong";
    table.n_mc = experiment.n_mc;
    table.macro_dt = experiment.macro_dt;
    table.stability_factor = experiment.stability_factor;
    table.master_seed = experiment.master_seed;

    const std::size_t d1 = system.d1();
    const std::size_t d2 = system.d2();
    const StepPlan effective_plan{experiment.macro_dt, 1, experiment.horizon};
    const std::size_t steps = effective_plan.macro_steps();
    const std::size_t n_blocks = block_count(experiment.n_mc, experiment.block_size);

    for (double eps : experiment.epsilons) {
        const SlowFastSystem sys = system.with_epsilon(eps);
        const StepPlan plan = StepPlan::for_epsilon(experiment.macro_dt, experiment.horizon, eps,
                                                    experiment.stability_factor);
        std::vector<SeriesBlock> blocks(n_blocks);
        parallel_for(n_blocks, experiment.workers, [&](std::size_t bi) {
            SeriesBlock& acc = blocks[bi];
            acc.sum.assign(steps + 1, 0.0);
            acc.sumsq.assign(steps + 1, 0.0);
            std::vector<double> coupled((steps + 1) * d2);
            const BlockRange range = block_range(experiment.n_mc, experiment.block_size, bi);
            for (std::size_t p = range.begin; p < range.end; ++p) {
                NoiseSource w1(experiment.master_seed, p, Channel::W1, d1);
                auto [w2c, w2e] = coupled_pair(experiment.master_seed, p, d2);
                integrate_coupled(
                    sys, plan, w1, w2c,
                    [&](std::size_t k, double, std::span<const double>,
                        std::span<const double> y) {
                        std::copy(y.begin(), y.end(), coupled.begin() + static_cast<std::ptrdiff_t>(k * d2));
                    },
                    experiment.stability_factor);
                integrate_effective(effective, effective_plan, w2e, sys.y0(),
                                    [&](std::size_t k, double, std::span<const double> y) {
                                        double sq = 0.0;
                                        for (std::size_t j = 0; j < d2; ++j) {
                                            const double d = coupled[k * d2 + j] - y[j];
                                            sq += d * d;
                                        }
                                        acc.sum[k] += sq;
                                        acc.sumsq[k] += sq * sq;
                                    });
            }
        });
        std::vector<double> sum(steps + 1, 0.0), sumsq(steps + 1, 0.0);
        for (const auto& b : blocks)
            for (std::size_t k = 0; k <= steps; ++k) {
                sum[k] += b.sum[k];
                sumsq[k] += b.sumsq[k];
            }
        const double n = static_cast<double>(experiment.n_mc);
        std::size_t best = 0;
        for (std::size_t k = 1; k <= steps; ++k)
            if (sum[k] > sum[best]) best = k;
        const double mean = sum[best] / n;
        const double var = std::max(0.0, (sumsq[best] - n * mean * mean) / (n - 1.0));
        table.epsilons.push_back(eps);
        table.errors.push_back(mean);
        table.stderrs.push_back(std::sqrt(var / n));
        table.micro_substeps.push_back(plan.micro_substeps);
    }
    return table;
}

ErrorTable weak_error(const SlowFastSystem& system, const EffectiveSystem& effective,
                      const Observable& phi, const RateExperiment& experiment,
                      const WeakOptions& options) {
    experiment.check();
    if (effective.d2() != system.d2())
        throw ArgumentError("effective system dimension does not match");
    const std::size_t d1 = system.d1();
    const std::size_t d2 = system.d2();
    const std::size_t n_blocks = block_count(experiment.n_mc, experiment.block_size);

    // Effective reference mean, shared by every row.
    const std::size_t n_eff = options.effective_paths ? options.effective_paths : experiment.n_mc;
    const StepPlan effective_plan{options.effective_macro_dt, 1, options.t_probe};
    effective_plan.check();
    const std::uint64_t eff_seed = derive_seed(experiment.master_seed, kWeakEffectiveTag);
    const std::size_t eff_blocks = block_count(n_eff, experiment.block_size);
    std::vector<RunningStats> eff_acc(eff_blocks);
    parallel_for(eff_blocks, experiment.workers, [&](std::size_t bi) {
        const BlockRange range = block_range(n_eff, experiment.block_size, bi);
        for (std::size_t p = range.begin; p < range.end; ++p) {
            NoiseSource w2(eff_seed, p, Channel::W2, d2);
            std::vector<double> last;
            integrate_effective(effective, effective_plan, w2, system.y0(),
                                [&](std::size_t, double, std::span<const double> y) {
                                    last.assign(y.begin(), y.end());
                                });
            eff_acc[bi].push(phi(last));
        }
    });
    const RunningStats eff = reduce(eff_acc);

    ErrorTable table;
    table.kind = "weak";
    table.n_mc = experiment.n_mc;
    table.macro_dt = experiment.macro_dt;
    table.stability_factor = experiment.stability_factor;
    table.master_seed = experiment.master_seed;

    for (std::size_t e = 0; e < experiment.epsilons.size(); ++e) {
        const double eps = experiment.epsilons[e];
        const SlowFastSystem sys = system.with_epsilon(eps);
        const StepPlan plan = StepPlan::for_epsilon(experiment.macro_dt, options.t_probe, eps,
                                                    experiment.stability_factor);
        const std::uint64_t seed = derive_seed(experiment.master_seed, kWeakCoupledTag, e);
        std::vector<RunningStats> acc(n_blocks);
        parallel_for(n_blocks, experiment.workers, [&](std::size_t bi) {
            const BlockRange range = block_range(experiment.n_mc, experiment.block_size, bi);
            std::vector<double> last(d2);
            const std::size_t final_k = plan.macro_steps();
            for (std::size_t p = range.begin; p < range.end; ++p) {
                NoiseSource w1(seed, p, Channel::W1, d1);
                NoiseSource w2(seed, p, Channel::W2, d2);
                integrate_coupled(
                    sys, plan, w1, w2,
                    [&](std::size_t k, double, std::span<const double>,
                        std::span<const double> y) {
                        if (k == final_k) std::copy(y.begin(), y.end(), last.begin());
                    },
                    experiment.stability_factor);
                acc[bi].push(phi(last));
            }
        });
        const RunningStats coupled = reduce(acc);
        table.epsilons.push_back(eps);
        table.errors.push_back(std::abs(coupled.mean() - eff.mean()));
        table.stderrs.push_back(std::hypot(coupled.stderr_of_mean(), eff.stderr_of_mean()));
        table.micro_substeps.push_back(plan.micro_substeps);
    }
    return table;
}

DiscretizationGate strong_discretization_gate(const SlowFastSystem& system,
                                              const EffectiveSystem& effective,
                                              const RateExperiment& experiment) {
    DiscretizationGate gate;
    gate.coarse = strong_error(system, effective, experiment);
    RateExperiment halved = experiment;
    halved.macro_dt = experiment.macro_dt / 2.0;
    gate.fine = strong_error(system, effective, halved);
    gate.max_log_change = 0.0;
    for (std::size_t i = 0; i < gate.coarse.errors.size(); ++i) {
        const double a = gate.coarse.errors[i];
        const double b = gate.fine.errors[i];
        const double change = (a > 0.0 && b > 0.0) ? std::abs(std::log(b) - std::log(a))
                                                   : std::numeric_limits<double>::infinity();
        gate.max_log_change = std::max(gate.max_log_change, change);
    }
    gate.passed = gate.max_log_change < 0.1;
    return gate;
}

EnvelopeCheck envelope_check(const ErrorTable& table, double exponent, double slack) {
    if (table.epsilons.empty()) throw InsufficientDataError("envelope check on an empty table");
    EnvelopeCheck env;
    env.exponent = exponent;
    env.constant = table.errors[0] / std::pow(table.epsilons[0], exponent);
    env.bounded = true;
    for (std::size_t i = 0; i < table.epsilons.size(); ++i) {
        const double bound = slack * env.constant * std::pow(table.epsilons[i], exponent);
        if (table.errors[i] > bound * (1.0 + 1e-12)) env.bounded = false;
    }
    return env;
}

double PdeLimitResult::gap_stderr(std::size_t e, std::size_t p) const {
    return std::hypot(u_eps_stderr[e][p], u_bar_stderr[p]);
}

void PdeLimitResult::write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    std::vector<std::string> head{"probe", "t"};
    const std::size_t d1 = probes.empty() ? 0 : probes[0].x.size();
    const std::size_t d2 = probes.empty() ? 0 : probes[0].y.size();
    for (std::size_t i = 0; i < d1; ++i) head.push_back("x" + std::to_string(i + 1));
    for (std::size_t j = 0; j < d2; ++j) head.push_back("y" + std::to_string(j + 1));
    for (const char* c : {"epsilon", "u_eps", "u_eps_stderr", "u_bar", "u_bar_stderr", "gap",
                          "gap_stderr"})
        head.emplace_back(c);
    csv.header(head);
    for (std::size_t p = 0; p < probes.size(); ++p)
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            std::vector<double> row{static_cast<double>(p), probes[p].t};
            row.insert(row.end(), probes[p].x.begin(), probes[p].x.end());
            row.insert(row.end(), probes[p].y.begin(), probes[p].y.end());
            for (double v : {epsilons[e], u_eps[e][p], u_eps_stderr[e][p], u_bar[p],
                             u_bar_stderr[p], gap(e, p), gap_stderr(e, p)})
                row.push_back(v);
            csv.row(row);
        }
}

PdeLimitResult pde_limit_experiment(const SlowFastSystem& system,
                                    const EffectiveSystem& effective, const Observable& psi,
                                    const Observable& phi, std::span<const PdeProbe> probes,
                                    const PdeLimitConfig& config) {
    check_positive_ladder(config.epsilons);
    if (config.n_mc < 2 || config.block_size == 0 || config.workers == 0)
        throw ArgumentError("pde limit needs n_mc >= 2 and positive block size and workers");
    const StepPlan grid{config.macro_dt, 1, config.horizon};
    const std::size_t steps = grid.macro_steps();
    const std::size_t d1 = system.d1();
    const std::size_t d2 = system.d2();
    std::vector<std::size_t> phi_index;
    for (const auto& pr : probes) {
        if (pr.x.size() != d1 || pr.y.size() != d2)
            throw ArgumentError("probe dimensions do not match the system");
        if (pr.t > config.horizon) throw ArgumentError("probe time exceeds the horizon");
        phi_index.push_back(grid_index(config.horizon - pr.t, config.macro_dt, "T - t"));
    }

    // Trapezoid weight of macro node k.
    auto weight = [&](std::size_t k) {
        return (k == 0 || k == steps) ? 0.5 * config.macro_dt : config.macro_dt;
    };

    PdeLimitResult result;
    result.probes.assign(probes.begin(), probes.end());
    result.epsilons = config.epsilons;
    const std::size_t n_blocks = block_count(config.n_mc, config.block_size);

    for (std::size_t p = 0; p < probes.size(); ++p) {
        const std::uint64_t seed = derive_seed(config.master_seed, kPdeEffectiveTag, p);
        std::vector<RunningStats> acc(n_blocks);
        parallel_for(n_blocks, config.workers, [&](std::size_t bi) {
            const BlockRange range = block_range(config.n_mc, config.block_size, bi);
            for (std::size_t q = range.begin; q < range.end; ++q) {
                NoiseSource w2(seed, q, Channel::W2, d2);
                double value = 0.0;
                integrate_effective(effective, grid, w2, probes[p].y,
                                    [&](std::size_t k, double, std::span<const double> y) {
                                        value += weight(k) * psi(y);
                                        if (k == phi_index[p]) value += phi(y);
                                    });
                acc[bi].push(value);
            }
        });
        const RunningStats total = reduce(acc);
        result.u_bar.push_back(total.mean());
        result.u_bar_stderr.push_back(total.stderr_of_mean());
    }

    for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
        const double eps = config.epsilons[e];
        const StepPlan plan = StepPlan::for_epsilon(config.macro_dt, config.horizon, eps,
                                                    config.stability_factor);
        std::vector<double> means, errs;
        for (std::size_t p = 0; p < probes.size(); ++p) {
            const SlowFastSystem sys =
                system.with_epsilon(eps).with_initial_state(probes[p].x, probes[p].y);
            const std::uint64_t seed = derive_seed(config.master_seed, kPdeCoupledTag, e, p);
            std::vector<RunningStats> acc(n_blocks);
            parallel_for(n_blocks, config.workers, [&](std::size_t bi) {
                const BlockRange range = block_range(config.n_mc, config.block_size, bi);
                for (std::size_t q = range.begin; q < range.end; ++q) {
                    NoiseSource w1(seed, q, Channel::W1, d1);
                    NoiseSource w2(seed, q, Channel::W2, d2);
                    double value = 0.0;
                    integrate_coupled(
                        sys, plan, w1, w2,
                        [&](std::size_t k, double, std::span<const double>,
                            std::span<const double> y) {
                            value += weight(k) * psi(y);
                            if (k == phi_index[p]) value += phi(y);
                        },
                        config.stability_factor);
                    acc[bi].push(value);
                }
            });
            const RunningStats total = reduce(acc);
            means.push_back(total.mean());
            errs.push_back(total.stderr_of_mean());
        }
        result.u_eps.push_back(std::move(means));
        result.u_eps_stderr.push_back(std::move(errs));
    }
    return result;
}

LocalizedSmokeResult localized_convergence_smoke(const SlowFastSystem& system,
                                                 const EffectiveSystem& effective,
                                                 const LocalizedSmokeConfig& config) {
    check_positive_ladder(config.moment_epsilons);
    if (config.n_mc < 2 || config.workers == 0 || !(config.beta > 0.0))
        throw ArgumentError("smoke test needs n_mc >= 2, workers >= 1 and beta > 0");
    LocalizedSmokeResult result;
    const std::size_t d1 = system.d1();
    const std::size_t d2 = system.d2();
    const std::size_t block = 64;
    const std::size_t n_blocks = block_count(config.n_mc, block);

    result.moment_ok = true;
    for (std::size_t e = 0; e < config.moment_epsilons.size(); ++e) {
        const double eps = config.moment_epsilons[e];
        const SlowFastSystem sys = system.with_epsilon(eps);
        const StepPlan plan =
            StepPlan::for_epsilon(config.macro_dt, config.horizon, eps, config.stability_factor);
        const std::uint64_t seed = derive_seed(config.master_seed, kMomentTag, e);
        std::vector<RunningStats> acc(n_blocks);
        try {
            parallel_for(n_blocks, config.workers, [&](std::size_t bi) {
                const BlockRange range = block_range(config.n_mc, block, bi);
                for (std::size_t q = range.begin; q < range.end; ++q) {
                    NoiseSource w1(seed, q, Channel::W1, d1);
                    NoiseSource w2(seed, q, Channel::W2, d2);
                    double sup = 0.0;
                    integrate_coupled(
                        sys, plan, w1, w2,
                        [&](std::size_t, double, std::span<const double>,
                            std::span<const double> y) {
                            double r2 = 0.0;
                            for (double v : y) r2 += v * v;
                            sup = std::max(sup, std::pow(r2, 0.5 * config.beta));
                        },
                        config.stability_factor);
                    acc[bi].push(sup);
                }
            });
        } catch (const BlowUpError& err) {
            result.moment_ok = false;
            result.skipped = true;
            result.message = "moment condition failed at epsilon=" + format_double(eps) +
                             ": " + err.what();
            return result;
        }
        const double moment = reduce(acc).mean();
        result.moments.push_back(moment);
        if (!std::isfinite(moment) || moment > config.moment_bound) {
            result.moment_ok = false;
            result.skipped = true;
            result.message = "moment condition failed at epsilon=" + format_double(eps) +
                             ": mean sup |Y|^beta = " + format_double(moment);
            return result;
        }
    }

    RateExperiment experiment;
    experiment.epsilons = {config.epsilon};
    experiment.macro_dt = config.macro_dt;
    experiment.horizon = config.horizon;
    experiment.stability_factor = config.stability_factor;
    experiment.n_mc = config.n_mc;
    experiment.master_seed = config.master_seed;
    experiment.workers = config.workers;
    const ErrorTable table = strong_error(system, effective, experiment);
    result.strong_error = table.errors[0];
    result.strong_stderr = table.stderrs[0];
    result.passed = result.strong_error < config.error_threshold;
    result.message = "strong error " + format_double(result.strong_error) +
                     (result.passed ? " below " : " above ") + "threshold " +
                     format_double(config.error_threshold);
    return result;
}

}  // namespace slowfast
