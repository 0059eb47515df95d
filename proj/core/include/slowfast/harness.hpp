#pragma once

// Convergence experiments: strong and weak averaging errors over an epsilon
// ladder, log-log rate fits, the limit of the Cauchy problem through its
// probabilistic representation, and a smoke test for locally bounded systems.
//
// Monte Carlo paths are grouped in fixed blocks and block results are reduced
// in block order, so tables are bitwise identical for any worker count.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slowfast/averaging.hpp"
#include "slowfast/core_model.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

/// Shared settings of the rate experiments.
struct RateExperiment {
    std::vector<double> epsilons{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
    double macro_dt = 1.0 / 256;
    double horizon = 1.0;
    double stability_factor = kDefaultStabilityFactor;
    std::size_t n_mc = 4000;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
    std::size_t block_size = 64;  ///< paths per reduction block

    void check() const;
};

struct ErrorTable {
    std::string kind;  ///< "strong" or "weak"
    std::vector<double> epsilons;
    std::vector<double> errors;
    std::vector<double> stderrs;
    std::vector<std::size_t> micro_substeps;  ///< per epsilon
    std::size_t n_mc = 0;
    double macro_dt = 0.0;
    double stability_factor = 0.0;
    std::uint64_t master_seed = 0;

    /// Columns epsilon,error,stderr,micro_substeps.
    void write_csv(std::ostream& os) const;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double residual_rms = 0.0;
    std::vector<std::size_t> used;  ///< table rows entering the fit

    bool within(double expected, double band) const noexcept {
        return std::abs(slope - expected) <= band;
    }
    void write_csv(std::ostream& os) const;
};

/// Least squares of log(error) on log(epsilon). With drop_below_floor, rows
/// whose error is below 5 standard errors are left out. Throws
/// InsufficientDataError when fewer than three rows remain.
RateFit fit_rate(const ErrorTable& table, bool drop_below_floor);

/// sup over the macro grid of E|Y^eps_t - Ybar_t|^2, with the effective path
/// driven by the macro increments of the same W2 stream as the coupled path.
/// The same master seed is used at every epsilon. Throws ContractError when
/// the slow diffusion depends on the fast variable.
ErrorTable strong_error(const SlowFastSystem& system, const EffectiveSystem& effective,
                        const RateExperiment& experiment);

using Observable = std::function<double(std::span<const double> y)>;

struct WeakOptions {
    double t_probe = 1.0;
    /// Step for the effective paths (finer than the coupled macro step
    /// keeps its discretisation bias below the averaging error).
    double effective_macro_dt = 1.0 / 1024;
    /// Effective path count; 0 means the experiment's n_mc.
    std::size_t effective_paths = 0;
};

/// |mean phi(Y^eps_t) - mean phi(Ybar_t)| with independent streams. Each
/// epsilon draws its own seed, and the effective mean is shared by every row.
ErrorTable weak_error(const SlowFastSystem& system, const EffectiveSystem& effective,
                      const Observable& phi, const RateExperiment& experiment,
                      const WeakOptions& options = {});

struct DiscretizationGate {
    ErrorTable coarse;
    ErrorTable fine;               ///< macro_dt halved
    double max_log_change = 0.0;   ///< max over epsilon of |log fine - log coarse|
    bool passed = false;           ///< max_log_change < 0.1
};

DiscretizationGate strong_discretization_gate(const SlowFastSystem& system,
                                              const EffectiveSystem& effective,
                                              const RateExperiment& experiment);

/// Upper-envelope check err <= C eps^p with C fitted on the largest epsilon.
struct EnvelopeCheck {
    double exponent = 0.0;
    double constant = 0.0;
    bool bounded = false;
};
EnvelopeCheck envelope_check(const ErrorTable& table, double exponent, double slack = 1.0);

struct PdeProbe {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> y;
};

struct PdeLimitConfig {
    double horizon = 1.0;  ///< T
    std::vector<double> epsilons{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
    double macro_dt = 1.0 / 256;
    double stability_factor = kDefaultStabilityFactor;
    std::size_t n_mc = 20000;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
    std::size_t block_size = 64;
};

struct PdeLimitResult {
    std::vector<PdeProbe> probes;
    std::vector<double> epsilons;
    std::vector<std::vector<double>> u_eps;  ///< [epsilon][probe]
    std::vector<std::vector<double>> u_eps_stderr;
    std::vector<double> u_bar;
    std::vector<double> u_bar_stderr;

    double gap(std::size_t e, std::size_t p) const { return std::abs(u_eps[e][p] - u_bar[p]); }
    double gap_stderr(std::size_t e, std::size_t p) const;
    void write_csv(std::ostream& os) const;
};

/// u(t, x, y) = E( int_0^T psi(Y_s) ds + phi(Y_{T-t}) ) for coupled paths from
/// (x, y) and, for u_bar, effective paths from y. The time integral uses the
/// trapezoid rule on the macro grid and T - t must lie on that grid. Coupled
/// and effective paths use independent streams.
PdeLimitResult pde_limit_experiment(const SlowFastSystem& system,
                                    const EffectiveSystem& effective, const Observable& psi,
                                    const Observable& phi, std::span<const PdeProbe> probes,
                                    const PdeLimitConfig& config);

struct LocalizedSmokeConfig {
    std::vector<double> moment_epsilons{1.0 / 16, 1.0 / 64, 1.0 / 256};
    double epsilon = 1.0 / 256;  ///< where the strong error is measured
    double macro_dt = 1.0 / 256;
    double horizon = 1.0;
    double stability_factor = kDefaultStabilityFactor;
    std::size_t n_mc = 500;
    double beta = 4.0;
    double moment_bound = 1e6;  ///< larger mean sup_t |Y|^beta counts as a moment failure
    double error_threshold = 0.05;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
};

struct LocalizedSmokeResult {
    std::vector<double> moments;  ///< mean sup_t |Y^eps_t|^beta per moment epsilon
    bool moment_ok = false;
    bool skipped = false;  ///< moment condition failed, strong error not assessed
    double strong_error = 0.0;
    double strong_stderr = 0.0;
    bool passed = false;
    std::string message;
};

LocalizedSmokeResult localized_convergence_smoke(const SlowFastSystem& system,
                                                 const EffectiveSystem& effective,
                                                 const LocalizedSmokeConfig& config);

}  // namespace slowfast
