#include "slowfast/integrate.hpp"

#include <cmath>
#include <ostream>

#include "slowfast/averaging.hpp"
#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

namespace {

inline bool out_of_range(double v) { return !(std::abs(v) <= kBlowUpThreshold); }

[[noreturn]] void blow_up(double t, std::span<const double> a, std::span<const double> b) {
    std::vector<double> state(a.begin(), a.end());
    state.insert(state.end(), b.begin(), b.end());
    throw BlowUpError(t, std::move(state));
}

}  // namespace

std::size_t StepPlan::macro_steps() const {
    if (!(macro_dt > 0.0) || !std::isfinite(macro_dt))
        throw ArgumentError("macro_dt must be positive");
    if (!(horizon >= 0.0) || !std::isfinite(horizon))
        throw ArgumentError("horizon must be non-negative");
    const double ratio = horizon / macro_dt;
    const double steps = std::round(ratio);
    if (std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
        throw ArgumentError("horizon must be an integer multiple of macro_dt");
    return static_cast<std::size_t>(steps);
}

void StepPlan::check() const {
    if (micro_substeps == 0) throw ArgumentError("micro_substeps must be at least 1");
    (void)macro_steps();
}

void StepPlan::check_coupled(double epsilon, double stability_factor) const {
    check();
    if (!(micro_dt() <= stability_factor * epsilon * (1.0 + 1e-12)))
        throw ArgumentError("micro_dt " + format_double(micro_dt()) +
                            " exceeds the stability limit " +
                            format_double(stability_factor * epsilon));
}

StepPlan StepPlan::for_epsilon(double macro_dt, double horizon, double epsilon,
                               double stability_factor) {
    if (!(epsilon > 0.0) || !(stability_factor > 0.0))
        throw ArgumentError("epsilon and stability factor must be positive");
    StepPlan plan{macro_dt, 1, horizon};
    plan.micro_substeps = static_cast<std::size_t>(
        std::ceil(macro_dt / (stability_factor * epsilon) * (1.0 - 1e-12)));
    if (plan.micro_substeps == 0) plan.micro_substeps = 1;
    plan.check_coupled(epsilon, stability_factor);
    return plan;
}

void Trajectory::append(double t, std::span<const double> state) {
    if (state.size() != width_) throw ArgumentError("trajectory state has the wrong width");
    if (!times_.empty() && !(t > times_.back()))
        throw ArgumentError("trajectory times must be strictly increasing");
    for (double v : state)
        if (!std::isfinite(v)) throw BlowUpError(t, {state.begin(), state.end()});
    times_.push_back(t);
    states_.insert(states_.end(), state.begin(), state.end());
}

void Trajectory::write_csv(std::ostream& os, std::span<const std::string> columns) const {
    if (columns.size() != width_) throw ArgumentError("column names do not match the state width");
    CsvWriter csv(os);
    csv.comment("system", meta_.system_id);
    csv.comment("kind", meta_.kind);
    csv.comment("dt", format_double(meta_.dt));
    csv.comment("seed", std::to_string(meta_.master_seed));
    csv.comment("path_index", std::to_string(meta_.path_index));
    std::vector<std::string> head{"t"};
    head.insert(head.end(), columns.begin(), columns.end());
    csv.header(head);
    std::vector<double> row(width_ + 1);
    for (std::size_t i = 0; i < size(); ++i) {
        row[0] = times_[i];
        auto s = state(i);
        std::copy(s.begin(), s.end(), row.begin() + 1);
        csv.row(row);
    }
}

void em_step_coupled(const SlowFastSystem& system, std::span<double> x, std::span<double> y,
                     double t, double micro_dt, std::span<const double> dw1,
                     std::span<const double> dw2, CoupledWorkspace& ws) {
    const std::size_t d1 = system.d1();
    const std::size_t d2 = system.d2();
    const double inv_eps = 1.0 / system.epsilon();
    const double inv_sqrt_eps = 1.0 / std::sqrt(system.epsilon());

    // All coefficients read the pre-step state.
    system.b().eval(0.0, x, y, ws.b);
    system.sigma().eval(0.0, x, y, ws.sigma);
    system.F().eval(t, x, y, ws.F);
    system.G().eval(t, x, y, ws.G);

    for (std::size_t i = 0; i < d1; ++i) {
        double noise = 0.0;
        for (std::size_t k = 0; k < d1; ++k) noise += ws.sigma[i * d1 + k] * dw1[k];
        x[i] += inv_eps * ws.b[i] * micro_dt + inv_sqrt_eps * noise;
    }
    for (std::size_t j = 0; j < d2; ++j) {
        double noise = 0.0;
        for (std::size_t k = 0; k < d2; ++k) noise += ws.G[j * d2 + k] * dw2[k];
        y[j] += ws.F[j] * micro_dt + noise;
    }
    for (double v : x)
        if (out_of_range(v)) blow_up(t + micro_dt, x, y);
    for (double v : y)
        if (out_of_range(v)) blow_up(t + micro_dt, x, y);
}

CoupledState em_step_coupled(const SlowFastSystem& system, const CoupledState& state, double t,
                             double micro_dt, std::span<const double> dw1,
                             std::span<const double> dw2) {
    if (!(micro_dt > 0.0)) throw ArgumentError("micro_dt must be positive");
    if (state.x.size() != system.d1() || state.y.size() != system.d2() ||
        dw1.size() != system.d1() || dw2.size() != system.d2())
        throw ArgumentError("state or noise dimension does not match the system");
    CoupledState next = state;
    CoupledWorkspace ws(system);
    em_step_coupled(system, next.x, next.y, t, micro_dt, dw1, dw2, ws);
    return next;
}

void integrate_coupled(const SlowFastSystem& system, const StepPlan& plan, NoiseSource& w1,
                       NoiseSource& w2, const CoupledObserver& observe,
                       double stability_factor) {
    plan.check_coupled(system.epsilon(), stability_factor);
    if (w1.dim() != system.d1() || w2.dim() != system.d2())
        throw ArgumentError("noise dimensions do not match the system");
    const std::size_t steps = plan.macro_steps();
    const std::size_t m = plan.micro_substeps;
    const double h = plan.micro_dt();

    std::vector<double> x = system.x0();
    std::vector<double> y = system.y0();
    std::vector<double> macro_dw2(system.d2());
    std::vector<double> micro_dw2(m * system.d2());
    std::vector<double> dw1(system.d1());
    CoupledWorkspace ws(system);

    observe(0, 0.0, x, y);
    for (std::size_t k = 0; k < steps; ++k) {
        const std::uint64_t pos = w2.position();
        w2.next_increment(plan.macro_dt, macro_dw2);
        w2.bridge(pos, plan.macro_dt, macro_dw2, m, micro_dw2);
        const double t0 = static_cast<double>(k) * plan.macro_dt;
        for (std::size_t s = 0; s < m; ++s) {
            w1.next_increment(h, dw1);
            em_step_coupled(system, x, y, t0 + static_cast<double>(s) * h, h, dw1,
                            std::span<const double>(micro_dw2).subspan(s * system.d2(),
                                                                       system.d2()),
                            ws);
        }
        observe(k + 1, static_cast<double>(k + 1) * plan.macro_dt, x, y);
    }
}

Trajectory simulate_coupled(const SlowFastSystem& system, const StepPlan& plan,
                            std::uint64_t path_index, std::uint64_t master_seed,
                            double stability_factor) {
    NoiseSource w1(master_seed, path_index, Channel::W1, system.d1());
    NoiseSource w2(master_seed, path_index, Channel::W2, system.d2());
    Trajectory traj(system.d1() + system.d2(),
                    {system.id(), "coupled", plan.micro_dt(), master_seed, path_index});
    std::vector<double> row(system.d1() + system.d2());
    integrate_coupled(
        system, plan, w1, w2,
        [&](std::size_t, double t, std::span<const double> x, std::span<const double> y) {
            std::copy(x.begin(), x.end(), row.begin());
            std::copy(y.begin(), y.end(), row.begin() + static_cast<std::ptrdiff_t>(x.size()));
            traj.append(t, row);
        },
        stability_factor);
    return traj;
}

Trajectory simulate_frozen(const FrozenSystem& frozen, const StepPlan& plan, NoiseSource noise) {
    plan.check();
    const std::size_t d1 = frozen.d1();
    if (noise.dim() != d1) throw ArgumentError("noise dimension does not match the frozen system");
    const std::size_t steps = plan.macro_steps();
    const double h = plan.micro_dt();
    Trajectory traj(d1, {"frozen", "frozen", h, noise.master_seed(), noise.path_index()});
    std::vector<double> x = frozen.x0();
    std::vector<double> b(d1), sig(d1 * d1), dw(d1);
    traj.append(0.0, x);
    for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t s = 0; s < plan.micro_substeps; ++s) {
            noise.next_increment(h, dw);
            frozen.drift(x, b);
            frozen.diffusion(x, sig);
            for (std::size_t i = 0; i < d1; ++i) {
                double n = 0.0;
                for (std::size_t j = 0; j < d1; ++j) n += sig[i * d1 + j] * dw[j];
                x[i] += b[i] * h + n;
            }
            for (double v : x)
                if (out_of_range(v))
                    blow_up(static_cast<double>(k) * plan.macro_dt +
                                static_cast<double>(s + 1) * h,
                            x, {});
        }
        traj.append(static_cast<double>(k + 1) * plan.macro_dt, x);
    }
    return traj;
}

void integrate_effective(const EffectiveSystem& effective, const StepPlan& plan,
                         NoiseSource& noise_w2, std::span<const double> y0,
                         const SlowObserver& observe) {
    plan.check();
    const std::size_t d2 = effective.d2();
    if (y0.size() != d2 || noise_w2.dim() != d2)
        throw ArgumentError("effective state or noise dimension mismatch");
    const std::size_t steps = plan.macro_steps();
    std::vector<double> y(y0.begin(), y0.end());
    std::vector<double> f(d2), g(d2 * d2), dw(d2);
    observe(0, 0.0, y);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * plan.macro_dt;
        noise_w2.next_increment(plan.macro_dt, dw);
        effective.drift(t, y, f);
        effective.diffusion(t, y, g);
        for (std::size_t i = 0; i < d2; ++i) {
            double n = 0.0;
            for (std::size_t j = 0; j < d2; ++j) n += g[i * d2 + j] * dw[j];
            y[i] += f[i] * plan.macro_dt + n;
        }
        for (double v : y)
            if (out_of_range(v)) blow_up(t + plan.macro_dt, {}, y);
        observe(k + 1, static_cast<double>(k + 1) * plan.macro_dt, y);
    }
}

Trajectory simulate_effective(const EffectiveSystem& effective, const StepPlan& plan,
                              NoiseSource noise_w2, std::span<const double> y0) {
    Trajectory traj(effective.d2(), {effective.description(), "effective", plan.macro_dt,
                                     noise_w2.master_seed(), noise_w2.path_index()});
    integrate_effective(effective, plan, noise_w2, y0,
                        [&](std::size_t, double t, std::span<const double> y) {
                            traj.append(t, y);
                        });
    return traj;
}

}  // namespace slowfast
