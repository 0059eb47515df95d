#include "slowfast/poisson.hpp"

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

std::size_t step_count(double horizon, double dt) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ArgumentError("dt and horizon must be positive");
    const double r = horizon / dt;
    const double k = std::round(r);
    if (std::abs(r - k) > 1e-9 * r) throw ArgumentError("horizon must be a multiple of dt");
    return static_cast<std::size_t>(k);
}

// One Euler-Maruyama path of the frozen equation; calls visit(k, x) for
// k = 0..steps.
template <class Visit>
void frozen_path(const FrozenSystem& frozen, std::span<const double> x0, double dt,
                 std::size_t steps, NoiseSource& noise, Visit&& visit) {
    const std::size_t d1 = frozen.d1();
    std::vector<double> x(x0.begin(), x0.end()), b(d1), sig(d1 * d1), dw(d1);
    visit(std::size_t{0}, std::span<const double>(x));
    for (std::size_t k = 1; k <= steps; ++k) {
        noise.next_increment(dt, dw);
        frozen.drift(x, b);
        frozen.diffusion(x, sig);
        for (std::size_t i = 0; i < d1; ++i) {
            double n = 0.0;
            for (std::size_t j = 0; j < d1; ++j) n += sig[i * d1 + j] * dw[j];
            x[i] += b[i] * dt + n;
        }
        for (double v : x)
            if (!std::isfinite(v)) throw BlowUpError(static_cast<double>(k) * dt, x);
        visit(k, std::span<const double>(x));
    }
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

std::size_t find_point(const PoissonSolution& sol, std::span<const double> p) {
    for (std::size_t i = 0; i < sol.points.size(); ++i) {
        const auto& q = sol.points[i];
        if (q.size() != p.size()) continue;
        bool same = true;
        for (std::size_t j = 0; j < p.size() && same; ++j)
            same = std::abs(q[j] - p[j]) <= 1e-12 * (1.0 + std::abs(p[j]));
        if (same) return i;
    }
    std::string where;
    for (std::size_t j = 0; j < p.size(); ++j) where += (j ? "," : "") + format_double(p[j]);
    throw ArgumentError("stencil point (" + where + ") lies outside the evaluated points");
}

}  // namespace

CenteringResult check_centering(const CoefficientField& f, const InvariantMeasureEstimate& mu) {
    if (f.shape().size() != 1) throw ArgumentError("centering needs a scalar field");
    const AveragedValue avg = averaged_drift(f, 0.0, mu.y_param, mu);
    CenteringResult r;
    r.estimate = avg.mean[0];
    r.stderr_estimate = avg.stderrs[0];
    r.passed = std::abs(r.estimate) <= 3.0 * r.stderr_estimate;
    return r;
}

CoefficientField center(const CoefficientField& f, const InvariantMeasureEstimate& mu) {
    const double mean = check_centering(f, mu).estimate;
    CoefficientField base = f;
    return CoefficientField(
        f.name() + "_centered", f.arity(), f.shape(),
        [base, mean](double t, std::span<const double> x, std::span<const double> y,
                     std::span<double> out) {
            base.eval(t, x, y, out);
            out[0] -= mean;
        },
        f.meta());
}

PoissonProblem::PoissonProblem(FrozenSystem frozen, CoefficientField f,
                               const InvariantMeasureEstimate& mu)
    : frozen_(std::move(frozen)), f_(std::move(f)) {
    if (f_.shape().size() != 1) throw ArgumentError("Poisson data must be scalar");
    if (mu.y_param != frozen_.y_param())
        throw ArgumentError("invariant-measure estimate belongs to another slow state");
    centering_ = check_centering(f_, mu);
    if (!centering_.passed)
        throw ContractError("Poisson data is not centred: mean " +
                            format_double(centering_.estimate) + " with standard error " +
                            format_double(centering_.stderr_estimate));
}

double PoissonProblem::source(std::span<const double> x) const {
    double out = 0.0;
    f_.eval(0.0, x, frozen_.y_param(), std::span(&out, 1));
    return out;
}

PoissonSolution PoissonSolution::shifted(double c) const {
    PoissonSolution s = *this;
    s.offset += c;
    return s;
}

void PoissonSolution::write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    csv.comment("t_max", format_double(t_max));
    csv.comment("n_paths", std::to_string(n_paths));
    csv.comment("dt", format_double(dt));
    for (const auto& w : warnings) csv.comment("warning", w);
    std::vector<std::string> head;
    const std::size_t d1 = points.empty() ? 0 : points[0].size();
    for (std::size_t i = 0; i < d1; ++i) head.push_back("x" + std::to_string(i + 1));
    for (const char* c : {"u", "stderr", "tail", "tail_stderr"}) head.emplace_back(c);
    csv.header(head);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<double> row(points[i]);
        for (double v : {value(i), stderrs[i], tail[i], tail_stderrs[i]}) row.push_back(v);
        csv.row(row);
    }
}

PoissonSolution solve_poisson_mc(const PoissonProblem& problem,
                                 std::span<const std::vector<double>> points,
                                 const PoissonConfig& config) {
    if (!(config.t_max >= 1.0)) throw ArgumentError("T_max must be at least 1");
    if (config.n_paths < 2 || config.block_size == 0 || config.workers == 0)
        throw ArgumentError("Poisson solve needs n_paths >= 2 and positive blocks and workers");
    const std::size_t steps = step_count(config.t_max, config.dt);
    if (steps % 2 != 0) throw ArgumentError("T_max / dt must be even for the tail diagnostic");
    const std::size_t half = steps / 2;
    const std::size_t d1 = problem.frozen().d1();
    for (const auto& p : points)
        if (p.size() != d1) throw ArgumentError("evaluation point has the wrong dimension");

    const std::size_t n_blocks = block_count(config.n_paths, config.block_size);
    struct BlockStats {
        RunningStats full;
        RunningStats tail;
    };
    std::vector<BlockStats> stats(points.size() * n_blocks);
    parallel_for(stats.size(), config.workers, [&](std::size_t task) {
        const std::size_t i = task / n_blocks;
        const std::size_t bi = task % n_blocks;
        const BlockRange range = block_range(config.n_paths, config.block_size, bi);
        for (std::size_t p = range.begin; p < range.end; ++p) {
            NoiseSource noise(config.master_seed, p, Channel::W1, d1);
            double full = 0.0, first = 0.0;
            frozen_path(problem.frozen(), points[i], config.dt, steps, noise,
                        [&](std::size_t k, std::span<const double> x) {
                            const double fx = problem.source(x);
                            const double wf = (k == 0 || k == steps) ? 0.5 : 1.0;
                            full += wf * fx;
                            if (k <= half) first += ((k == 0 || k == half) ? 0.5 : 1.0) * fx;
                        });
            stats[task].full.push(full * config.dt);
            stats[task].tail.push((full - first) * config.dt);
        }
    });

    PoissonSolution sol;
    sol.points.assign(points.begin(), points.end());
    sol.t_max = config.t_max;
    sol.n_paths = config.n_paths;
    sol.dt = config.dt;
    for (std::size_t i = 0; i < points.size(); ++i) {
        RunningStats full, tail;
        for (std::size_t bi = 0; bi < n_blocks; ++bi) {
            full.merge(stats[i * n_blocks + bi].full);
            tail.merge(stats[i * n_blocks + bi].tail);
        }
        sol.u.push_back(full.mean());
        sol.stderrs.push_back(full.stderr_of_mean());
        sol.tail.push_back(tail.mean());
        sol.tail_stderrs.push_back(tail.stderr_of_mean());
        if (std::abs(tail.mean()) > 5.0 * tail.stderr_of_mean() && tail.mean() != 0.0)
            sol.warnings.push_back("point " + std::to_string(i) +
                                   ": truncation at T_max may be too early (tail " +
                                   format_double(tail.mean()) + ")");
    }
    return sol;
}

std::vector<std::vector<double>> residual_stencil(std::span<const std::vector<double>> centers,
                                                  double rel_step) {
    if (!(rel_step > 0.0)) throw ArgumentError("stencil step must be positive");
    std::vector<std::vector<double>> pts;
    for (const auto& c : centers) {
        const double h = rel_step * std::max(1.0, norm(c));
        const std::size_t d = c.size();
        pts.push_back(c);
        for (std::size_t i = 0; i < d; ++i)
            for (double s : {h, -h}) {
                auto p = c;
                p[i] += s;
                pts.push_back(std::move(p));
            }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j)
                for (double si : {h, -h})
                    for (double sj : {h, -h}) {
                        auto p = c;
                        p[i] += si;
                        p[j] += sj;
                        pts.push_back(std::move(p));
                    }
    }
    return pts;
}

ResidualReport residual_check(const PoissonProblem& problem, const PoissonSolution& solution,
                              std::span<const std::vector<double>> centers, double rel_step) {
    if (centers.empty()) throw ArgumentError("residual check needs at least one centre");
    const std::size_t d = problem.frozen().d1();
    ResidualReport rep;
    rep.centers.assign(centers.begin(), centers.end());
    std::vector<double> sources;
    std::vector<double> b(d), sig(d * d), a(d * d);
    // Differences use the stored u without its offset, so shifting the
    // solution by a constant leaves every residual bit-for-bit unchanged.
    auto u_at = [&](std::span<const double> p) { return solution.u[find_point(solution, p)]; };
    for (const auto& c : centers) {
        if (c.size() != d) throw ArgumentError("centre has the wrong dimension");
        const double h = rel_step * std::max(1.0, norm(c));
        problem.frozen().drift(c, b);
        problem.frozen().diffusion(c, sig);
        half_gram(sig, d, a);
        const double u0 = u_at(c);
        double lu = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            auto p = c, m = c;
            p[i] += h;
            m[i] -= h;
            const double up = u_at(p), um = u_at(m);
            lu += b[i] * (up - um) / (2.0 * h);
            lu += a[i * d + i] * (up - 2.0 * u0 + um) / (h * h);
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) {
                double v[4];
                int q = 0;
                for (double si : {h, -h})
                    for (double sj : {h, -h}) {
                        auto p = c;
                        p[i] += si;
                        p[j] += sj;
                        v[q++] = u_at(p);
                    }
                const double mixed = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h);
                lu += 2.0 * a[i * d + j] * mixed;
            }
        const double f = problem.source(c);
        sources.push_back(std::abs(f));
        rep.residuals.push_back(std::abs(lu + f));
    }
    double scale = 0.0;
    for (double s : sources) scale += s;
    scale /= static_cast<double>(sources.size());
    for (double r : rep.residuals)
        rep.relative.push_back(scale > 0.0 ? r / scale
                                           : (r == 0.0 ? 0.0
                                                       : std::numeric_limits<double>::infinity()));
    rep.median_relative = median(rep.relative);
    rep.passed = rep.median_relative <= 0.1;
    return rep;
}

GrowthReport growth_probe(const PoissonSolution& solution) {
    GrowthReport rep;
    std::vector<double> xs, ys;
    double largest = 0.0;
    for (std::size_t i = 0; i < solution.points.size(); ++i) {
        const double r = norm(solution.points[i]);
        const double m = std::abs(solution.value(i));
        rep.radii.push_back(r);
        rep.magnitudes.push_back(m);
        largest = std::max(largest, m);
        if (r > 0.0 && m > 0.0) {
            xs.push_back(std::log(r));
            ys.push_back(std::log(m));
        }
    }
    std::vector<double> distinct;
    for (double r : rep.radii)
        if (r > 0.0 && std::find(distinct.begin(), distinct.end(), r) == distinct.end())
            distinct.push_back(r);
    if (distinct.size() < 4) throw ArgumentError("growth probe needs at least 4 radii");
    if (largest <= 1e-12 || xs.size() < 2) {
        rep.degenerate = true;
        return rep;
    }
    rep.fit = least_squares(xs, ys);
    rep.degree = rep.fit.slope;
    return rep;
}

SemigroupValue semigroup_estimate(const FrozenSystem& frozen, const CoefficientField& f,
                                  std::span<const double> x, double t,
                                  const PoissonConfig& config) {
    if (f.shape().size() != 1) throw ArgumentError("semigroup estimate needs a scalar field");
    if (x.size() != frozen.d1()) throw ArgumentError("start point has the wrong dimension");
    const std::size_t steps = t == 0.0 ? 0 : step_count(t, config.dt);
    const std::size_t n_blocks = block_count(config.n_paths, config.block_size);
    std::vector<RunningStats> acc(n_blocks);
    parallel_for(n_blocks, config.workers, [&](std::size_t bi) {
        const BlockRange range = block_range(config.n_paths, config.block_size, bi);
        for (std::size_t p = range.begin; p < range.end; ++p) {
            NoiseSource noise(config.master_seed, p, Channel::W1, frozen.d1());
            double value = 0.0;
            frozen_path(frozen, x, config.dt, steps, noise,
                        [&](std::size_t k, std::span<const double> xs) {
                            if (k == steps)
                                f.eval(0.0, xs, frozen.y_param(), std::span(&value, 1));
                        });
            acc[bi].push(value);
        }
    });
    RunningStats total;
    for (const auto& b : acc) total.merge(b);
    return {total.mean(), total.stderr_of_mean()};
}

YDerivativeProbe poisson_y_derivative(const SlowFastSystem& system, const CoefficientField& f,
                                      std::span<const double> y, std::size_t axis, double h,
                                      std::span<const std::vector<double>> points,
                                      const PoissonConfig& config,
                                      const InvariantMeasureConfig& measure) {
    if (axis >= system.d2() || y.size() != system.d2())
        throw ArgumentError("slow axis or state out of range");
    if (!(h > 0.0)) throw ArgumentError("difference step must be positive");
    PoissonSolution sols[2];
    for (int s = 0; s < 2; ++s) {
        std::vector<double> ys(y.begin(), y.end());
        ys[axis] += s == 0 ? h : -h;
        const FrozenSystem frozen = system.freeze(ys);
        NoiseSource noise(derive_seed(config.master_seed, 0x7964), 0, Channel::Aux,
                          system.d1());
        const auto mu = estimate_invariant_measure(frozen, measure, noise);
        const PoissonProblem problem(frozen, center(f, mu), mu);
        sols[s] = solve_poisson_mc(problem, points, config);
    }
    YDerivativeProbe probe;
    for (std::size_t i = 0; i < points.size(); ++i) {
        probe.derivative.push_back((sols[0].value(i) - sols[1].value(i)) / (2.0 * h));
        probe.stderrs.push_back(std::hypot(sols[0].stderrs[i], sols[1].stderrs[i]) / (2.0 * h));
    }
    return probe;
}

}  // namespace slowfast
