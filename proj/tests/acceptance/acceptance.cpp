// Runs the ten acceptance criteria and prints one verdict line per criterion.
// Exit status is non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cli.hpp"
#include "slowfast/averaging.hpp"
#include "slowfast/harness.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model_zoo.hpp"
#include "slowfast/mollify.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/poisson.hpp"
#include "slowfast/stats.hpp"

using namespace slowfast;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

InvariantMeasureEstimate ou_measure(double y, std::size_t count, std::size_t thinning, double dt,
                                    std::uint64_t seed) {
    const auto sys = get_zoo("ou-smooth").system();
    InvariantMeasureConfig cfg;
    cfg.count = count;
    cfg.thinning = thinning;
    cfg.dt = dt;
    return estimate_invariant_measure(sys.freeze(std::vector<double>{y}), cfg,
                                      NoiseSource(seed, 0, Channel::Aux, 1));
}

Outcome invariant_measure_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mu = ou_measure(1.0, 100000, 100, 1e-3, 1);
    const double secs = seconds_since(t0);
    std::vector<double> xs(mu.samples.begin(), mu.samples.end());
    RunningStats s;
    for (double x : xs) s.push(x);
    const double se = std::sqrt(s.variance() * integrated_autocorrelation_time(xs) / xs.size());
    const double z = (s.mean() - std::tanh(1.0)) / se;
    const double rel_var = std::abs(s.variance() - 1.0);
    return {std::abs(z) <= 3.0 && rel_var <= 0.05 && secs < 30.0,
            "mean z " + fmt(z) + ", variance " + fmt(s.variance()) + ", " + fmt(secs) + " s"};
}

Outcome averaged_drift_oracle() {
    const auto sys = get_zoo("ou-smooth").system();
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double y = -2.0 + 4.0 * i / 19.0;
        const auto mu = ou_measure(y, 20000, 100, 1e-3, 1000 + i);
        const std::vector<double> yv{y};
        const auto v = averaged_drift(sys.F(), 0.0, yv, mu);
        const double exact = std::sin(std::tanh(y)) * std::exp(-0.5) - y;
        worst = std::max(worst, std::abs(v.mean[0] - exact) / v.stderrs[0]);
    }
    return {worst <= 3.0, "max |z| over 20 points " + fmt(worst)};
}

RateExperiment ladder_experiment(std::size_t n_mc, std::uint64_t seed) {
    RateExperiment ex;
    ex.epsilons = {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
    ex.macro_dt = 1.0 / 256;
    ex.n_mc = n_mc;
    ex.master_seed = seed;
    return ex;
}

Outcome strong_smooth() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto e = get_zoo("ou-smooth");
    const auto gate = strong_discretization_gate(e.system(), *e.closed_form_effective,
                                                 ladder_experiment(4000, 42));
    const auto fit = fit_rate(gate.coarse, false);
    const double secs = seconds_since(t0);
    return {fit.slope >= 0.7 && fit.slope <= 1.3 && gate.passed && secs <= 600.0,
            "slope " + fmt(fit.slope) + ", gate max log change " + fmt(gate.max_log_change) +
                ", " + fmt(secs) + " s"};
}

Outcome strong_holder() {
    const auto e = get_zoo("ou-holder(0.5)");
    const auto table = strong_error(e.system(), *e.closed_form_effective, ladder_experiment(4000, 42));
    const auto fit = fit_rate(table, false);
    const auto env = envelope_check(table, 0.5);
    return {fit.slope >= 0.3 && env.bounded,
            "slope " + fmt(fit.slope) + ", envelope C " + fmt(env.constant) +
                (env.bounded ? " bounds" : " does not bound") + " the curve"};
}

Outcome weak_fully_coupled() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto e = get_zoo("fully-coupled-weak");
    const Observable phi = [](std::span<const double> y) { return std::tanh(y[0]); };
    const auto table = weak_error(e.system(), *e.closed_form_effective, phi,
                                  ladder_experiment(100000, 42));
    const auto fit = fit_rate(table, true);
    std::ostringstream errs;
    for (std::size_t i = 0; i < table.errors.size(); ++i)
        errs << (i ? " " : "") << fmt(table.errors[i]);
    return {fit.slope >= 0.7 && fit.slope <= 1.3,
            "slope " + fmt(fit.slope) + " on " + std::to_string(fit.used.size()) +
                " points (errors " + errs.str() + "), " + fmt(seconds_since(t0)) + " s"};
}

Outcome mollification_bounds() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<unsigned> ns{4, 8, 16, 32, 64};
    const auto pts = scan_line(-2.0, 2.0, 41, 1, 1);
    bool ok = true;
    std::string detail;
    for (double alpha : {0.5, 1.0}) {
        const CoefficientField f(
            "holder", Arity{false, false, true}, Shape{1, 1},
            [alpha](double, std::span<const double>, std::span<const double> y, std::span<double> o) {
                o[0] = std::min(std::pow(std::abs(y[0]), alpha), 1.0);
            },
            HolderMeta{1.0, alpha, std::nullopt}, 1.0);
        const auto sup = sup_error_scan(f, ns, pts, alpha);
        const auto der = derivative_growth_scan(f, ns, pts, alpha);
        const double hs = der.hessian_fit ? der.hessian_fit->slope : NAN;
        ok = ok && sup.fit.slope <= -(alpha - 0.2) && hs <= 2.0 - alpha + 0.2;
        detail += "alpha " + fmt(alpha) + ": sup slope " + fmt(sup.fit.slope) + ", hessian slope " +
                  fmt(hs) + "; ";
    }
    return {ok, detail + fmt(seconds_since(t0)) + " s"};
}

Outcome poisson_oracles() {
    const double m = std::tanh(0.5);
    const auto sys = get_zoo("ou-smooth").system();
    const auto frozen = sys.freeze(std::vector<double>{0.5});
    PoissonConfig cfg;
    cfg.n_paths = 4000;
    cfg.dt = 1e-2;
    cfg.t_max = 20.0;
    cfg.master_seed = 11;
    InvariantMeasureConfig mcfg;
    mcfg.dt = cfg.dt;
    mcfg.count = 20000;
    mcfg.thinning = 100;
    const auto mu = estimate_invariant_measure(frozen, mcfg, NoiseSource(12, 0, Channel::Aux, 1));
    auto field = [](std::function<double(double)> f) {
        return CoefficientField("f", Arity{false, true, false}, Shape{1, 1},
                                [f](double, std::span<const double> x, std::span<const double>,
                                    std::span<double> o) { o[0] = f(x[0]); });
    };
    // Euler chain law from x: N(m + (x - m) q^k, 2h (1 - q^2k) / (1 - q^2)).
    const double h = cfg.dt, q = 1.0 - h;
    const std::size_t steps = 2000;
    auto mean_k = [&](double x, std::size_t k) { return m + (x - m) * std::pow(q, k); };
    auto var_k = [&](std::size_t k) { return 2.0 * h * (1.0 - std::pow(q * q, k)) / (1.0 - q * q); };
    auto trap = [&](auto g) {
        double s = 0.0;
        for (std::size_t k = 0; k <= steps; ++k) s += (k == 0 || k == steps ? 0.5 : 1.0) * g(k);
        return s * h;
    };

    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({-2.25 + 0.5 * i});

    const PoissonProblem linear(frozen, field([m](double x) { return x - m; }), mu);
    const auto lin = solve_poisson_mc(linear, pts, cfg);
    double lin_z = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        lin_z = std::max(lin_z, std::abs(lin.value(i) - (pts[i][0] - m)) / lin.stderrs[i]);

    const double c = std::sin(m) * std::exp(-0.5 * 2.0 * h / (1.0 - q * q));
    const PoissonProblem sine(frozen, field([c](double x) { return std::sin(x) - c; }), mu);
    const auto sol = solve_poisson_mc(sine, pts, cfg);
    double sin_z = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double x = pts[i][0];
        const double oracle =
            trap([&](std::size_t k) { return std::sin(mean_k(x, k)) * std::exp(-0.5 * var_k(k)) - c; });
        sin_z = std::max(sin_z, std::abs(sol.value(i) - oracle) / sol.stderrs[i]);
    }

    const auto centred = PoissonProblem(frozen, center(field([](double x) { return std::sin(x); }), mu), mu);
    const auto stencil_sol = solve_poisson_mc(centred, residual_stencil(pts), cfg);
    const auto res = residual_check(centred, stencil_sol, pts);
    const auto shifted = stencil_sol.shifted(3.5);
    const auto res_shift = residual_check(centred, shifted, pts);
    bool shift_exact = res_shift.residuals == res.residuals;
    for (std::size_t i = 0; i < shifted.u.size(); ++i)
        shift_exact = shift_exact && shifted.value(i) == stencil_sol.value(i) + 3.5;

    return {lin_z <= 3.0 && sin_z <= 3.0 && res.median_relative <= 0.1 && shift_exact,
            "linear max |z| " + fmt(lin_z) + ", sin max |z| " + fmt(sin_z) +
                ", median relative residual " + fmt(res.median_relative) + ", shift " +
                (shift_exact ? "exact" : "inexact")};
}

Outcome pde_limit() {
    const auto e = get_zoo("ou-smooth");
    PdeLimitConfig cfg;
    cfg.n_mc = 20000;
    cfg.master_seed = 42;
    const Observable psi = [](std::span<const double> y) { return y[0] > 0.0 ? 1.0 : 0.0; };
    const Observable phi = [](std::span<const double> y) { return std::tanh(y[0]); };
    const std::vector<PdeProbe> probes{{0.0, {3.0}, {0.0}}};
    const auto r = pde_limit_experiment(e.system(), *e.closed_form_effective, psi, phi, probes, cfg);
    std::vector<double> logs, gaps;
    std::string curve;
    for (std::size_t i = 0; i < r.epsilons.size(); ++i) {
        logs.push_back(std::log(r.epsilons[i]));
        gaps.push_back(r.gap(i, 0));
        curve += (i ? " " : "") + fmt(r.gap(i, 0));
    }
    const double trend = least_squares(logs, gaps).slope;
    const std::size_t last = r.epsilons.size() - 1;
    const double ratio = r.gap(last, 0) / r.gap_stderr(last, 0);
    return {trend > 0.0 && ratio < 3.0,
            "gaps " + curve + ", trend slope " + fmt(trend) + ", final gap / SE " + fmt(ratio)};
}

Outcome determinism() {
    const auto root = fs::temp_directory_path() / "slowfast-acceptance-determinism";
    fs::remove_all(root);
    const std::vector<std::vector<std::string>> runs{
        {"validate", "--zoo", "ou-smooth"},
        {"simulate", "--zoo", "ou-smooth", "--seed", "42"},
        {"average", "--zoo", "ou-smooth", "--measure-count", "4000"},
        {"strong-rate", "--seed", "42", "--n-mc", "256", "--epsilons", "0.0625,0.03125,0.015625"},
        {"weak-rate", "--zoo", "fully-coupled-weak", "--seed", "42", "--n-mc", "512", "--epsilons",
         "0.0625,0.03125,0.015625"},
        {"mollify-check"},
        {"poisson-check", "--n-mc", "128", "--t-max", "4", "--x-points", "-1,0.5,2"},
        {"pde-limit", "--n-mc", "256", "--epsilons", "0.0625,0.03125,0.015625"},
    };
    std::size_t compared = 0;
    for (const auto& args : runs) {
        std::vector<std::string> texts;
        for (const char* workers : {"1", "8"}) {
            const auto dir = root / (args[0] + "-" + workers);
            auto full = args;
            full.insert(full.end(), {"--workers", workers, "--output-dir", dir.string()});
            std::ostringstream out, err;
            const int code = cli::run(full, out, err);
            if (code == cli::kExitError) return {false, args[0] + " failed: " + err.str()};
            std::string all;
            for (const auto& f : fs::directory_iterator(dir)) {
                std::ifstream is(f.path(), std::ios::binary);
                all += f.path().filename().string() + "\n";
                all.append(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
            }
            texts.push_back(all);
        }
        if (texts[0] != texts[1]) return {false, args[0] + " output differs between 1 and 8 workers"};
        ++compared;
    }
    fs::remove_all(root);
    return {true, std::to_string(compared) + " subcommands byte-identical at 1 and 8 workers"};
}

Outcome property_suites() {
    std::string failures;
    // spd_sqrt round trip.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    double worst_sqrt = 0.0;
    for (int n = 1; n <= 6; ++n)
        for (int rep = 0; rep < 20; ++rep) {
            Matrix a(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) a(i, j) = z(rng);
            const Matrix m = a * a.transpose();
            const Matrix s = spd_sqrt(m);
            worst_sqrt = std::max(worst_sqrt, (s * s - m).norm() / (1.0 + m.norm()));
        }
    if (worst_sqrt > 1e-9) failures += " spd_sqrt";

    // Kernel normalisation.
    double worst_mass = 0.0;
    for (std::size_t d : {1u, 2u, 3u})
        for (unsigned n : {1u, 8u, 64u}) {
            const MollifierKernel k(d, n);
            worst_mass = std::max({worst_mass, std::abs(k.mass1() - 1.0), std::abs(k.mass2() - 1.0)});
        }
    if (worst_mass > 1e-9) failures += " kernel";

    // Noise KS.
    NoiseSource w(8, 0, Channel::W1, 1);
    std::vector<double> draws;
    for (int i = 0; i < 50000; ++i) draws.push_back(w.next_increment(1.0)[0]);
    const auto ks = ks_test_standard_normal(draws);
    if (ks.p_value < 1e-3) failures += " noise-ks";

    // Euler-Maruyama strong order on the coupled equation at epsilon = 1.
    const auto sys = get_zoo("ou-smooth").system(1.0);
    CoupledWorkspace ws(sys);
    const std::size_t fine = 4096;
    const std::vector<std::size_t> coarse{16, 32, 64, 128, 256};
    std::vector<double> sq(coarse.size(), 0.0);
    for (std::uint64_t p = 0; p < 200; ++p) {
        NoiseSource n1(9, p, Channel::W1, 1), n2(9, p, Channel::W2, 1);
        std::vector<double> d1(fine), d2(fine);
        for (std::size_t i = 0; i < fine; ++i) {
            d1[i] = n1.next_increment(1.0 / fine)[0];
            d2[i] = n2.next_increment(1.0 / fine)[0];
        }
        auto run = [&](std::size_t n) {
            std::vector<double> x{0.0}, y{0.5};
            const std::size_t stride = fine / n;
            for (std::size_t k = 0; k < n; ++k) {
                double a = 0.0, b = 0.0;
                for (std::size_t j = k * stride; j < (k + 1) * stride; ++j) {
                    a += d1[j];
                    b += d2[j];
                }
                const std::vector<double> da{a}, db{b};
                em_step_coupled(sys, x, y, double(k) / n, 1.0 / n, da, db, ws);
            }
            return std::pair{x[0], y[0]};
        };
        const auto ref = run(fine);
        for (std::size_t l = 0; l < coarse.size(); ++l) {
            const auto c = run(coarse[l]);
            sq[l] += std::pow(c.first - ref.first, 2) + std::pow(c.second - ref.second, 2);
        }
    }
    std::vector<double> lh, le;
    for (std::size_t l = 0; l < coarse.size(); ++l) {
        lh.push_back(std::log(1.0 / coarse[l]));
        le.push_back(0.5 * std::log(sq[l] / 200.0));
    }
    const double em_order = least_squares(lh, le).slope;
    if (std::abs(em_order - 1.0) > 0.2) failures += " em-order";

    // Invariance of the sample cloud under one frozen step.
    const auto mu = ou_measure(0.5, 50000, 100, 1e-3, 13);
    NoiseSource step(14, 0, Channel::Aux, 1);
    RunningStats before, after;
    const double dt = 0.05, mm = std::tanh(0.5);
    for (std::size_t i = 0; i < mu.count(); ++i) {
        const double x = mu.sample(i)[0];
        before.push(x);
        after.push(x + (mm - x) * dt + std::sqrt(2.0) * step.next_increment(dt)[0]);
    }
    const bool invariant = std::abs(after.mean() - before.mean()) < 0.02 &&
                           std::abs(after.variance() / before.variance() - 1.0) < 0.03;
    if (!invariant) failures += " invariance";

    return {failures.empty(),
            "spd_sqrt residual " + fmt(worst_sqrt) + ", kernel mass error " + fmt(worst_mass) +
                ", KS p " + fmt(ks.p_value) + ", EM order " + fmt(em_order) + ", invariance " +
                (invariant ? "ok" : "broken") + (failures.empty() ? "" : "; failed:" + failures)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"invariant-measure oracle", invariant_measure_oracle},
        {"averaged-drift oracle", averaged_drift_oracle},
        {"strong rate, smooth", strong_smooth},
        {"strong rate, Hölder 1/2", strong_holder},
        {"weak rate, fully coupled", weak_fully_coupled},
        {"mollification bounds", mollification_bounds},
        {"Poisson oracles", poisson_oracles},
        {"PDE limit", pde_limit},
        {"determinism", determinism},
        {"property suites", property_suites},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.passed) ++failed;
        std::cout << "criterion " << (i + 1) << " [" << criteria[i].first
                  << "]: " << (o.passed ? "PASS" : "FAIL") << " (" << o.detail << ")" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
