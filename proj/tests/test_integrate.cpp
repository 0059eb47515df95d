#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "slowfast/averaging.hpp"
#include "slowfast/error.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model_zoo.hpp"
#include "slowfast/stats.hpp"

using namespace slowfast;

namespace {

CoefficientField field1(const std::string& name, bool reads_x,
                        std::function<double(double, double)> f) {
    return CoefficientField(
        name, Arity{false, reads_x, true}, Shape{1, 1},
        [f](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
            out[0] = f(x[0], y[0]);
        });
}

// Fast OU, slow pure Brownian motion.
SlowFastSystem brownian_slow(double eps) {
    return SlowFastSystem("brownian-slow", 1, 1,
                          field1("b", true, [](double x, double) { return -x; }),
                          field1("sigma", true, [](double, double) { return 1.0; }),
                          field1("F", false, [](double, double) { return 0.0; }),
                          field1("G", false, [](double, double) { return 1.0; }), eps, false,
                          {0.0}, {0.25});
}

}  // namespace

TEST(StepPlan, ForEpsilonPicksSmallestStableSubstepCount) {
    const auto plan = StepPlan::for_epsilon(1.0 / 256, 1.0, 1.0 / 64, 0.05);
    EXPECT_EQ(plan.micro_substeps, 5u);
    EXPECT_LE(plan.micro_dt(), 0.05 / 64);
    EXPECT_GT(plan.macro_dt / 4.0, 0.05 / 64);
    EXPECT_EQ(plan.macro_steps(), 256u);
    EXPECT_EQ(StepPlan::for_epsilon(1.0 / 256, 1.0, 10.0).micro_substeps, 1u);
}

TEST(StepPlan, RejectsNonIntegerHorizonAndUnstableSteps) {
    EXPECT_THROW((StepPlan{0.3, 1, 1.0}.macro_steps()), ArgumentError);
    EXPECT_THROW((StepPlan{0.1, 0, 1.0}.check()), ArgumentError);
    EXPECT_THROW((StepPlan{1.0 / 256, 1, 1.0}.check_coupled(1.0 / 64, 0.05)), ArgumentError);
}

TEST(Coupled, SlowPathOnMacroGridDoesNotDependOnSubsteps) {
    // With F = 0 and G = 1, Y on the macro grid is y0 plus the macro W2
    // increments, which the bridge refinement preserves.
    const auto sys = brownian_slow(1.0);
    std::vector<Trajectory> runs;
    for (std::size_t m : {1u, 4u, 16u})
        runs.push_back(simulate_coupled(sys, StepPlan{1.0 / 64, m, 1.0}, 3, 99, 1.0));
    NoiseSource w2(99, 3, Channel::W2, 1);
    double y = 0.25;
    for (std::size_t k = 0; k < runs[0].size(); ++k) {
        if (k > 0) y += w2.next_increment(1.0 / 64)[0];
        for (const auto& r : runs) EXPECT_NEAR(r.state(k)[1], y, 1e-12) << "k " << k;
    }
}

TEST(Coupled, EffectiveTwinSharesMacroIncrements) {
    const auto sys = brownian_slow(1.0);
    const EffectiveSystem eff(
        1, [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; },
        [](double, std::span<const double>, std::span<double> out) { out[0] = 1.0; },
        EffectiveSystem::Provenance::ClosedForm, "brownian");
    const StepPlan plan{1.0 / 32, 8, 1.0};
    const auto coupled = simulate_coupled(sys, plan, 0, 5, 1.0);
    auto [w2c, w2e] = coupled_pair(5, 0, 1);
    const auto ybar = simulate_effective(eff, plan, w2e, sys.y0());
    ASSERT_EQ(coupled.size(), ybar.size());
    for (std::size_t k = 0; k < ybar.size(); ++k)
        EXPECT_NEAR(coupled.state(k)[1], ybar.state(k)[0], 1e-12);
}

TEST(Coupled, DeterministicPerPathAndDistinctAcrossPaths) {
    const auto sys = get_zoo("ou-smooth").system(1.0 / 16);
    const auto plan = StepPlan::for_epsilon(1.0 / 64, 0.5, 1.0 / 16);
    const auto a = simulate_coupled(sys, plan, 4, 1);
    const auto b = simulate_coupled(sys, plan, 4, 1);
    const auto c = simulate_coupled(sys, plan, 5, 1);
    std::ostringstream sa, sb;
    const std::vector<std::string> cols{"x1", "y1"};
    a.write_csv(sa, cols);
    b.write_csv(sb, cols);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_NE(a.state(a.size() - 1)[1], c.state(c.size() - 1)[1]);
    EXPECT_EQ(a.size(), 33u);
}

TEST(Coupled, StabilityLimitIsEnforced) {
    const auto sys = get_zoo("ou-smooth").system(1.0 / 64);
    EXPECT_THROW(simulate_coupled(sys, StepPlan{1.0 / 256, 1, 1.0}, 0, 0), ArgumentError);
}

TEST(EulerMaruyama, SingleStepMatchesFormula) {
    const auto sys = get_zoo("ou-smooth").system(0.1);
    const CoupledState s{{0.3}, {0.5}};
    const std::vector<double> dw1{0.02}, dw2{-0.01};
    const auto next = em_step_coupled(sys, s, 0.0, 0.01, dw1, dw2);
    const double b = std::tanh(0.5) - 0.3;
    EXPECT_NEAR(next.x[0], 0.3 + b * 0.01 / 0.1 + std::sqrt(2.0) * 0.02 / std::sqrt(0.1), 1e-15);
    EXPECT_NEAR(next.y[0], 0.5 + (std::sin(0.3) - 0.5) * 0.01 - 0.01, 1e-15);
}

TEST(EulerMaruyama, BlowUpCarriesTimeAndState) {
    const auto sys = get_zoo("ou-smooth").system(1.0);
    std::vector<double> x{1e13}, y{0.0};
    CoupledWorkspace ws(sys);
    const std::vector<double> dw{0.0};
    try {
        em_step_coupled(sys, x, y, 0.5, 0.1, dw, dw, ws);
        FAIL() << "expected BlowUpError";
    } catch (const BlowUpError& e) {
        EXPECT_DOUBLE_EQ(e.time(), 0.6);
        EXPECT_EQ(e.state().size(), 2u);
    }
}

// Additive noise: strong order 1. Coarse paths reuse summed fine increments,
// the finest level serves as reference.
TEST(EulerMaruyama, StrongOrderOneForAdditiveNoise) {
    const auto sys = get_zoo("ou-smooth").system(1.0);
    const std::size_t fine_log = 12;
    const std::size_t n_fine = std::size_t{1} << fine_log;
    const double h_fine = 1.0 / static_cast<double>(n_fine);
    const std::vector<std::size_t> levels{4, 5, 6, 7, 8};
    std::vector<double> sq(levels.size(), 0.0);
    const int paths = 200;
    CoupledWorkspace ws(sys);
    for (int p = 0; p < paths; ++p) {
        NoiseSource w1(8, p, Channel::W1, 1), w2(8, p, Channel::W2, 1);
        std::vector<double> d1(n_fine), d2(n_fine);
        for (std::size_t i = 0; i < n_fine; ++i) {
            d1[i] = w1.next_increment(h_fine)[0];
            d2[i] = w2.next_increment(h_fine)[0];
        }
        auto run = [&](std::size_t lg) {
            const std::size_t n = std::size_t{1} << lg, stride = n_fine / n;
            std::vector<double> x{0.0}, y{0.5};
            for (std::size_t k = 0; k < n; ++k) {
                double a = 0.0, b = 0.0;
                for (std::size_t j = k * stride; j < (k + 1) * stride; ++j) {
                    a += d1[j];
                    b += d2[j];
                }
                const std::vector<double> da{a}, db{b};
                em_step_coupled(sys, x, y, k / double(n), 1.0 / double(n), da, db, ws);
            }
            return std::array<double, 2>{x[0], y[0]};
        };
        const auto ref = run(fine_log);
        for (std::size_t l = 0; l < levels.size(); ++l) {
            const auto c = run(levels[l]);
            sq[l] += std::pow(c[0] - ref[0], 2) + std::pow(c[1] - ref[1], 2);
        }
    }
    std::vector<double> lh, le;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        lh.push_back(-static_cast<double>(levels[l]) * std::log(2.0));
        le.push_back(0.5 * std::log(sq[l] / paths));
    }
    const auto fit = least_squares(lh, le);
    EXPECT_NEAR(fit.slope, 1.0, 0.2);
}

TEST(Frozen, OrnsteinUhlenbeckMeanRelaxes) {
    const auto sys = get_zoo("ou-smooth").system();
    const std::vector<double> y{1.0};
    const auto frozen = sys.freeze(y).with_start({3.0});
    const StepPlan plan{0.01, 1, 1.0};
    RunningStats s;
    for (std::uint64_t p = 0; p < 4000; ++p) {
        const auto tr = simulate_frozen(frozen, plan, NoiseSource(2, p, Channel::W1, 1));
        s.push(tr.state(tr.size() - 1)[0]);
    }
    // Exact EM mean: m + (x0 - m)(1 - dt)^n.
    const double m = std::tanh(1.0);
    const double exact = m + (3.0 - m) * std::pow(0.99, 100);
    EXPECT_NEAR(s.mean(), exact, 3.5 * s.stderr_of_mean());
    // Variance of the EM chain: 2 dt sum (1 - dt)^(2k).
    const double q = 0.99 * 0.99;
    EXPECT_NEAR(s.variance(), 2.0 * 0.01 * (1.0 - std::pow(q, 100)) / (1.0 - q), 0.06);
}

TEST(Effective, DeterministicDriftFollowsEulerRecursion) {
    const EffectiveSystem eff(
        1, [](double, std::span<const double> y, std::span<double> out) { out[0] = -y[0]; },
        [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; },
        EffectiveSystem::Provenance::ClosedForm, "decay");
    const StepPlan plan{0.125, 1, 1.0};
    const auto tr = simulate_effective(eff, plan, NoiseSource(0, 0, Channel::W2, 1), std::vector<double>{2.0});
    for (std::size_t k = 0; k < tr.size(); ++k)
        EXPECT_NEAR(tr.state(k)[0], 2.0 * std::pow(0.875, static_cast<double>(k)), 1e-14);
}

TEST(Trajectory, RejectsNonIncreasingTimes) {
    Trajectory t(1, {});
    const std::vector<double> s{0.0};
    t.append(0.0, s);
    EXPECT_THROW(t.append(0.0, s), ArgumentError);
    EXPECT_THROW(t.append(1.0, std::vector<double>{0.0, 1.0}), ArgumentError);
}
