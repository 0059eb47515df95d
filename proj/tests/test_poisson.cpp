#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "slowfast/error.hpp"
#include "slowfast/model_zoo.hpp"
#include "slowfast/poisson.hpp"

using namespace slowfast;

namespace {

// ou-smooth frozen at y: dX = (m - X) dt + sqrt(2) dW with m = tanh(y). Its
// Euler-Maruyama chain with step h from x is Gaussian with mean
// m + (x - m) q^k and variance 2h (1 - q^{2k}) / (1 - q^2), q = 1 - h.
struct DiscreteOu {
    double m;
    double h;
    double mean(double x, std::size_t k) const { return m + (x - m) * std::pow(1.0 - h, k); }
    double var(std::size_t k) const {
        const double q2 = (1.0 - h) * (1.0 - h);
        return 2.0 * h * (1.0 - std::pow(q2, k)) / (1.0 - q2);
    }
    double stationary_var() const { return 2.0 * h / (1.0 - (1.0 - h) * (1.0 - h)); }
};

// Trapezoid sum over the solver's grid of g(k), exactly as the estimator weights it.
template <class G>
double trapezoid(std::size_t steps, double h, G g) {
    double s = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) s += (k == 0 || k == steps ? 0.5 : 1.0) * g(k);
    return s * h;
}

CoefficientField x_field(const std::string& name, std::function<double(double)> f) {
    return CoefficientField(
        name, Arity{false, true, false}, Shape{1, 1},
        [f](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
            out[0] = f(x[0]);
        });
}

struct Fixture {
    double y = 0.5;
    double m = std::tanh(0.5);
    SlowFastSystem sys = get_zoo("ou-smooth").system();
    FrozenSystem frozen = sys.freeze(std::vector<double>{0.5});
    InvariantMeasureEstimate mu;

    Fixture() {
        InvariantMeasureConfig cfg;
        cfg.count = 20000;
        cfg.thinning = 100;
        cfg.dt = 1e-2;
        mu = estimate_invariant_measure(frozen, cfg, NoiseSource(5, 0, Channel::Aux, 1));
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

PoissonConfig small_config() {
    PoissonConfig c;
    c.t_max = 20.0;
    c.n_paths = 2000;
    c.dt = 1e-2;
    c.master_seed = 17;
    return c;
}

}  // namespace

TEST(Centering, SinIsNotCentredButItsCentredVersionIs) {
    auto& fx = fixture();
    const auto raw = x_field("sin", [](double x) { return std::sin(x); });
    EXPECT_FALSE(check_centering(raw, fx.mu).passed);
    EXPECT_THROW(PoissonProblem(fx.frozen, raw, fx.mu), ContractError);
    const auto centred = center(raw, fx.mu);
    const auto c = check_centering(centred, fx.mu);
    EXPECT_TRUE(c.passed);
    EXPECT_NEAR(c.estimate, 0.0, 1e-12);
}

TEST(PoissonProblem, RejectsVectorDataAndForeignMeasure) {
    auto& fx = fixture();
    const auto vec = CoefficientField::constant("v", Shape{2, 1}, {0.0, 0.0});
    EXPECT_THROW(PoissonProblem(fx.frozen, vec, fx.mu), ArgumentError);
    const auto other = fx.sys.freeze(std::vector<double>{0.1});
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    EXPECT_THROW(PoissonProblem(other, f, fx.mu), ArgumentError);
}

TEST(PoissonSolve, LinearSourceReproducesShiftedIdentity) {
    auto& fx = fixture();
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    std::vector<std::vector<double>> pts;
    for (double x : {-2.0, -0.5, 0.0, 1.0, 2.5}) pts.push_back({x});
    const auto cfg = small_config();
    const auto sol = solve_poisson_mc(problem, pts, cfg);
    const DiscreteOu ou{fx.m, cfg.dt};
    const std::size_t steps = 2000;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double x = pts[i][0];
        // The generator maps x - m to -(x - m), so u = x - m solves L0 u = -f.
        EXPECT_NEAR(sol.value(i), x - fx.m, 3.0 * sol.stderrs[i] + 0.01 * std::abs(x - fx.m));
        const double discrete = trapezoid(steps, cfg.dt, [&](std::size_t k) { return ou.mean(x, k) - fx.m; });
        EXPECT_NEAR(sol.value(i), discrete, 3.0 * sol.stderrs[i]);
    }
}

TEST(PoissonSolve, SinSourceMatchesSemigroupQuadrature) {
    auto& fx = fixture();
    const auto cfg = small_config();
    const DiscreteOu ou{fx.m, cfg.dt};
    const double c = std::sin(fx.m) * std::exp(-0.5 * ou.stationary_var());
    const auto f = x_field("sin-centred", [c](double x) { return std::sin(x) - c; });
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({-2.25 + 0.5 * i});
    const auto sol = solve_poisson_mc(problem, pts, cfg);
    const std::size_t steps = 2000;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double x = pts[i][0];
        const double oracle = trapezoid(steps, cfg.dt, [&](std::size_t k) {
            return std::sin(ou.mean(x, k)) * std::exp(-0.5 * ou.var(k)) - c;
        });
        EXPECT_NEAR(sol.value(i), oracle, 3.0 * sol.stderrs[i]) << "x " << x;
    }
    EXPECT_TRUE(sol.warnings.empty());
}

TEST(PoissonSolve, ShiftInvarianceIsExact) {
    auto& fx = fixture();
    const auto f = center(x_field("sin", [](double x) { return std::sin(x); }), fx.mu);
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    const std::vector<std::vector<double>> centres{{-1.0}, {0.3}, {1.4}};
    const auto pts = residual_stencil(centres);
    auto cfg = small_config();
    cfg.n_paths = 500;
    const auto sol = solve_poisson_mc(problem, pts, cfg);
    const auto shifted = sol.shifted(7.25);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_EQ(shifted.u[i], sol.u[i]);
        EXPECT_EQ(shifted.value(i), sol.value(i) + 7.25);
    }
    const auto r0 = residual_check(problem, sol, centres);
    const auto r1 = residual_check(problem, shifted, centres);
    EXPECT_EQ(r0.residuals, r1.residuals);
    EXPECT_EQ(r0.median_relative, r1.median_relative);
}

TEST(PoissonSolve, ResidualIsSmall) {
    auto& fx = fixture();
    const auto f = center(x_field("sin", [](double x) { return std::sin(x); }), fx.mu);
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    std::vector<std::vector<double>> centres;
    for (int i = 0; i < 10; ++i) centres.push_back({-2.25 + 0.5 * i});
    const auto sol = solve_poisson_mc(problem, residual_stencil(centres), small_config());
    const auto report = residual_check(problem, sol, centres);
    EXPECT_LE(report.median_relative, 0.1);
    EXPECT_TRUE(report.passed);
}

TEST(PoissonSolve, ResidualCheckNeedsStencilPoints) {
    auto& fx = fixture();
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    const std::vector<std::vector<double>> pts{{0.0}};
    auto cfg = small_config();
    cfg.n_paths = 10;
    const auto sol = solve_poisson_mc(problem, pts, cfg);
    EXPECT_THROW(residual_check(problem, sol, pts), ArgumentError);
}

TEST(PoissonSolve, StandardErrorShrinksLikeInverseRoot) {
    auto& fx = fixture();
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    const std::vector<std::vector<double>> pts{{1.0}};
    auto cfg = small_config();
    cfg.t_max = 10.0;
    cfg.n_paths = 500;
    const auto a = solve_poisson_mc(problem, pts, cfg);
    cfg.n_paths = 2000;
    const auto b = solve_poisson_mc(problem, pts, cfg);
    EXPECT_NEAR(a.stderrs[0] / b.stderrs[0], 2.0, 0.3);
}

TEST(PoissonSolve, EarlyTruncationIsFlagged) {
    // g passes the centering check against a cloud shifted by -0.5, but under
    // the true law E g(X_t) settles at 0.5, so the tail integral is about 5.
    auto& fx = fixture();
    const auto g = x_field("biased", [&](double x) { return x - fx.m + 0.5; });
    InvariantMeasureEstimate shifted = fx.mu;
    for (auto& s : shifted.samples) s -= 0.5;
    const PoissonProblem biased(fx.frozen, g, shifted);
    auto cfg = small_config();
    cfg.n_paths = 200;
    const auto sol = solve_poisson_mc(biased, std::vector<std::vector<double>>{{0.0}}, cfg);
    EXPECT_FALSE(sol.warnings.empty());
    EXPECT_NEAR(sol.tail[0], 5.0, 0.5);
}

TEST(PoissonSolve, WorkerCountDoesNotChangeOutput) {
    auto& fx = fixture();
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    auto cfg = small_config();
    cfg.n_paths = 300;
    cfg.t_max = 4.0;
    const auto a = solve_poisson_mc(problem, pts, cfg);
    cfg.workers = 4;
    const auto b = solve_poisson_mc(problem, pts, cfg);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.stderrs, b.stderrs);
}

TEST(Semigroup, MatchesGaussianFormula) {
    auto& fx = fixture();
    const auto f = x_field("sin", [](double x) { return std::sin(x); });
    auto cfg = small_config();
    cfg.n_paths = 20000;
    const std::vector<double> x{1.5};
    const double t = 0.5;
    const auto v = semigroup_estimate(fx.frozen, f, x, t, cfg);
    const DiscreteOu ou{fx.m, cfg.dt};
    const double exact = std::sin(ou.mean(1.5, 50)) * std::exp(-0.5 * ou.var(50));
    EXPECT_NEAR(v.mean, exact, 3.0 * v.stderr_mean);
}

TEST(Semigroup, ComposesOverTime) {
    // P_{s+t} f(x) = E P_t f(X_s(x)); for linear f both sides have closed form.
    auto& fx = fixture();
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    auto cfg = small_config();
    cfg.n_paths = 4000;
    const std::vector<double> x{2.0};
    const auto whole = semigroup_estimate(fx.frozen, f, x, 1.0, cfg);
    const DiscreteOu ou{fx.m, cfg.dt};
    EXPECT_NEAR(whole.mean, ou.mean(2.0, 100) - fx.m, 3.0 * whole.stderr_mean);
    EXPECT_NEAR(ou.mean(ou.mean(2.0, 40), 60), ou.mean(2.0, 100), 1e-12);
}

TEST(Growth, LinearSolutionHasDegreeOne) {
    auto& fx = fixture();
    const auto f = x_field("lin", [&](double x) { return x - fx.m; });
    const PoissonProblem problem(fx.frozen, f, fx.mu);
    std::vector<std::vector<double>> pts;
    for (double r : {10.0, 20.0, 40.0, 80.0}) pts.push_back({r});
    auto cfg = small_config();
    cfg.n_paths = 400;
    const auto sol = solve_poisson_mc(problem, pts, cfg);
    const auto g = growth_probe(sol);
    EXPECT_FALSE(g.degenerate);
    EXPECT_NEAR(g.degree, 1.0, 0.05);
}

TEST(YDerivative, MatchesClosedFormForLinearSource) {
    // f = x - tanh(y) gives u = x - tanh(y), so du/dy = -(1 - tanh^2 y).
    const auto sys = get_zoo("ou-smooth").system();
    const CoefficientField f(
        "lin", Arity{false, true, true}, Shape{1, 1},
        [](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
            out[0] = x[0] - std::tanh(y[0]);
        });
    auto cfg = small_config();
    cfg.n_paths = 2000;
    InvariantMeasureConfig mcfg;
    mcfg.count = 5000;
    mcfg.thinning = 100;
    mcfg.dt = 1e-2;
    const std::vector<double> y{0.3};
    const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    const auto d = poisson_y_derivative(sys, f, y, 0, 0.05, pts, cfg, mcfg);
    const double exact = -(1.0 - std::tanh(0.3) * std::tanh(0.3));
    for (std::size_t i = 0; i < pts.size(); ++i)
        EXPECT_NEAR(d.derivative[i], exact, 3.0 * d.stderrs[i] + 0.02);
}
