#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "slowfast/error.hpp"
#include "slowfast/mollify.hpp"

using namespace slowfast;

namespace {

// Integral of exp(-1/(1 - u^2)) over [-1, 1].
constexpr double kBumpIntegral = 0.4439938161680794;

// Composite midpoint rule, deliberately different from the library's quadrature.
template <class F>
double midpoint(double a, double b, std::size_t n, F f) {
    const double h = (b - a) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += f(a + (static_cast<double>(i) + 0.5) * h);
    return s * h;
}

CoefficientField y_field(std::function<double(double)> f, double alpha = 1.0) {
    return CoefficientField(
        "f", Arity{false, false, true}, Shape{1, 1},
        [f](double, std::span<const double>, std::span<const double> y, std::span<double> out) {
            out[0] = f(y[0]);
        },
        HolderMeta{1.0, alpha, std::nullopt});
}

CoefficientField ty_field(std::function<double(double, double)> f) {
    return CoefficientField(
        "f", Arity{true, false, true}, Shape{1, 1},
        [f](double t, std::span<const double>, std::span<const double> y, std::span<double> out) {
            out[0] = f(t, y[0]);
        },
        HolderMeta{1.0, 1.0, 1.0});
}

double eval1(const MollifiedField& m, double t, double y) {
    std::vector<double> out(1);
    const std::vector<double> yv{y};
    m.eval(t, {}, yv, out);
    return out[0];
}

// Second moment of the unit kernel on the line.
double unit_second_moment() {
    return midpoint(-1.0, 1.0, 200000,
                    [](double u) { return u * u * MollifierKernel::bump(u * u); }) /
           kBumpIntegral;
}

}  // namespace

TEST(Kernel, BumpValues) {
    EXPECT_DOUBLE_EQ(MollifierKernel::bump(0.0), std::exp(-1.0));
    EXPECT_EQ(MollifierKernel::bump(1.0), 0.0);
    EXPECT_EQ(MollifierKernel::bump(2.0), 0.0);
    const MollifierKernel k(1, 1);
    EXPECT_NEAR(k.rho1(0.0), std::exp(-1.0) / kBumpIntegral, 1e-12);
}

TEST(Kernel, ScaledKernelsHaveUnitMass) {
    for (std::size_t d : {1u, 2u, 3u}) {
        for (unsigned n : {1u, 4u, 64u}) {
            const MollifierKernel k(d, n);
            EXPECT_NEAR(k.mass1(), 1.0, 1e-10) << "d " << d << " n " << n;
            EXPECT_NEAR(k.mass2(), 1.0, 1e-9) << "d " << d << " n " << n;
        }
    }
}

TEST(Kernel, PlanarMassByCartesianMidpoint) {
    const unsigned n = 8;
    const MollifierKernel k(2, n);
    const double h = 1.0 / n;
    const double mass = midpoint(-h, h, 600, [&](double a) {
        return midpoint(-h, h, 600, [&](double b) {
            const std::vector<double> p{a, b};
            return k.rho2_scaled(p);
        });
    });
    EXPECT_NEAR(mass, 1.0, 1e-5);
}

TEST(Kernel, LineMassByMidpoint) {
    const MollifierKernel k(1, 5);
    EXPECT_NEAR(midpoint(-1.0 / 25, 1.0 / 25, 100000, [&](double r) { return k.rho1_scaled(r); }),
                1.0, 1e-8);
}

TEST(Kernel, RejectsZeroLevelAndDimension) {
    EXPECT_THROW(MollifierKernel(0, 4), ArgumentError);
    EXPECT_THROW(MollifierKernel(1, 0), ArgumentError);
}

TEST(Mollify, ConstantsAndLinearFunctionsAreReproduced) {
    const auto c = mollify_field(y_field([](double) { return 3.0; }), 4);
    const auto l = mollify_field(y_field([](double y) { return 2.0 * y + 1.0; }), 4);
    for (double y : {-1.3, 0.0, 0.77}) {
        EXPECT_EQ(eval1(c, 0.0, y), 3.0);
        EXPECT_NEAR(eval1(l, 0.0, y), 2.0 * y + 1.0, 1e-13);
    }
}

TEST(Mollify, QuadraticPicksUpKernelSecondMoment) {
    const double m2 = unit_second_moment();
    for (unsigned n : {2u, 8u}) {
        const auto q = mollify_field(y_field([](double y) { return y * y; }), n);
        for (double y : {-0.4, 1.1})
            EXPECT_NEAR(eval1(q, 0.0, y), y * y + m2 / (n * n), 1e-9) << "n " << n;
    }
}

TEST(Mollify, TimeAxisUsesParabolicScaling) {
    const double m2 = unit_second_moment();
    const unsigned n = 3;
    const auto q = mollify_field(ty_field([](double t, double) { return t * t; }), n);
    const double n4 = std::pow(n, 4);
    EXPECT_NEAR(eval1(q, 0.5, 0.0), 0.25 + m2 / n4, 1e-10);
}

TEST(Mollify, IsLinearInTheField) {
    auto f = [](double y) { return std::abs(y); };
    auto g = [](double y) { return std::sin(3.0 * y); };
    const auto mf = mollify_field(y_field(f), 6);
    const auto mg = mollify_field(y_field(g), 6);
    const auto mh = mollify_field(y_field([&](double y) { return 2.0 * f(y) - 0.5 * g(y); }), 6);
    for (double y : {-0.2, 0.05, 0.9})
        EXPECT_NEAR(eval1(mh, 0.0, y), 2.0 * eval1(mf, 0.0, y) - 0.5 * eval1(mg, 0.0, y), 1e-13);
}

TEST(Mollify, CommutesWithTranslation) {
    auto f = [](double y) { return std::min(std::sqrt(std::abs(y)), 1.0); };
    const double c = 0.37;
    const auto mf = mollify_field(y_field(f), 10);
    const auto ms = mollify_field(y_field([&](double y) { return f(y - c); }), 10);
    for (double y : {-0.5, 0.37, 0.4, 1.2}) EXPECT_NEAR(eval1(ms, 0.0, y), eval1(mf, 0.0, y - c), 1e-12);
}

TEST(Mollify, FramedEvaluationAgreesWithCentredFrame) {
    const auto m = mollify_field(y_field([](double y) { return std::abs(y); }), 16);
    const std::vector<double> frame{0.1}, y{0.1 + 1e-3};
    std::vector<double> out(1);
    m.eval_in_frame(0.0, {}, y, 0.0, frame, 0.0, 2e-3, out);
    EXPECT_NEAR(out[0], eval1(m, 0.0, y[0]), 1e-9);
}

TEST(Mollify, AsFieldKeepsShape) {
    const auto m = mollify_field(y_field([](double y) { return y; }), 4).as_field();
    EXPECT_EQ(m.shape(), (Shape{1, 1}));
    EXPECT_TRUE(m.arity().y);
    const std::vector<double> y{0.3};
    EXPECT_NEAR(m(0.0, {}, y)[0], 0.3, 1e-13);
}

class HolderScan : public ::testing::TestWithParam<double> {};

TEST_P(HolderScan, ErrorAndDerivativeSlopesMeetBounds) {
    const double alpha = GetParam();
    const auto f = y_field([alpha](double y) { return std::min(std::pow(std::abs(y), alpha), 1.0); },
                           alpha);
    const std::vector<unsigned> ns{4, 8, 16, 32, 64};
    const auto pts = scan_line(-2.0, 2.0, 41, 1, 1);
    const auto sup = sup_error_scan(f, ns, pts);
    EXPECT_TRUE(sup.passed) << "slope " << sup.fit.slope;
    EXPECT_LE(sup.fit.slope, -(alpha - 0.2));
    const auto der = derivative_growth_scan(f, ns, pts);
    ASSERT_TRUE(der.hessian_fit.has_value());
    EXPECT_LE(der.hessian_fit->slope, 2.0 - alpha + 0.2);
    EXPECT_TRUE(der.passed);
    EXPECT_FALSE(der.time_fit.has_value());
}

INSTANTIATE_TEST_SUITE_P(Alphas, HolderScan, ::testing::Values(0.5, 1.0));

TEST(Scan, SmoothFieldIsDegenerateAndNeedsThreeLevels) {
    const auto f = y_field([](double) { return 1.0; });
    const std::vector<unsigned> ns{4, 8, 16};
    const auto pts = scan_line(-1.0, 1.0, 5, 1, 1);
    const auto sup = sup_error_scan(f, ns, pts);
    EXPECT_TRUE(sup.degenerate);
    const std::vector<unsigned> two{4, 8};
    EXPECT_THROW(sup_error_scan(f, two, pts), ArgumentError);
}

TEST(Scan, WorkerCountDoesNotChangeResults) {
    const auto f = y_field([](double y) { return std::min(std::sqrt(std::abs(y)), 1.0); }, 0.5);
    const std::vector<unsigned> ns{4, 8, 16};
    const auto pts = scan_line(-2.0, 2.0, 21, 1, 1);
    const auto a = sup_error_scan(f, ns, pts, std::nullopt, {}, 1);
    const auto b = sup_error_scan(f, ns, pts, std::nullopt, {}, 3);
    EXPECT_EQ(a.values, b.values);
}
