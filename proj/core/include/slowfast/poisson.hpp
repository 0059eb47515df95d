#pragma once

// Parameterised Poisson equation L0(x, y) u = -f at a frozen slow state, with
//   L0 = sum_ij a_ij d^2/dx_i dx_j + b . grad_x,   a = sigma sigma^T / 2,
// solved through u(x) = int_0^inf E f(X_t(x)) dt truncated at T_max. The
// solution exists only for centred data, int f dmu = 0.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slowfast/averaging.hpp"
#include "slowfast/core_model.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

struct CenteringResult {
    double estimate = 0.0;
    double stderr_estimate = 0.0;
    bool passed = false;  ///< |estimate| <= 3 stderr
};

/// Sample mean of the scalar field f over mu at mu's slow state.
CenteringResult check_centering(const CoefficientField& f, const InvariantMeasureEstimate& mu);

/// f minus its sample mean over mu.
CoefficientField center(const CoefficientField& f, const InvariantMeasureEstimate& mu);

class PoissonProblem {
public:
    /// Throws ContractError when f fails the centering check against mu, and
    /// ArgumentError when f is not scalar or mu belongs to another slow state.
    PoissonProblem(FrozenSystem frozen, CoefficientField f, const InvariantMeasureEstimate& mu);

    const FrozenSystem& frozen() const noexcept { return frozen_; }
    const CoefficientField& f() const noexcept { return f_; }
    const std::vector<double>& y_param() const noexcept { return frozen_.y_param(); }
    const CenteringResult& centering() const noexcept { return centering_; }

    double source(std::span<const double> x) const;

private:
    FrozenSystem frozen_;
    CoefficientField f_;
    CenteringResult centering_;
};

struct PoissonConfig {
    double t_max = 20.0;
    std::size_t n_paths = 4000;
    double dt = 1e-2;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
    std::size_t block_size = 64;
};

struct PoissonSolution {
    std::vector<std::vector<double>> points;
    std::vector<double> u;            ///< without the offset
    std::vector<double> stderrs;
    std::vector<double> tail;         ///< int_{T_max/2}^{T_max} E f dt
    std::vector<double> tail_stderrs;
    std::vector<std::string> warnings;
    double t_max = 0.0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    double offset = 0.0;  ///< additive constant; solutions are defined up to one

    double value(std::size_t i) const { return u[i] + offset; }
    PoissonSolution shifted(double c) const;
    /// Columns x1..xd, u, stderr, tail.
    void write_csv(std::ostream& os) const;
};

/// Monte Carlo Feynman-Kac solve. Path p uses the same W1 stream from every
/// evaluation point, so differences between nearby points carry little noise.
/// A point whose tail segment is significant beyond 5 of its standard errors
/// gets a truncation warning.
PoissonSolution solve_poisson_mc(const PoissonProblem& problem,
                                 std::span<const std::vector<double>> points,
                                 const PoissonConfig& config);

/// Every point residual_check needs around the centres: the centre, the axis
/// neighbours x +- h e_i and, for d1 > 1, the diagonal neighbours, with
/// h = rel_step * max(1, |x|).
std::vector<std::vector<double>> residual_stencil(std::span<const std::vector<double>> centers,
                                                  double rel_step = 1e-3);

struct ResidualReport {
    std::vector<std::vector<double>> centers;
    std::vector<double> residuals;  ///< |L0 u + f|
    std::vector<double> relative;   ///< residual / mean |f| over the centres
    double median_relative = 0.0;
    bool passed = false;  ///< median_relative <= 0.1
};

/// Applies L0 to the solution by second-order central differences. Throws
/// ArgumentError when a stencil point is missing from the solution.
ResidualReport residual_check(const PoissonProblem& problem, const PoissonSolution& solution,
                              std::span<const std::vector<double>> centers,
                              double rel_step = 1e-3);

struct GrowthReport {
    std::vector<double> radii;
    std::vector<double> magnitudes;
    double degree = 0.0;  ///< slope of log |u| against log |x|
    LinearFit fit;
    bool degenerate = false;  ///< u vanishes at every radius
};

/// Needs at least four distinct positive radii.
GrowthReport growth_probe(const PoissonSolution& solution);

struct SemigroupValue {
    double mean = 0.0;
    double stderr_mean = 0.0;
};

/// E f(X_t(x)) by Euler-Maruyama with step config.dt.
SemigroupValue semigroup_estimate(const FrozenSystem& frozen, const CoefficientField& f,
                                  std::span<const double> x, double t,
                                  const PoissonConfig& config);

struct YDerivativeProbe {
    std::vector<double> derivative;  ///< per point
    std::vector<double> stderrs;
};

/// d u / d y_axis by central differences of two solves at y +- h e_axis. The
/// data f is re-centred against an invariant-measure estimate at each shifted
/// slow state, and both solves share their noise streams.
YDerivativeProbe poisson_y_derivative(const SlowFastSystem& system, const CoefficientField& f,
                                      std::span<const double> y, std::size_t axis, double h,
                                      std::span<const std::vector<double>> points,
                                      const PoissonConfig& config,
                                      const InvariantMeasureConfig& measure);

}  // namespace slowfast
