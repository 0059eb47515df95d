#pragma once

// Euler-Maruyama integration of the coupled, frozen and effective equations.
//
// The coupled scheme advances both components on a micro grid of step
// macro_dt / micro_substeps and records states on the macro grid only. W2 is
// drawn per macro step and refined onto the micro grid by a Brownian bridge,
// so an effective path driven by the same W2 stream sees exactly the macro
// increments the coupled path integrated over.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slowfast/core_model.hpp"
#include "slowfast/noise.hpp"

namespace slowfast {

class EffectiveSystem;

inline constexpr double kDefaultStabilityFactor = 0.05;
inline constexpr double kBlowUpThreshold = 1e12;

struct StepPlan {
    double macro_dt = 1.0 / 256.0;
    std::size_t micro_substeps = 1;
    double horizon = 1.0;

    double micro_dt() const noexcept { return macro_dt / static_cast<double>(micro_substeps); }
    /// horizon / macro_dt; throws ArgumentError unless the ratio is an integer.
    std::size_t macro_steps() const;
    void check() const;
    /// Additionally requires micro_dt <= stability_factor * epsilon.
    void check_coupled(double epsilon, double stability_factor = kDefaultStabilityFactor) const;

    /// Smallest micro_substeps with micro_dt <= stability_factor * epsilon.
    static StepPlan for_epsilon(double macro_dt, double horizon, double epsilon,
                                double stability_factor = kDefaultStabilityFactor);
};

struct TrajectoryMeta {
    std::string system_id;
    std::string kind;  ///< "coupled", "frozen" or "effective"
    double dt = 0.0;   ///< integration step
    std::uint64_t master_seed = 0;
    std::uint64_t path_index = 0;
};

/// States on a strictly increasing time grid, stored row by row.
class Trajectory {
public:
    Trajectory(std::size_t width, TrajectoryMeta meta) : width_(width), meta_(std::move(meta)) {}

    void append(double t, std::span<const double> state);

    std::size_t size() const noexcept { return times_.size(); }
    std::size_t width() const noexcept { return width_; }
    const std::vector<double>& times() const noexcept { return times_; }
    std::span<const double> state(std::size_t i) const {
        return {states_.data() + i * width_, width_};
    }
    const TrajectoryMeta& meta() const noexcept { return meta_; }

    /// CSV with `# key: value` metadata lines, header "t,<columns...>".
    void write_csv(std::ostream& os, std::span<const std::string> columns) const;

private:
    std::size_t width_;
    TrajectoryMeta meta_;
    std::vector<double> times_;
    std::vector<double> states_;
};

/// Scratch buffers for em_step_coupled so the hot loop never allocates.
struct CoupledWorkspace {
    explicit CoupledWorkspace(const SlowFastSystem& s)
        : b(s.d1()), sigma(s.d1() * s.d1()), F(s.d2()), G(s.d2() * s.d2()) {}
    std::vector<double> b, sigma, F, G;
};

/// One Euler-Maruyama step of the coupled system, in place:
///   x += eps^-1 b dt + eps^-1/2 sigma dW1,  y += F dt + G dW2.
/// Throws BlowUpError(t + dt, state) on a non-finite or oversized component.
void em_step_coupled(const SlowFastSystem& system, std::span<double> x, std::span<double> y,
                     double t, double micro_dt, std::span<const double> dw1,
                     std::span<const double> dw2, CoupledWorkspace& ws);

struct CoupledState {
    std::vector<double> x;
    std::vector<double> y;
};
CoupledState em_step_coupled(const SlowFastSystem& system, const CoupledState& state, double t,
                             double micro_dt, std::span<const double> dw1,
                             std::span<const double> dw2);

/// Called after every macro step (and once for the initial state with k = 0).
using CoupledObserver = std::function<void(std::size_t k, double t, std::span<const double> x,
                                           std::span<const double> y)>;
using SlowObserver = std::function<void(std::size_t k, double t, std::span<const double> y)>;

/// Drives the coupled system from its initial state with explicit streams.
void integrate_coupled(const SlowFastSystem& system, const StepPlan& plan, NoiseSource& w1,
                       NoiseSource& w2, const CoupledObserver& observe,
                       double stability_factor = kDefaultStabilityFactor);

/// Coupled path `path_index`: W1 and W2 streams of that path under master_seed.
Trajectory simulate_coupled(const SlowFastSystem& system, const StepPlan& plan,
                            std::uint64_t path_index, std::uint64_t master_seed,
                            double stability_factor = kDefaultStabilityFactor);

/// The frozen equation at unit speed, starting from frozen.x0().
Trajectory simulate_frozen(const FrozenSystem& frozen, const StepPlan& plan, NoiseSource noise);

/// Effective equation on the macro grid driven by macro increments of noise_w2.
void integrate_effective(const EffectiveSystem& effective, const StepPlan& plan,
                         NoiseSource& noise_w2, std::span<const double> y0,
                         const SlowObserver& observe);
Trajectory simulate_effective(const EffectiveSystem& effective, const StepPlan& plan,
                              NoiseSource noise_w2, std::span<const double> y0);

}  // namespace slowfast
