#pragma once

// Invariant measure of the frozen equation and the averaged coefficients
//
//   Fbar(t,y) = E_mu^y F(t,X,y),   Gbar(t,y) = sqrt(E_mu^y G G^T(t,X,y)).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "slowfast/core_model.hpp"
#include "slowfast/noise.hpp"

namespace slowfast {

struct InvariantMeasureConfig {
    double dt = 1e-3;
    double burn_in = 10.0;  ///< time units discarded before harvesting
    std::size_t count = 200000;
    std::size_t thinning = 10;  ///< keep every thinning-th state
};

/// Thinned sample cloud from one long frozen trajectory.
struct InvariantMeasureEstimate {
    std::vector<double> y_param;
    std::size_t dim = 0;
    std::vector<double> samples;  ///< count x dim, row-major
    InvariantMeasureConfig config;
    double ess = 0.0;  ///< from the autocorrelation of the first coordinate
    std::optional<std::string> warning;

    std::size_t count() const noexcept { return dim ? samples.size() / dim : 0; }
    std::span<const double> sample(std::size_t i) const {
        return {samples.data() + i * dim, dim};
    }
    void write_csv(std::ostream& os) const;
};

/// Throws BlowUpError if the chain diverges. Attaches a mixing warning when
/// ess < 0.01 * count.
InvariantMeasureEstimate estimate_invariant_measure(const FrozenSystem& frozen,
                                                    const InvariantMeasureConfig& config,
                                                    NoiseSource noise);

struct AveragedValue {
    std::vector<double> mean;
    std::vector<double> stderrs;  ///< per component, autocorrelation-corrected
};

/// Sample mean of F(t, x_i, y) over mu. `y_tolerance` is the largest allowed
/// distance between y and mu.y_param (0 means exact match).
AveragedValue averaged_drift(const CoefficientField& F, double t, std::span<const double> y,
                             const InvariantMeasureEstimate& mu, double y_tolerance = 0.0);

using Matrix = Eigen::MatrixXd;

/// spd_sqrt of the sample mean of G G^T. Throws NumericalError when the
/// average is not positive semidefinite within tolerance.
Matrix averaged_diffusion(const CoefficientField& G, double t, std::span<const double> y,
                          const InvariantMeasureEstimate& mu, double y_tolerance = 0.0);

/// Symmetric PSD square root by eigendecomposition. Accepts asymmetry up to
/// 1e-10 ||M|| and eigenvalues down to -1e-10 ||M|| (clamped to zero).
Matrix spd_sqrt(const Matrix& m);

/// dY = Fbar(t,Y) dt + Gbar(t,Y) dW2.
class EffectiveSystem {
public:
    enum class Provenance { ClosedForm, NumericallyAveraged };
    using Function =
        std::function<void(double t, std::span<const double> y, std::span<double> out)>;

    EffectiveSystem(std::size_t d2, Function drift, Function diffusion, Provenance provenance,
                    std::string description);

    std::size_t d2() const noexcept { return d2_; }
    void drift(double t, std::span<const double> y, std::span<double> out) const {
        drift_(t, y, out);
    }
    void diffusion(double t, std::span<const double> y, std::span<double> out) const {
        diffusion_(t, y, out);
    }
    Provenance provenance() const noexcept { return provenance_; }
    const std::string& description() const noexcept { return description_; }

private:
    std::size_t d2_;
    Function drift_;
    Function diffusion_;
    Provenance provenance_;
    std::string description_;
};

struct AveragingConfig {
    InvariantMeasureConfig measure;
    double cache_pitch = 1e-2;  ///< node spacing in y (and in t for time-dependent fields)
    std::uint64_t master_seed = 0;
};

class AveragingCache;

/// Effective system whose coefficients come from invariant-measure estimates
/// at cache nodes, interpolated multilinearly between nodes. Components that
/// do not read x bypass the averaging. Node estimates are deterministic
/// functions of (master_seed, node), so the result never depends on the
/// order in which nodes are first queried.
EffectiveSystem build_effective_system(const SlowFastSystem& system,
                                       const AveragingConfig& config);

/// Handle for inspecting the node table of a numerically averaged system.
struct EffectiveTableRow {
    double t;
    std::vector<double> y;
    std::vector<double> drift;
    std::vector<double> drift_stderr;
    std::vector<double> diffusion;  ///< d2 x d2 row-major
};

/// Builds the table of averaged coefficients at the given y points (t fixed).
std::vector<EffectiveTableRow> effective_table(const SlowFastSystem& system,
                                               const AveragingConfig& config, double t,
                                               std::span<const std::vector<double>> ys);

}  // namespace slowfast
