#pragma once

// Domain types for slow-fast systems
//
//   dX = eps^-1 b(X,Y) dt + eps^-1/2 sigma(X,Y) dW1      (fast, d1 components)
//   dY = F(t,X,Y) dt + G(t,X,Y) dW2                      (slow, d2 components)
//
// plus sampling-based checks of the standing hypotheses: uniform ellipticity
// of a = sigma sigma^T / 2 and H = G G^T / 2, and the recurrence condition
// lim_{|x|->inf} sup_y <x, b(x,y)> = -inf.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slowfast {

/// Hölder exponents declared for a coefficient field.
struct HolderMeta {
    double delta = 1.0;  ///< exponent in the fast variable, (0, 1]
    double alpha = 1.0;  ///< exponent in the slow variable, (0, 2]
    std::optional<double> time_exponent;

    /// Throws ArgumentError when an exponent is out of range or not finite.
    void check() const;
};

/// Which of (t, x, y) a field reads.
struct Arity {
    bool t = false;
    bool x = false;
    bool y = false;
};

/// Output shape; vectors have cols == 1. Matrices are stored row-major.
struct Shape {
    std::size_t rows = 1;
    std::size_t cols = 1;

    std::size_t size() const noexcept { return rows * cols; }
    bool operator==(const Shape&) const = default;
};

using FieldFunction = std::function<void(double t, std::span<const double> x,
                                         std::span<const double> y, std::span<double> out)>;

/// A vector- or matrix-valued function of (t, x, y) with Hölder metadata and an
/// optional sup-norm bound (largest absolute entry). Evaluation must be reentrant.
class CoefficientField {
public:
    CoefficientField() = default;
    CoefficientField(std::string name, Arity arity, Shape shape, FieldFunction fn,
                     HolderMeta meta = {}, std::optional<double> bound = std::nullopt);

    /// Unchecked evaluation into a caller-provided buffer of size shape().size().
    void eval(double t, std::span<const double> x, std::span<const double> y,
              std::span<double> out) const {
        fn_(t, x, y, out);
    }

    /// Allocating evaluation; the result is checked for finiteness.
    std::vector<double> operator()(double t, std::span<const double> x,
                                   std::span<const double> y) const;

    const std::string& name() const noexcept { return name_; }
    const Arity& arity() const noexcept { return arity_; }
    const Shape& shape() const noexcept { return shape_; }
    const HolderMeta& meta() const noexcept { return meta_; }
    const std::optional<double>& bound() const noexcept { return bound_; }
    bool empty() const noexcept { return !fn_; }

    /// A field that always returns `value` (row-major, shape.size() entries).
    static CoefficientField constant(std::string name, Shape shape, std::vector<double> value,
                                     Arity arity = {});

private:
    std::string name_;
    Arity arity_;
    Shape shape_;
    FieldFunction fn_;
    HolderMeta meta_;
    std::optional<double> bound_;
};

/// out = m m^T / 2 for a row-major n x n matrix m.
void half_gram(std::span<const double> m, std::size_t n, std::span<double> out);

class FrozenSystem;

/// The coupled system with its timescale ratio and default initial state.
class SlowFastSystem {
public:
    SlowFastSystem(std::string id, std::size_t d1, std::size_t d2, CoefficientField b,
                   CoefficientField sigma, CoefficientField F, CoefficientField G,
                   double epsilon, bool g_depends_on_x, std::vector<double> x0 = {},
                   std::vector<double> y0 = {});

    const std::string& id() const noexcept { return id_; }
    std::size_t d1() const noexcept { return d1_; }
    std::size_t d2() const noexcept { return d2_; }
    const CoefficientField& b() const noexcept { return b_; }
    const CoefficientField& sigma() const noexcept { return sigma_; }
    const CoefficientField& F() const noexcept { return F_; }
    const CoefficientField& G() const noexcept { return G_; }
    double epsilon() const noexcept { return epsilon_; }
    bool g_depends_on_x() const noexcept { return g_depends_on_x_; }
    const std::vector<double>& x0() const noexcept { return x0_; }
    const std::vector<double>& y0() const noexcept { return y0_; }

    SlowFastSystem with_epsilon(double epsilon) const;
    SlowFastSystem with_initial_state(std::vector<double> x0, std::vector<double> y0) const;

    /// The fast equation with the slow variable held at y; starts from x0().
    FrozenSystem freeze(std::span<const double> y) const;

private:
    std::string id_;
    std::size_t d1_;
    std::size_t d2_;
    CoefficientField b_;
    CoefficientField sigma_;
    CoefficientField F_;
    CoefficientField G_;
    double epsilon_;
    bool g_depends_on_x_;
    std::vector<double> x0_;
    std::vector<double> y0_;
};

/// dX = b(X, y) dt + sigma(X, y) dW1 at fixed y (unit speed).
class FrozenSystem {
public:
    FrozenSystem(CoefficientField b, CoefficientField sigma, std::vector<double> y_param,
                 std::vector<double> x0);

    std::size_t d1() const noexcept { return d1_; }
    const std::vector<double>& y_param() const noexcept { return y_; }
    const std::vector<double>& x0() const noexcept { return x0_; }
    const CoefficientField& b() const noexcept { return b_; }
    const CoefficientField& sigma() const noexcept { return sigma_; }

    void drift(std::span<const double> x, std::span<double> out) const {
        b_.eval(0.0, x, y_, out);
    }
    void diffusion(std::span<const double> x, std::span<double> out) const {
        sigma_.eval(0.0, x, y_, out);
    }

    FrozenSystem with_start(std::vector<double> x0) const;

private:
    CoefficientField b_;
    CoefficientField sigma_;
    std::vector<double> y_;
    std::vector<double> x0_;
    std::size_t d1_;
};

/// Where validate_system samples the coefficients.
struct SamplingPlan {
    std::vector<double> box_lo;  ///< d1 + d2 lower corners, x axes first
    std::vector<double> box_hi;
    std::size_t points_per_axis = 64;
    std::vector<double> times{0.0};
    std::vector<double> probe_radii{10.0, 20.0, 40.0, 80.0};
    std::size_t probe_directions = 16;  ///< extra pseudo-random directions when d1 > 1
    double lambda_threshold = 1e6;

    /// Box [-half_width, half_width]^(d1+d2) with the other fields at their defaults.
    static SamplingPlan centered_box(std::size_t d1, std::size_t d2, double half_width);
};

struct Violation {
    std::string check;
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> y;
    std::string detail;
};

struct ValidationReport {
    std::string system_id;
    std::size_t points_checked = 0;
    double lambda_hat = 0.0;     ///< sup lambda_max / inf lambda_min of sigma sigma^T
    double hg_lambda_hat = 0.0;  ///< same for G G^T
    bool recurrence_ok = false;
    std::vector<double> probe_radii;
    std::vector<double> recurrence_sups;  ///< sup over |x| = r, y of <x, b(x,y)>
    std::vector<Violation> violations;
    std::size_t violation_count = 0;  ///< total, the list may be truncated

    bool passed() const noexcept { return violation_count == 0; }
    std::string to_text() const;
};

/// Samples a and H on the plan's grid and probes the recurrence condition.
/// Throws StructuralError on a non-symmetric a or H, EvaluationError on a
/// non-finite value or a broken declared bound, ArgumentError on a bad plan.
ValidationReport validate_system(const SlowFastSystem& system, const SamplingPlan& plan);

}  // namespace slowfast
