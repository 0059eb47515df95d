#pragma once

// Mollification with anisotropic kernel scaling
//
//   f_n(t, x, y) = int int f(t - s, x, y - z) rho2_n(z) rho1_n(s) dz ds,
//   rho1_n(r) = n^2 rho1(n^2 r),   rho2_n(y) = n^d rho2(n y),
//
// where rho1 and rho2 are normalised copies of the bump exp(-1/(1 - |u|^2)).
// Fields that do not read t are convolved in y only.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "slowfast/core_model.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

/// Radial bump kernels on the line and on R^d, and their scaled versions.
class MollifierKernel {
public:
    MollifierKernel(std::size_t d2, unsigned n);

    std::size_t d2() const noexcept { return d2_; }
    unsigned n() const noexcept { return n_; }

    /// exp(-1/(1 - r2)) for r2 < 1, else 0.
    static double bump(double r2) noexcept;

    double rho1(double r) const noexcept { return bump(r * r) / c1_; }
    double rho2(std::span<const double> u) const noexcept;
    double rho1_scaled(double r) const noexcept;
    double rho2_scaled(std::span<const double> y) const noexcept;
    /// rho2_scaled as a function of |y|^2.
    double rho2_scaled_r2(double r2) const noexcept;

    /// Quadrature of the scaled kernels over their supports; both are 1 up to
    /// quadrature error.
    double mass1() const;
    double mass2() const;

private:
    std::size_t d2_;
    unsigned n_;
    double scale2_;  ///< n^d / cd
    double c1_;  ///< integral of the bump on [-1, 1]
    double cd_;  ///< integral of the bump over the unit ball of R^d2
};

/// Composite Gauss-Legendre rule per axis: `panels` panels of `order` nodes.
struct MollifyQuadrature {
    std::size_t order = 8;
    std::size_t panels = 64;
};

/// Convolution of a field with the scaled kernels, evaluated by tensor-product
/// quadrature. Quadrature nodes sit in the integration variable w = y - z (and
/// r = t - s) on a frame around a chosen centre, so evaluations at nearby
/// points reuse the same nodes and vary smoothly with the evaluation point.
class MollifiedField {
public:
    MollifiedField(CoefficientField base, unsigned n, std::size_t d2 = 1,
                   MollifyQuadrature quadrature = {});

    const CoefficientField& base() const noexcept { return base_; }
    const MollifierKernel& kernel() const noexcept { return kernel_; }
    unsigned n() const noexcept { return kernel_.n(); }

    /// Frame centred on (t, y).
    void eval(double t, std::span<const double> x, std::span<const double> y,
              std::span<double> out) const;

    /// Frame centred on (frame_t, frame_y), widened by `margin_t` and
    /// `margin_y` so every evaluation point within the margins is covered.
    void eval_in_frame(double t, std::span<const double> x, std::span<const double> y,
                       double frame_t, std::span<const double> frame_y, double margin_t,
                       double margin_y, std::span<double> out) const;

    /// The mollified field as a CoefficientField with the base's arity and shape.
    CoefficientField as_field() const;

private:
    CoefficientField base_;
    MollifierKernel kernel_;
    std::vector<double> nodes_;    ///< composite rule on [-1, 1]
    std::vector<double> weights_;
};

MollifiedField mollify_field(const CoefficientField& field, unsigned n, std::size_t d2 = 1,
                             MollifyQuadrature quadrature = {});

struct ScanPoint {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> y;
};

/// `count` evenly spaced points on [lo, hi] along the first slow axis, with
/// the remaining coordinates at zero.
std::vector<ScanPoint> scan_line(double lo, double hi, std::size_t count, std::size_t d1,
                                 std::size_t d2, double t = 0.0);

struct ScanResult {
    std::vector<unsigned> ns;
    std::vector<double> values;  ///< per n
    LinearFit fit;               ///< log value against log n
    double threshold = 0.0;      ///< slope bound used for the verdict
    bool degenerate = false;     ///< all values zero
    bool passed = false;
};

struct DerivativeScanResult {
    std::vector<unsigned> ns;
    std::vector<double> time_sups;     ///< sup |d/dt f_n|, zero for t-free fields
    std::vector<double> hessian_sups;  ///< sup of the largest |d^2 f_n / dy_i dy_j|
    std::optional<LinearFit> time_fit;
    std::optional<LinearFit> hessian_fit;
    double threshold = 0.0;
    bool degenerate = false;
    bool passed = false;
};

/// sup over the points of |f - f_n| per n. Passes when the fitted slope is at
/// most -(alpha - 0.2); alpha defaults to the field's declared exponent.
/// Throws ArgumentError for fewer than three levels.
ScanResult sup_error_scan(const CoefficientField& field, std::span<const unsigned> ns,
                          std::span<const ScanPoint> points,
                          std::optional<double> alpha = std::nullopt,
                          MollifyQuadrature quadrature = {}, std::size_t workers = 1);

/// Central differences with step 1e-3 / n^2. Passes when every fitted slope
/// is at most (2 - alpha) + 0.2.
DerivativeScanResult derivative_growth_scan(const CoefficientField& field,
                                            std::span<const unsigned> ns,
                                            std::span<const ScanPoint> points,
                                            std::optional<double> alpha = std::nullopt,
                                            MollifyQuadrature quadrature = {},
                                            std::size_t workers = 1);

void write_csv(std::ostream& os, const ScanResult& scan);
void write_csv(std::ostream& os, const DerivativeScanResult& scan);

}  // namespace slowfast
