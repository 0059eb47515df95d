#include "slowfast/mollify.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>

#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"
#include "slowfast/parallel.hpp"

namespace slowfast {

namespace {

// Composite Gauss-Legendre rule on [lo, hi].
void composite_rule(std::size_t order, std::size_t panels, double lo, double hi,
                    std::vector<double>& nodes, std::vector<double>& weights) {
    std::vector<double> gx, gw;
    gauss_legendre(order, gx, gw);
    nodes.clear();
    weights.clear();
    const double width = (hi - lo) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double a = lo + static_cast<double>(p) * width;
        for (std::size_t i = 0; i < order; ++i) {
            nodes.push_back(a + 0.5 * width * (gx[i] + 1.0));
            weights.push_back(0.5 * width * gw[i]);
        }
    }
}

double integrate(double lo, double hi, const auto& f, std::size_t order = 16,
                 std::size_t panels = 256) {
    std::vector<double> x, w;
    composite_rule(order, panels, lo, hi, x, w);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(x[i]);
    return s;
}

double sphere_area(std::size_t d) {
    const double h = 0.5 * static_cast<double>(d);
    return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

std::vector<double> sample_values(const CoefficientField& f, const ScanPoint& p) {
    std::vector<double> out(f.shape().size());
    f.eval(p.t, p.x, p.y, out);
    return out;
}

LinearFit fit_positive(std::span<const unsigned> ns, std::span<const double> values,
                       bool& degenerate) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < ns.size(); ++i)
        if (values[i] > 0.0) {
            xs.push_back(std::log(static_cast<double>(ns[i])));
            ys.push_back(std::log(values[i]));
        }
    degenerate = xs.size() < 2;
    if (degenerate) return {};
    return least_squares(xs, ys);
}

void check_levels(std::span<const unsigned> ns, std::span<const ScanPoint> points) {
    if (ns.size() < 3) throw ArgumentError("a scan needs at least 3 mollification levels");
    for (unsigned n : ns)
        if (n == 0) throw ArgumentError("mollification level must be at least 1");
    if (points.empty()) throw ArgumentError("scan grid is empty");
}

}  // namespace

double MollifierKernel::bump(double r2) noexcept {
    return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
}

MollifierKernel::MollifierKernel(std::size_t d2, unsigned n) : d2_(d2), n_(n) {
    if (d2 == 0) throw ArgumentError("kernel dimension must be positive");
    if (n == 0) throw ArgumentError("mollification level must be at least 1");
    c1_ = integrate(-1.0, 1.0, [](double u) { return bump(u * u); });
    if (d2 == 1) {
        cd_ = c1_;
    } else {
        const double dm1 = static_cast<double>(d2 - 1);
        cd_ = sphere_area(d2) *
              integrate(0.0, 1.0, [dm1](double r) { return bump(r * r) * std::pow(r, dm1); });
    }
    scale2_ = std::pow(static_cast<double>(n), static_cast<double>(d2)) / cd_;
}

double MollifierKernel::rho2(std::span<const double> u) const noexcept {
    double r2 = 0.0;
    for (double v : u) r2 += v * v;
    return bump(r2) / cd_;
}

double MollifierKernel::rho1_scaled(double r) const noexcept {
    const double n2 = static_cast<double>(n_) * static_cast<double>(n_);
    return n2 * rho1(n2 * r);
}

double MollifierKernel::rho2_scaled(std::span<const double> y) const noexcept {
    double r2 = 0.0;
    for (double v : y) r2 += v * v;
    return rho2_scaled_r2(r2);
}

double MollifierKernel::rho2_scaled_r2(double r2) const noexcept {
    const double n = static_cast<double>(n_);
    return scale2_ * bump(n * n * r2);
}

double MollifierKernel::mass1() const {
    const double n2 = static_cast<double>(n_) * static_cast<double>(n_);
    return integrate(-1.0 / n2, 1.0 / n2, [this](double r) { return rho1_scaled(r); }, 10, 100);
}

double MollifierKernel::mass2() const {
    const double h = 1.0 / static_cast<double>(n_);
    if (d2_ == 1) {
        return integrate(-h, h, [this](double r) { return rho2_scaled(std::span(&r, 1)); }, 10,
                         100);
    }
    const double dm1 = static_cast<double>(d2_ - 1);
    std::vector<double> point(d2_, 0.0);
    return sphere_area(d2_) * integrate(
                                  0.0, h,
                                  [&](double r) {
                                      point[0] = r;
                                      return rho2_scaled(point) * std::pow(r, dm1);
                                  },
                                  10, 100);
}

MollifiedField::MollifiedField(CoefficientField base, unsigned n, std::size_t d2,
                               MollifyQuadrature quadrature)
    : base_(std::move(base)), kernel_(d2, n) {
    if (base_.empty()) throw ArgumentError("cannot mollify an empty field");
    if (quadrature.order < 8) throw ArgumentError("quadrature order must be at least 8");
    if (quadrature.panels == 0) throw ArgumentError("quadrature needs at least one panel");
    composite_rule(quadrature.order, quadrature.panels, -1.0, 1.0, nodes_, weights_);
}

void MollifiedField::eval(double t, std::span<const double> x, std::span<const double> y,
                          std::span<double> out) const {
    eval_in_frame(t, x, y, t, y, 0.0, 0.0, out);
}

void MollifiedField::eval_in_frame(double t, std::span<const double> x,
                                   std::span<const double> y, double frame_t,
                                   std::span<const double> frame_y, double margin_t,
                                   double margin_y, std::span<double> out) const {
    const std::size_t d2 = y.size();
    const std::size_t dim = out.size();
    const bool conv_t = base_.arity().t;
    const bool conv_y = base_.arity().y && d2 > 0;
    const double n = static_cast<double>(kernel_.n());
    if (frame_y.size() != d2) throw ArgumentError("frame dimension does not match y");
    if (conv_y && d2 != kernel_.d2())
        throw ArgumentError("slow dimension does not match the mollifier kernel");

    auto checked = [&](std::span<const double> v, double tt, std::span<const double> yy) {
        for (double e : v) {
            const bool bad = !std::isfinite(e) || (base_.bound() && std::abs(e) > *base_.bound());
            if (bad) {
                std::string where = "t=" + format_double(tt) + ", y=(";
                for (std::size_t j = 0; j < yy.size(); ++j)
                    where += (j ? "," : "") + format_double(yy[j]);
                throw EvaluationError("field " + base_.name() +
                                      " is unbounded on the mollification support at " + where +
                                      ")");
            }
        }
    };

    std::vector<double> center(dim);
    base_.eval(frame_t, x, frame_y, center);
    checked(center, frame_t, frame_y);
    if (!conv_t && !conv_y) {
        std::copy(center.begin(), center.end(), out.begin());
        return;
    }

    const std::size_t m = nodes_.size();
    const double ry = 1.0 / n + margin_y;
    const double rt = 1.0 / (n * n) + margin_t;
    const std::size_t axes = (conv_t ? 1 : 0) + (conv_y ? d2 : 0);

    std::vector<std::size_t> idx(axes, 0);
    std::vector<double> w(d2), value(dim), acc(dim, 0.0);
    double mass = 0.0;
    for (;;) {
        double weight = 1.0;
        double tt = frame_t;
        std::size_t a = 0;
        if (conv_t) {
            tt = frame_t + rt * nodes_[idx[0]];
            weight *= rt * weights_[idx[0]] * kernel_.rho1_scaled(t - tt);
            a = 1;
        }
        if (conv_y && weight != 0.0) {
            double r2 = 0.0;
            for (std::size_t j = 0; j < d2; ++j) {
                w[j] = frame_y[j] + ry * nodes_[idx[a + j]];
                weight *= ry * weights_[idx[a + j]];
                const double dz = y[j] - w[j];
                r2 += dz * dz;
            }
            weight *= kernel_.rho2_scaled_r2(r2);
        } else if (!conv_y) {
            std::copy(y.begin(), y.end(), w.begin());
        }
        if (weight != 0.0) {
            base_.eval(tt, x, w, value);
            checked(value, tt, w);
            mass += weight;
            for (std::size_t c = 0; c < dim; ++c) acc[c] += weight * (value[c] - center[c]);
        }
        // Odometer over the tensor grid.
        std::size_t k = 0;
        while (k < axes && ++idx[k] == m) idx[k++] = 0;
        if (k == axes) break;
    }
    if (!(mass > 0.0)) throw NumericalError("mollification quadrature has no mass");
    for (std::size_t c = 0; c < dim; ++c) out[c] = center[c] + acc[c] / mass;
}

CoefficientField MollifiedField::as_field() const {
    auto self = std::make_shared<const MollifiedField>(*this);
    return CoefficientField(
        base_.name() + "_n" + std::to_string(n()), base_.arity(), base_.shape(),
        [self](double t, std::span<const double> x, std::span<const double> y,
               std::span<double> out) { self->eval(t, x, y, out); },
        base_.meta(), base_.bound());
}

MollifiedField mollify_field(const CoefficientField& field, unsigned n, std::size_t d2,
                             MollifyQuadrature quadrature) {
    return MollifiedField(field, n, d2, quadrature);
}

std::vector<ScanPoint> scan_line(double lo, double hi, std::size_t count, std::size_t d1,
                                 std::size_t d2, double t) {
    if (count == 0 || d2 == 0) throw ArgumentError("scan line needs points and a slow axis");
    std::vector<ScanPoint> pts(count);
    for (std::size_t i = 0; i < count; ++i) {
        pts[i].t = t;
        pts[i].x.assign(d1, 0.0);
        pts[i].y.assign(d2, 0.0);
        pts[i].y[0] = count == 1 ? 0.5 * (lo + hi)
                                 : lo + (hi - lo) * static_cast<double>(i) /
                                            static_cast<double>(count - 1);
    }
    return pts;
}

ScanResult sup_error_scan(const CoefficientField& field, std::span<const unsigned> ns,
                          std::span<const ScanPoint> points, std::optional<double> alpha,
                          MollifyQuadrature quadrature, std::size_t workers) {
    check_levels(ns, points);
    const double a = alpha.value_or(field.meta().alpha);
    ScanResult r;
    r.ns.assign(ns.begin(), ns.end());
    r.threshold = -(a - 0.2);
    for (unsigned n : ns) {
        const MollifiedField mf(field, n, points[0].y.size(), quadrature);
        std::vector<double> per_point(points.size(), 0.0);
        parallel_for(points.size(), workers, [&](std::size_t i) {
            const auto exact = sample_values(field, points[i]);
            std::vector<double> approx(exact.size());
            mf.eval(points[i].t, points[i].x, points[i].y, approx);
            for (std::size_t c = 0; c < exact.size(); ++c)
                per_point[i] = std::max(per_point[i], std::abs(approx[c] - exact[c]));
        });
        r.values.push_back(*std::max_element(per_point.begin(), per_point.end()));
    }
    r.fit = fit_positive(ns, r.values, r.degenerate);
    r.passed = r.degenerate || r.fit.slope <= r.threshold;
    return r;
}

DerivativeScanResult derivative_growth_scan(const CoefficientField& field,
                                            std::span<const unsigned> ns,
                                            std::span<const ScanPoint> points,
                                            std::optional<double> alpha,
                                            MollifyQuadrature quadrature, std::size_t workers) {
    check_levels(ns, points);
    const double a = alpha.value_or(field.meta().alpha);
    const bool has_t = field.arity().t;
    const bool has_y = field.arity().y;
    DerivativeScanResult r;
    r.ns.assign(ns.begin(), ns.end());
    r.threshold = (2.0 - a) + 0.2;
    const std::size_t dim = field.shape().size();

    for (unsigned n : ns) {
        const MollifiedField mf(field, n, points[0].y.size(), quadrature);
        const double k = 1e-3 / (static_cast<double>(n) * static_cast<double>(n));
        std::vector<double> tsup(points.size(), 0.0), hsup(points.size(), 0.0);
        parallel_for(points.size(), workers, [&](std::size_t i) {
            const ScanPoint& p = points[i];
            const std::size_t d2 = p.y.size();
            auto at = [&](double dt, std::span<const double> dy) {
                std::vector<double> y(p.y), out(dim);
                for (std::size_t j = 0; j < d2; ++j) y[j] += dy[j];
                mf.eval_in_frame(p.t + dt, p.x, y, p.t, p.y, 2.0 * k, 2.0 * k, out);
                return out;
            };
            std::vector<double> zero(d2, 0.0), shift(d2, 0.0);
            const auto f0 = at(0.0, zero);
            if (has_t) {
                const auto fp = at(k, zero);
                const auto fm = at(-k, zero);
                for (std::size_t c = 0; c < dim; ++c)
                    tsup[i] = std::max(tsup[i], std::abs(fp[c] - fm[c]) / (2.0 * k));
            }
            if (!has_y) return;
            for (std::size_t a1 = 0; a1 < d2; ++a1) {
                for (std::size_t a2 = a1; a2 < d2; ++a2) {
                    std::vector<double> h(dim);
                    if (a1 == a2) {
                        shift.assign(d2, 0.0);
                        shift[a1] = k;
                        const auto fp = at(0.0, shift);
                        shift[a1] = -k;
                        const auto fm = at(0.0, shift);
                        for (std::size_t c = 0; c < dim; ++c)
                            h[c] = (fp[c] - 2.0 * f0[c] + fm[c]) / (k * k);
                    } else {
                        std::vector<double> vals[4];
                        const double s1[4] = {k, k, -k, -k};
                        const double s2[4] = {k, -k, k, -k};
                        for (int q = 0; q < 4; ++q) {
                            shift.assign(d2, 0.0);
                            shift[a1] = s1[q];
                            shift[a2] = s2[q];
                            vals[q] = at(0.0, shift);
                        }
                        for (std::size_t c = 0; c < dim; ++c)
                            h[c] = (vals[0][c] - vals[1][c] - vals[2][c] + vals[3][c]) /
                                   (4.0 * k * k);
                    }
                    for (double v : h) hsup[i] = std::max(hsup[i], std::abs(v));
                }
            }
        });
        r.time_sups.push_back(*std::max_element(tsup.begin(), tsup.end()));
        r.hessian_sups.push_back(*std::max_element(hsup.begin(), hsup.end()));
    }

    bool deg_h = true, deg_t = true;
    if (has_y) {
        const LinearFit f = fit_positive(ns, r.hessian_sups, deg_h);
        if (!deg_h) r.hessian_fit = f;
    }
    if (has_t) {
        const LinearFit f = fit_positive(ns, r.time_sups, deg_t);
        if (!deg_t) r.time_fit = f;
    }
    r.degenerate = deg_h && deg_t;
    r.passed = (!r.hessian_fit || r.hessian_fit->slope <= r.threshold) &&
               (!r.time_fit || r.time_fit->slope <= r.threshold);
    return r;
}

void write_csv(std::ostream& os, const ScanResult& scan) {
    CsvWriter csv(os);
    csv.comment("slope", format_double(scan.fit.slope));
    csv.comment("residual_rms", format_double(scan.fit.residual_rms));
    csv.comment("threshold", format_double(scan.threshold));
    csv.comment("degenerate", scan.degenerate ? "true" : "false");
    csv.comment("passed", scan.passed ? "true" : "false");
    csv.header({"n", "sup_error"});
    for (std::size_t i = 0; i < scan.ns.size(); ++i)
        csv.row({static_cast<double>(scan.ns[i]), scan.values[i]});
}

void write_csv(std::ostream& os, const DerivativeScanResult& scan) {
    CsvWriter csv(os);
    if (scan.time_fit) csv.comment("time_slope", format_double(scan.time_fit->slope));
    if (scan.hessian_fit) csv.comment("hessian_slope", format_double(scan.hessian_fit->slope));
    csv.comment("threshold", format_double(scan.threshold));
    csv.comment("degenerate", scan.degenerate ? "true" : "false");
    csv.comment("passed", scan.passed ? "true" : "false");
    csv.header({"n", "sup_dt", "sup_d2y"});
    for (std::size_t i = 0; i < scan.ns.size(); ++i)
        csv.row({static_cast<double>(scan.ns[i]), scan.time_sups[i], scan.hessian_sups[i]});
}

}  // namespace slowfast
