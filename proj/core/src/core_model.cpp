#include "slowfast/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

std::string point_string(double t, std::span<const double> x, std::span<const double> y) {
    std::ostringstream os;
    os << "(t=" << format_double(t) << ", x=[";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << format_double(x[i]);
    os << "], y=[";
    for (std::size_t i = 0; i < y.size(); ++i) os << (i ? "," : "") << format_double(y[i]);
    os << "])";
    return os.str();
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n == 1) return {0.5 * (lo + hi)};
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

void check_field(const CoefficientField& f, const char* what, Shape expected) {
    if (f.empty()) throw ArgumentError(std::string("coefficient field ") + what + " is empty");
    if (!(f.shape() == expected)) {
        std::ostringstream os;
        os << "coefficient field " << what << " has shape " << f.shape().rows << "x"
           << f.shape().cols << ", expected " << expected.rows << "x" << expected.cols;
        throw ArgumentError(os.str());
    }
    f.meta().check();
}

}  // namespace

void HolderMeta::check() const {
    if (!std::isfinite(delta) || delta <= 0.0 || delta > 1.0)
        throw ArgumentError("Hölder exponent delta must lie in (0, 1]");
    if (!std::isfinite(alpha) || alpha <= 0.0 || alpha > 2.0)
        throw ArgumentError("Hölder exponent alpha must lie in (0, 2]");
    if (time_exponent && (!std::isfinite(*time_exponent) || *time_exponent <= 0.0))
        throw ArgumentError("time Hölder exponent must be positive and finite");
}

CoefficientField::CoefficientField(std::string name, Arity arity, Shape shape, FieldFunction fn,
                                   HolderMeta meta, std::optional<double> bound)
    : name_(std::move(name)),
      arity_(arity),
      shape_(shape),
      fn_(std::move(fn)),
      meta_(meta),
      bound_(bound) {
    if (shape_.size() == 0) throw ArgumentError("field " + name_ + " has an empty output shape");
    if (bound_ && !(*bound_ >= 0.0)) throw ArgumentError("field " + name_ + " has a negative bound");
    meta_.check();
}

std::vector<double> CoefficientField::operator()(double t, std::span<const double> x,
                                                 std::span<const double> y) const {
    std::vector<double> out(shape_.size());
    fn_(t, x, y, out);
    if (!all_finite(out))
        throw EvaluationError("field " + name_ + " is not finite at " + point_string(t, x, y));
    return out;
}

CoefficientField CoefficientField::constant(std::string name, Shape shape,
                                            std::vector<double> value, Arity arity) {
    if (value.size() != shape.size())
        throw ArgumentError("constant field " + name + ": value size does not match shape");
    const double bound = value.empty() ? 0.0
                                       : std::abs(*std::max_element(
                                             value.begin(), value.end(), [](double a, double b) {
                                                 return std::abs(a) < std::abs(b);
                                             }));
    return CoefficientField(
        std::move(name), arity, shape,
        [value = std::move(value)](double, std::span<const double>, std::span<const double>,
                                   std::span<double> out) {
            std::copy(value.begin(), value.end(), out.begin());
        },
        HolderMeta{1.0, 2.0, std::nullopt}, bound);
}

void half_gram(std::span<const double> m, std::size_t n, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += m[i * n + k] * m[j * n + k];
            out[i * n + j] = 0.5 * s;
        }
    }
}

SlowFastSystem::SlowFastSystem(std::string id, std::size_t d1, std::size_t d2, CoefficientField b,
                               CoefficientField sigma, CoefficientField F, CoefficientField G,
                               double epsilon, bool g_depends_on_x, std::vector<double> x0,
                               std::vector<double> y0)
    : id_(std::move(id)),
      d1_(d1),
      d2_(d2),
      b_(std::move(b)),
      sigma_(std::move(sigma)),
      F_(std::move(F)),
      G_(std::move(G)),
      epsilon_(epsilon),
      g_depends_on_x_(g_depends_on_x),
      x0_(std::move(x0)),
      y0_(std::move(y0)) {
    if (d1_ == 0 || d2_ == 0) throw ArgumentError("system dimensions must be positive");
    if (!(epsilon_ > 0.0) || !std::isfinite(epsilon_))
        throw ArgumentError("epsilon must be positive and finite");
    check_field(b_, "b", {d1_, 1});
    check_field(sigma_, "sigma", {d1_, d1_});
    check_field(F_, "F", {d2_, 1});
    check_field(G_, "G", {d2_, d2_});
    if (b_.arity().t || sigma_.arity().t)
        throw ArgumentError("b and sigma must not depend on time");
    if (!g_depends_on_x_ && G_.arity().x)
        throw ArgumentError("G declares an x argument but g_depends_on_x is false");
    if (x0_.empty()) x0_.assign(d1_, 0.0);
    if (y0_.empty()) y0_.assign(d2_, 0.0);
    if (x0_.size() != d1_ || y0_.size() != d2_)
        throw ArgumentError("initial state dimensions do not match the system");
}

SlowFastSystem SlowFastSystem::with_epsilon(double epsilon) const {
    SlowFastSystem s = *this;
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw ArgumentError("epsilon must be positive and finite");
    s.epsilon_ = epsilon;
    return s;
}

SlowFastSystem SlowFastSystem::with_initial_state(std::vector<double> x0,
                                                  std::vector<double> y0) const {
    if (x0.size() != d1_ || y0.size() != d2_)
        throw ArgumentError("initial state dimensions do not match the system");
    SlowFastSystem s = *this;
    s.x0_ = std::move(x0);
    s.y0_ = std::move(y0);
    return s;
}

FrozenSystem SlowFastSystem::freeze(std::span<const double> y) const {
    if (y.size() != d2_) throw ArgumentError("frozen slow state has the wrong dimension");
    return FrozenSystem(b_, sigma_, std::vector<double>(y.begin(), y.end()), x0_);
}

FrozenSystem::FrozenSystem(CoefficientField b, CoefficientField sigma, std::vector<double> y_param,
                           std::vector<double> x0)
    : b_(std::move(b)),
      sigma_(std::move(sigma)),
      y_(std::move(y_param)),
      x0_(std::move(x0)),
      d1_(b_.shape().rows) {
    if (b_.empty() || sigma_.empty()) throw ArgumentError("frozen system needs b and sigma");
    if (sigma_.shape() != Shape{d1_, d1_}) throw ArgumentError("frozen sigma must be d1 x d1");
    if (x0_.empty()) x0_.assign(d1_, 0.0);
    if (x0_.size() != d1_) throw ArgumentError("frozen start has the wrong dimension");
}

FrozenSystem FrozenSystem::with_start(std::vector<double> x0) const {
    return FrozenSystem(b_, sigma_, y_, std::move(x0));
}

SamplingPlan SamplingPlan::centered_box(std::size_t d1, std::size_t d2, double half_width) {
    SamplingPlan plan;
    plan.box_lo.assign(d1 + d2, -half_width);
    plan.box_hi.assign(d1 + d2, half_width);
    return plan;
}

namespace {

struct EigenRange {
    double min = 0.0;
    double max = 0.0;
};

EigenRange symmetric_eigen_range(std::span<const double> m, std::size_t n, const char* what,
                                 double t, std::span<const double> x, std::span<const double> y) {
    Eigen::Map<const RowMatrix> mat(m.data(), static_cast<Eigen::Index>(n),
                                    static_cast<Eigen::Index>(n));
    const double scale = std::max(1.0, mat.cwiseAbs().maxCoeff());
    if ((mat - mat.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw StructuralError(std::string(what) + " is not symmetric at " + point_string(t, x, y));
    if (n == 1) return {m[0], m[0]};
    Eigen::SelfAdjointEigenSolver<RowMatrix> solver(mat, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw StructuralError(std::string("eigen decomposition of ") + what + " failed at " +
                              point_string(t, x, y));
    return {solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff()};
}

class ViolationSink {
public:
    explicit ViolationSink(ValidationReport& report) : report_(report) {}
    void add(std::string check, double t, std::span<const double> x, std::span<const double> y,
             std::string detail) {
        ++report_.violation_count;
        if (report_.violations.size() < kMaxStored)
            report_.violations.push_back({std::move(check), t, {x.begin(), x.end()},
                                          {y.begin(), y.end()}, std::move(detail)});
    }

private:
    static constexpr std::size_t kMaxStored = 1000;
    ValidationReport& report_;
};

void check_bound(const CoefficientField& f, std::span<const double> value, double t,
                 std::span<const double> x, std::span<const double> y) {
    if (!all_finite(value))
        throw EvaluationError("field " + f.name() + " is not finite at " + point_string(t, x, y));
    if (!f.bound()) return;
    for (double v : value) {
        if (std::abs(v) > *f.bound()) {
            throw EvaluationError("field " + f.name() + " exceeds its declared bound " +
                                  format_double(*f.bound()) + " at " + point_string(t, x, y) +
                                  " (value " + format_double(v) + ")");
        }
    }
}

}  // namespace

ValidationReport validate_system(const SlowFastSystem& system, const SamplingPlan& plan) {
    const std::size_t d1 = system.d1();
    const std::size_t d2 = system.d2();
    const std::size_t dims = d1 + d2;
    if (plan.box_lo.size() != dims || plan.box_hi.size() != dims)
        throw ArgumentError("sampling box must have d1 + d2 axes");
    if (plan.points_per_axis == 0 || plan.times.empty())
        throw ArgumentError("sampling grid is empty");
    for (std::size_t i = 0; i < dims; ++i)
        if (!(plan.box_lo[i] <= plan.box_hi[i])) throw ArgumentError("sampling box is inverted");
    if (plan.probe_radii.empty()) throw ArgumentError("recurrence probe needs radii");
    for (std::size_t i = 1; i < plan.probe_radii.size(); ++i)
        if (!(plan.probe_radii[i] > plan.probe_radii[i - 1]))
            throw ArgumentError("recurrence probe radii must be strictly increasing");

    ValidationReport report;
    report.system_id = system.id();
    report.probe_radii = plan.probe_radii;
    ViolationSink sink(report);

    std::vector<std::vector<double>> axes(dims);
    for (std::size_t i = 0; i < dims; ++i)
        axes[i] = linspace(plan.box_lo[i], plan.box_hi[i], plan.points_per_axis);

    std::vector<double> x(d1), y(d2), x_ref(d1);
    for (std::size_t i = 0; i < d1; ++i) x_ref[i] = axes[i].front();
    std::vector<double> sig(d1 * d1), a(d1 * d1), g(d2 * d2), g_ref(d2 * d2), h(d2 * d2);
    std::vector<double> bv(d1), fv(d2);

    double a_min = std::numeric_limits<double>::infinity(), a_max = 0.0;
    double h_min = std::numeric_limits<double>::infinity(), h_max = 0.0;

    std::size_t total = 1;
    for (std::size_t i = 0; i < dims; ++i) total *= axes[i].size();
    std::vector<std::size_t> idx(dims, 0);

    for (double t : plan.times) {
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rem = flat;
            for (std::size_t i = dims; i-- > 0;) {
                idx[i] = rem % axes[i].size();
                rem /= axes[i].size();
            }
            for (std::size_t i = 0; i < d1; ++i) x[i] = axes[i][idx[i]];
            for (std::size_t j = 0; j < d2; ++j) y[j] = axes[d1 + j][idx[d1 + j]];

            system.b().eval(t, x, y, bv);
            check_bound(system.b(), bv, t, x, y);
            system.F().eval(t, x, y, fv);
            check_bound(system.F(), fv, t, x, y);

            system.sigma().eval(t, x, y, sig);
            check_bound(system.sigma(), sig, t, x, y);
            half_gram(sig, d1, a);
            const auto ar = symmetric_eigen_range(a, d1, "a = sigma sigma^T / 2", t, x, y);
            a_min = std::min(a_min, ar.min);
            a_max = std::max(a_max, ar.max);
            if (!(ar.min > 0.0)) {
                sink.add("ellipticity-a", t, x, y,
                         "degenerate: smallest eigenvalue " + format_double(ar.min));
            } else if (ar.max / ar.min >= plan.lambda_threshold) {
                sink.add("ellipticity-a", t, x, y,
                         "ill-conditioned: ratio " + format_double(ar.max / ar.min));
            }

            system.G().eval(t, x, y, g);
            check_bound(system.G(), g, t, x, y);
            half_gram(g, d2, h);
            const auto hr = symmetric_eigen_range(h, d2, "H = G G^T / 2", t, x, y);
            h_min = std::min(h_min, hr.min);
            h_max = std::max(h_max, hr.max);
            if (!(hr.min > 0.0)) {
                sink.add("ellipticity-H", t, x, y,
                         "degenerate: smallest eigenvalue " + format_double(hr.min));
            } else if (hr.max / hr.min >= plan.lambda_threshold) {
                sink.add("ellipticity-H", t, x, y,
                         "ill-conditioned: ratio " + format_double(hr.max / hr.min));
            }

            if (!system.g_depends_on_x()) {
                system.G().eval(t, x_ref, y, g_ref);
                if (!std::equal(g.begin(), g.end(), g_ref.begin()))
                    sink.add("g-x-independence", t, x, y,
                             "G changes with x although g_depends_on_x is false");
            }
            ++report.points_checked;
        }
    }

    report.lambda_hat = a_min > 0.0 ? a_max / a_min : std::numeric_limits<double>::infinity();
    report.hg_lambda_hat = h_min > 0.0 ? h_max / h_min : std::numeric_limits<double>::infinity();
    if (report.lambda_hat >= plan.lambda_threshold && a_min > 0.0)
        sink.add("ellipticity-a", 0.0, {}, {}, "global ratio " + format_double(report.lambda_hat));
    if (report.hg_lambda_hat >= plan.lambda_threshold && h_min > 0.0)
        sink.add("ellipticity-H", 0.0, {}, {},
                 "global ratio " + format_double(report.hg_lambda_hat));

    // Recurrence probe: unit directions on the sphere, y over the grid's y nodes.
    std::vector<std::vector<double>> directions;
    for (std::size_t i = 0; i < d1; ++i) {
        for (double s : {1.0, -1.0}) {
            std::vector<double> e(d1, 0.0);
            e[i] = s;
            directions.push_back(std::move(e));
        }
    }
    if (d1 > 1) {
        std::uint64_t state = 0x5eed5eedULL;
        for (std::size_t k = 0; k < plan.probe_directions; ++k) {
            std::vector<double> v(d1);
            double norm = 0.0;
            for (auto& c : v) {
                c = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
                norm += c * c;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-3) continue;
            for (auto& c : v) c /= norm;
            directions.push_back(std::move(v));
        }
    }

    std::size_t y_total = 1;
    for (std::size_t j = 0; j < d2; ++j) y_total *= axes[d1 + j].size();
    const double t_probe = plan.times.front();
    for (double r : plan.probe_radii) {
        double sup = -std::numeric_limits<double>::infinity();
        for (std::size_t flat = 0; flat < y_total; ++flat) {
            std::size_t rem = flat;
            for (std::size_t j = d2; j-- > 0;) {
                y[j] = axes[d1 + j][rem % axes[d1 + j].size()];
                rem /= axes[d1 + j].size();
            }
            for (const auto& dir : directions) {
                for (std::size_t i = 0; i < d1; ++i) x[i] = r * dir[i];
                system.b().eval(t_probe, x, y, bv);
                if (!all_finite(bv))
                    throw EvaluationError("field b is not finite at " +
                                          point_string(t_probe, x, y));
                double dot = 0.0;
                for (std::size_t i = 0; i < d1; ++i) dot += x[i] * bv[i];
                sup = std::max(sup, dot);
            }
        }
        report.recurrence_sups.push_back(sup);
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < report.recurrence_sups.size(); ++i)
        if (!(report.recurrence_sups[i] < report.recurrence_sups[i - 1])) decreasing = false;
    report.recurrence_ok = decreasing && report.recurrence_sups.back() < 0.0;
    if (!report.recurrence_ok)
        sink.add("recurrence", t_probe, {}, {},
                 "sup_y <x, b(x,y)> is not decreasing to negative values along the probe radii");
    return report;
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    os << "system: " << system_id << '\n';
    os << "points_checked: " << points_checked << '\n';
    os << "lambda_hat: " << format_double(lambda_hat) << '\n';
    os << "hg_lambda_hat: " << format_double(hg_lambda_hat) << '\n';
    os << "recurrence_ok: " << (recurrence_ok ? "true" : "false") << '\n';
    for (std::size_t i = 0; i < recurrence_sups.size(); ++i)
        os << "recurrence_sup[r=" << format_double(probe_radii[i])
           << "]: " << format_double(recurrence_sups[i]) << '\n';
    os << "violation_count: " << violation_count << '\n';
    for (const auto& v : violations) {
        os << "violation: " << v.check << " at " << point_string(v.t, v.x, v.y) << ": " << v.detail
           << '\n';
    }
    os << "passed: " << (passed() ? "true" : "false") << '\n';
    return os.str();
}

}  // namespace slowfast
