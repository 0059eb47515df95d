#include "slowfast/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "slowfast/error.hpp"

namespace slowfast {

void RunningStats::merge(const RunningStats& other) noexcept {
    if (other.n_ == 0) return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(other.n_);
    const double delta = other.mean_ - mean_;
    const double n = na + nb;
    mean_ += delta * nb / n;
    m2_ += other.m2_ + delta * delta * na * nb / n;
    n_ += other.n_;
}

double RunningStats::stderr_of_mean() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

double integrated_autocorrelation_time(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 4) return 1.0;
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = series[i] - mean;

    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
        return s / static_cast<double>(n);
    };

    const double gamma0 = autocov(0);
    if (!(gamma0 > 0.0)) return 1.0;
    // Geyer: sum pairs Gamma_m = gamma_2m + gamma_2m+1 while positive and
    // non-increasing.
    double sum_pairs = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    const std::size_t max_lag = n / 2;
    for (std::size_t m = 0; 2 * m + 1 < max_lag; ++m) {
        const double g0 = (m == 0) ? gamma0 : autocov(2 * m);
        double pair = g0 + autocov(2 * m + 1);
        if (!(pair > 0.0)) break;
        pair = std::min(pair, prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
    }
    const double tau = (-gamma0 + 2.0 * sum_pairs) / gamma0;
    const double nd = static_cast<double>(n);
    return std::clamp(tau, 1.0 / nd, nd);
}

double effective_sample_size(std::span<const double> series) {
    const double n = static_cast<double>(series.size());
    if (series.empty()) return 0.0;
    return std::clamp(n / integrated_autocorrelation_time(series), 1.0, n);
}

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double kolmogorov_survival(double x) noexcept {
    if (x <= 0.0) return 1.0;
    if (x < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_distance(std::vector<double> samples, double (*cdf)(double, const void*),
                   const void* ctx) {
    if (samples.empty()) throw ArgumentError("KS test needs samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i], ctx);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    return d;
}

KsResult ks_test_standard_normal(std::vector<double> samples) {
    const double n = static_cast<double>(samples.size());
    const double d = ks_distance(
        std::move(samples), [](double x, const void*) { return normal_cdf(x); }, nullptr);
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

LinearFit least_squares(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ArgumentError("least squares needs matching inputs with at least two points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw ArgumentError("least squares needs two distinct abscissae");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    fit.residual_rms = std::sqrt(ss_res / n);
    return fit;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("median of an empty set");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                     values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        const double lower =
            *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

void gauss_legendre(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n == 0) throw ArgumentError("Gauss-Legendre rule needs at least one node");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    if (n == 1) {
        weights[0] = 2.0;
        return;
    }
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double kd = static_cast<double>(k);
                const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
                p0 = p1;
                p1 = p2;
            }
            dp = nd * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged root
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const double kd = static_cast<double>(k);
            const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
            p0 = p1;
            p1 = p2;
        }
        dp = nd * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) nodes[n / 2] = 0.0;
}

}  // namespace slowfast
