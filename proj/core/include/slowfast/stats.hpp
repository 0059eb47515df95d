#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace slowfast {

/// Streaming mean and variance (Welford). The mean of identical inputs is
/// exactly that input.
class RunningStats {
public:
    void push(double v) noexcept {
        ++n_;
        const double delta = v - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (v - mean_);
    }
    /// Chan et al. pairwise merge; merge order matters for the last bits.
    void merge(const RunningStats& other) noexcept;

    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    /// Unbiased sample variance; 0 for fewer than two samples.
    double variance() const noexcept {
        return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    }
    double stderr_of_mean() const noexcept;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Integrated autocorrelation time by Geyer's initial positive sequence,
/// clipped to [1/n, n]. About 1 for i.i.d. data.
double integrated_autocorrelation_time(std::span<const double> series);

/// n / tau with tau from integrated_autocorrelation_time, clipped to [1, n].
double effective_sample_size(std::span<const double> series);

double normal_cdf(double x) noexcept;

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against N(0, 1).
KsResult ks_test_standard_normal(std::vector<double> samples);

/// One-sample KS distance against an arbitrary CDF.
double ks_distance(std::vector<double> samples, double (*cdf)(double, const void*),
                   const void* ctx);

/// Asymptotic Kolmogorov survival function P(K > x).
double kolmogorov_survival(double x) noexcept;

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double residual_rms = 0.0;
};

/// Ordinary least squares of ys on xs. Requires at least two distinct xs.
LinearFit least_squares(std::span<const double> xs, std::span<const double> ys);

double median(std::vector<double> values);

/// Abscissae and weights of the n-point Gauss-Legendre rule on [-1, 1].
void gauss_legendre(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace slowfast
