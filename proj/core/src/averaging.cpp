#include "slowfast/averaging.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_y_match(std::span<const double> y, const InvariantMeasureEstimate& mu,
                   double tolerance) {
    if (mu.count() == 0) throw ArgumentError("invariant-measure estimate has no samples");
    if (y.size() != mu.y_param.size())
        throw ArgumentError("slow state dimension does not match the estimate");
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (std::abs(y[j] - mu.y_param[j]) > tolerance)
            throw ArgumentError("estimate was built at y=" + format_double(mu.y_param[j]) +
                                ", queried at y=" + format_double(y[j]));
    }
}

double autocorrelated_stderr(std::span<const double> series, double variance) {
    if (!(variance > 0.0)) return 0.0;
    const double tau = integrated_autocorrelation_time(series);
    return std::sqrt(variance * std::max(tau, 1.0) / static_cast<double>(series.size()));
}

std::uint64_t node_seed(std::uint64_t master, std::uint64_t tag, std::span<const std::int64_t> key) {
    std::uint64_t h = derive_seed(master, tag, key.size());
    for (auto k : key) h = derive_seed(h, static_cast<std::uint64_t>(k));
    return h;
}

}  // namespace

void InvariantMeasureEstimate::write_csv(std::ostream& os) const {
    CsvWriter csv(os);
    for (std::size_t j = 0; j < y_param.size(); ++j)
        csv.comment("y" + std::to_string(j + 1), format_double(y_param[j]));
    csv.comment("dt", format_double(config.dt));
    csv.comment("burn_in", format_double(config.burn_in));
    csv.comment("thinning", std::to_string(config.thinning));
    csv.comment("count", std::to_string(count()));
    csv.comment("ess", format_double(ess));
    if (warning) csv.comment("warning", *warning);
    std::vector<std::string> head;
    for (std::size_t i = 0; i < dim; ++i) head.push_back("x" + std::to_string(i + 1));
    csv.header(head);
    for (std::size_t i = 0; i < count(); ++i) csv.row(sample(i));
}

InvariantMeasureEstimate estimate_invariant_measure(const FrozenSystem& frozen,
                                                    const InvariantMeasureConfig& config,
                                                    NoiseSource noise) {
    if (!(config.dt > 0.0) || !(config.burn_in >= 0.0) || config.count == 0 ||
        config.thinning == 0)
        throw ArgumentError("invariant-measure config needs dt > 0, burn_in >= 0, count >= 1, "
                            "thinning >= 1");
    const std::size_t d1 = frozen.d1();
    if (noise.dim() != d1) throw ArgumentError("noise dimension does not match the frozen system");

    InvariantMeasureEstimate est;
    est.y_param = frozen.y_param();
    est.dim = d1;
    est.config = config;
    est.samples.reserve(config.count * d1);

    std::vector<double> x = frozen.x0();
    std::vector<double> b(d1), sig(d1 * d1), dw(d1);
    double t = 0.0;
    auto step = [&] {
        noise.next_increment(config.dt, dw);
        frozen.drift(x, b);
        frozen.diffusion(x, sig);
        for (std::size_t i = 0; i < d1; ++i) {
            double n = 0.0;
            for (std::size_t j = 0; j < d1; ++j) n += sig[i * d1 + j] * dw[j];
            x[i] += b[i] * config.dt + n;
        }
        t += config.dt;
        for (double v : x)
            if (!(std::abs(v) <= kBlowUpThreshold)) throw BlowUpError(t, x);
    };

    const auto burn_steps = static_cast<std::size_t>(std::ceil(config.burn_in / config.dt - 1e-9));
    for (std::size_t k = 0; k < burn_steps; ++k) step();
    for (std::size_t s = 0; s < config.count; ++s) {
        for (std::size_t k = 0; k < config.thinning; ++k) step();
        est.samples.insert(est.samples.end(), x.begin(), x.end());
    }

    std::vector<double> first(config.count);
    for (std::size_t s = 0; s < config.count; ++s) first[s] = est.samples[s * d1];
    est.ess = effective_sample_size(first);
    if (est.ess < 0.01 * static_cast<double>(config.count))
        est.warning = "slow mixing: ess " + format_double(est.ess) + " < 1% of " +
                      std::to_string(config.count) + " samples";
    return est;
}

AveragedValue averaged_drift(const CoefficientField& F, double t, std::span<const double> y,
                             const InvariantMeasureEstimate& mu, double y_tolerance) {
    check_y_match(y, mu, y_tolerance);
    const std::size_t n = mu.count();
    const std::size_t d = F.shape().size();
    std::vector<RunningStats> acc(d);
    std::vector<double> series(n * d);
    std::vector<double> out(d);
    for (std::size_t i = 0; i < n; ++i) {
        F.eval(t, mu.sample(i), y, out);
        for (std::size_t c = 0; c < d; ++c) {
            if (!std::isfinite(out[c]))
                throw EvaluationError("field " + F.name() + " is not finite on a sample");
            acc[c].push(out[c]);
            series[c * n + i] = out[c];
        }
    }
    AveragedValue r;
    r.mean.resize(d);
    r.stderrs.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        r.mean[c] = acc[c].mean();
        r.stderrs[c] = autocorrelated_stderr(std::span<const double>(series).subspan(c * n, n),
                                             acc[c].variance());
    }
    return r;
}

Matrix spd_sqrt(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw NumericalError("spd_sqrt needs a square matrix");
    const double norm = m.cwiseAbs().maxCoeff();
    if (!std::isfinite(norm)) throw NumericalError("spd_sqrt input is not finite");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * norm)
        throw NumericalError("spd_sqrt input is not symmetric");
    if (m.rows() == 1) {
        const double v = m(0, 0);
        if (v < -1e-10 * norm) throw NumericalError("spd_sqrt input is indefinite");
        return Matrix::Constant(1, 1, std::sqrt(std::max(v, 0.0)));
    }
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    Eigen::VectorXd lambda = solver.eigenvalues();
    if (lambda.minCoeff() < -1e-10 * norm) throw NumericalError("spd_sqrt input is indefinite");
    lambda = lambda.cwiseMax(0.0).cwiseSqrt();
    Matrix s = solver.eigenvectors() * lambda.asDiagonal() * solver.eigenvectors().transpose();
    s = 0.5 * (s + s.transpose()).eval();
    if ((s * s - m).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + norm))
        throw NumericalError("spd_sqrt reconstruction error above tolerance");
    return s;
}

Matrix averaged_diffusion(const CoefficientField& G, double t, std::span<const double> y,
                          const InvariantMeasureEstimate& mu, double y_tolerance) {
    check_y_match(y, mu, y_tolerance);
    const std::size_t d = G.shape().rows;
    if (G.shape().cols != d) throw ArgumentError("G must be square");
    std::vector<RunningStats> acc(d * d);
    std::vector<double> g(d * d), h(d * d);
    for (std::size_t i = 0; i < mu.count(); ++i) {
        G.eval(t, mu.sample(i), y, g);
        for (double v : g)
            if (!std::isfinite(v))
                throw EvaluationError("field " + G.name() + " is not finite on a sample");
        // G G^T (without the 1/2 of H)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += g[a * d + k] * g[b * d + k];
                h[a * d + b] = s;
            }
        for (std::size_t e = 0; e < d * d; ++e) acc[e].push(h[e]);
    }
    Matrix avg(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
            avg(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = acc[a * d + b].mean();
    return spd_sqrt(avg);
}

EffectiveSystem::EffectiveSystem(std::size_t d2, Function drift, Function diffusion,
                                 Provenance provenance, std::string description)
    : d2_(d2),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      provenance_(provenance),
      description_(std::move(description)) {
    if (d2_ == 0 || !drift_ || !diffusion_)
        throw ArgumentError("effective system needs a dimension and both coefficients");
}

// Node table for numerically averaged coefficients. Measures depend on y only;
// coefficient values additionally on t when the field reads time.
class AveragingCache {
public:
    AveragingCache(SlowFastSystem system, AveragingConfig config)
        : system_(std::move(system)), config_(config) {
        if (!(config_.cache_pitch > 0.0)) throw ArgumentError("cache pitch must be positive");
        average_drift_ = system_.F().arity().x;
        average_diffusion_ = system_.G().arity().x;
        time_axis_ = (average_drift_ && system_.F().arity().t) ||
                     (average_diffusion_ && system_.G().arity().t);
    }

    struct NodeValue {
        std::vector<double> drift;
        std::vector<double> drift_stderr;
        std::vector<double> diffusion;
    };

    void drift(double t, std::span<const double> y, std::span<double> out) {
        if (!average_drift_) {
            system_.F().eval(t, system_.x0(), y, out);
            return;
        }
        interpolate(t, y, out, [](const NodeValue& v) -> const std::vector<double>& {
            return v.drift;
        });
    }

    void diffusion(double t, std::span<const double> y, std::span<double> out) {
        const std::size_t d2 = system_.d2();
        if (!average_diffusion_) {
            std::vector<double> g(d2 * d2);
            system_.G().eval(t, system_.x0(), y, g);
            if (d2 == 1) {
                out[0] = std::abs(g[0]);
                return;
            }
            Eigen::Map<const RowMatrix> gm(g.data(), static_cast<Eigen::Index>(d2),
                                           static_cast<Eigen::Index>(d2));
            const Matrix s = spd_sqrt(gm * gm.transpose());
            for (std::size_t a = 0; a < d2; ++a)
                for (std::size_t b = 0; b < d2; ++b)
                    out[a * d2 + b] =
                        s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            return;
        }
        interpolate(t, y, out, [](const NodeValue& v) -> const std::vector<double>& {
            return v.diffusion;
        });
    }

private:
    using Key = std::vector<std::int64_t>;

    template <class Select>
    void interpolate(double t, std::span<const double> y, std::span<double> out, Select select) {
        const std::size_t d2 = system_.d2();
        const std::size_t axes = d2 + (time_axis_ ? 1 : 0);
        std::vector<std::int64_t> base(axes);
        std::vector<double> frac(axes);
        for (std::size_t a = 0; a < axes; ++a) {
            const double coord = (time_axis_ && a == 0) ? t : y[a - (time_axis_ ? 1 : 0)];
            const double u = coord / config_.cache_pitch;
            const double fl = std::floor(u);
            base[a] = static_cast<std::int64_t>(fl);
            frac[a] = u - fl;
        }
        std::fill(out.begin(), out.end(), 0.0);
        Key key(axes);
        for (std::size_t corner = 0; corner < (std::size_t{1} << axes); ++corner) {
            double w = 1.0;
            for (std::size_t a = 0; a < axes; ++a) {
                const bool upper = (corner >> a) & 1u;
                key[a] = base[a] + (upper ? 1 : 0);
                w *= upper ? frac[a] : 1.0 - frac[a];
            }
            if (w == 0.0) continue;
            const auto& value = select(node(key));
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * value[i];
        }
    }

    std::shared_ptr<const InvariantMeasureEstimate> measure(const Key& y_key) {
        {
            std::lock_guard lock(mutex_);
            if (auto it = measures_.find(y_key); it != measures_.end()) return it->second;
        }
        std::vector<double> y(y_key.size());
        for (std::size_t j = 0; j < y.size(); ++j)
            y[j] = static_cast<double>(y_key[j]) * config_.cache_pitch;
        NoiseSource noise(node_seed(config_.master_seed, 0x6d75, y_key), 0, Channel::W1,
                          system_.d1());
        auto est = std::make_shared<const InvariantMeasureEstimate>(
            estimate_invariant_measure(system_.freeze(y), config_.measure, noise));
        std::lock_guard lock(mutex_);
        return measures_.emplace(y_key, std::move(est)).first->second;
    }

    const NodeValue& node(const Key& key) {
        {
            std::lock_guard lock(mutex_);
            if (auto it = nodes_.find(key); it != nodes_.end()) return it->second;
        }
        const std::size_t d2 = system_.d2();
        const bool has_t = time_axis_;
        const double t = has_t ? static_cast<double>(key[0]) * config_.cache_pitch : 0.0;
        const Key y_key(key.begin() + (has_t ? 1 : 0), key.end());
        std::vector<double> y(d2);
        for (std::size_t j = 0; j < d2; ++j)
            y[j] = static_cast<double>(y_key[j]) * config_.cache_pitch;
        const auto mu = measure(y_key);
        NodeValue value;
        if (average_drift_) {
            auto avg = averaged_drift(system_.F(), t, y, *mu);
            value.drift = std::move(avg.mean);
            value.drift_stderr = std::move(avg.stderrs);
        }
        if (average_diffusion_) {
            const Matrix g = averaged_diffusion(system_.G(), t, y, *mu);
            value.diffusion.resize(d2 * d2);
            for (std::size_t a = 0; a < d2; ++a)
                for (std::size_t b = 0; b < d2; ++b)
                    value.diffusion[a * d2 + b] =
                        g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
        std::lock_guard lock(mutex_);
        // std::map never invalidates references, so the returned node stays valid.
        return nodes_.emplace(key, std::move(value)).first->second;
    }

    SlowFastSystem system_;
    AveragingConfig config_;
    bool average_drift_ = false;
    bool average_diffusion_ = false;
    bool time_axis_ = false;
    std::mutex mutex_;
    std::map<Key, std::shared_ptr<const InvariantMeasureEstimate>> measures_;
    std::map<Key, NodeValue> nodes_;
};

EffectiveSystem build_effective_system(const SlowFastSystem& system,
                                       const AveragingConfig& config) {
    auto cache = std::make_shared<AveragingCache>(system, config);
    return EffectiveSystem(
        system.d2(),
        [cache](double t, std::span<const double> y, std::span<double> out) {
            cache->drift(t, y, out);
        },
        [cache](double t, std::span<const double> y, std::span<double> out) {
            cache->diffusion(t, y, out);
        },
        EffectiveSystem::Provenance::NumericallyAveraged,
        system.id() + " (numerically averaged, pitch " + format_double(config.cache_pitch) +
            ", seed " + std::to_string(config.master_seed) + ")");
}

std::vector<EffectiveTableRow> effective_table(const SlowFastSystem& system,
                                               const AveragingConfig& config, double t,
                                               std::span<const std::vector<double>> ys) {
    std::vector<EffectiveTableRow> rows;
    rows.reserve(ys.size());
    const std::size_t d2 = system.d2();
    for (const auto& y : ys) {
        if (y.size() != d2) throw ArgumentError("table point has the wrong dimension");
        std::vector<std::int64_t> bits(d2);
        for (std::size_t j = 0; j < d2; ++j) bits[j] = std::bit_cast<std::int64_t>(y[j]);
        NoiseSource noise(node_seed(config.master_seed, 0x7461, bits), 0, Channel::W1,
                          system.d1());
        const auto mu = estimate_invariant_measure(system.freeze(y), config.measure, noise);
        EffectiveTableRow row;
        row.t = t;
        row.y = y;
        auto avg = averaged_drift(system.F(), t, y, mu);
        row.drift = std::move(avg.mean);
        row.drift_stderr = std::move(avg.stderrs);
        const Matrix g = averaged_diffusion(system.G(), t, y, mu);
        row.diffusion.resize(d2 * d2);
        for (std::size_t a = 0; a < d2; ++a)
            for (std::size_t b = 0; b < d2; ++b)
                row.diffusion[a * d2 + b] =
                    g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace slowfast
