#include "slowfast/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slowfast/error.hpp"

namespace slowfast {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr std::uint32_t kKindIncrement = 0;
constexpr std::uint32_t kKindBridge = 1;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Two standard normals from one Philox block.
inline void box_muller(const Philox4x32::Counter& r, double& z0, double& z1) {
    const std::uint64_t w0 = static_cast<std::uint64_t>(r[0]) | (static_cast<std::uint64_t>(r[1]) << 32);
    const std::uint64_t w1 = static_cast<std::uint64_t>(r[2]) | (static_cast<std::uint64_t>(r[3]) << 32);
    const double u1 = (static_cast<double>(w0 >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(w1 >> 11) * 0x1.0p-53;          // [0, 1)
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    z0 = radius * std::cos(angle);
    z1 = radius * std::sin(angle);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) noexcept {
    std::uint64_t h = mix64(master + 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ (a + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ (b + 0x85157af5ULL));
    h = mix64(h ^ (c + 0x2545f4914f6cdd1dULL));
    return h;
}

NoiseSource::NoiseSource(std::uint64_t master_seed, std::uint64_t path_index, Channel channel,
                         std::size_t dim)
    : seed_(master_seed), path_(path_index), channel_(channel), dim_(dim) {
    if (dim_ == 0) throw ArgumentError("noise dimension must be positive");
    if (path_ >= (std::uint64_t{1} << 52)) throw ArgumentError("path index out of range");
}

// The stream is a flat sequence of normals: normal g of a kind lives in
// Philox block g / 2, slot g % 2. Position k of an increment stream covers
// normals [k * dim, (k + 1) * dim).
void NoiseSource::fill(std::uint64_t first, std::uint32_t kind, std::span<double> out,
                       BlockCache& cache) const noexcept {
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                              static_cast<std::uint32_t>(seed_ >> 32)};
    const std::uint32_t c2 = static_cast<std::uint32_t>(path_);
    const std::uint32_t c3 = static_cast<std::uint32_t>((path_ >> 32) & 0xFFFFFu) |
                             (static_cast<std::uint32_t>(channel_) << 20) | (kind << 24);
    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::uint64_t g = first + j;
        const std::uint64_t blk = g >> 1;
        if (!cache.valid || cache.block != blk || cache.kind != kind) {
            const auto r = Philox4x32::block({static_cast<std::uint32_t>(blk),
                                              static_cast<std::uint32_t>(blk >> 32), c2, c3},
                                             key);
            box_muller(r, cache.z[0], cache.z[1]);
            cache.block = blk;
            cache.kind = kind;
            cache.valid = true;
        }
        out[j] = cache.z[g & 1];
    }
}

void NoiseSource::standard_normals(std::uint64_t position, std::span<double> out) const noexcept {
    BlockCache local;
    fill(position * dim_, kKindIncrement, out.first(std::min(out.size(), dim_)), local);
}

std::vector<double> NoiseSource::next_increment(double dt) {
    std::vector<double> out(dim_);
    next_increment(dt, out);
    return out;
}

void NoiseSource::next_increment(double dt, std::span<double> out) {
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ArgumentError("increment time step must be positive");
    if (out.size() != dim_) throw ArgumentError("increment buffer has the wrong dimension");
    fill(position_ * dim_, kKindIncrement, out, cache_);
    const double scale = std::sqrt(dt);
    for (auto& v : out) v *= scale;
    ++position_;
}

void NoiseSource::bridge(std::uint64_t macro_position, double macro_dt,
                         std::span<const double> total, std::size_t substeps,
                         std::span<double> out) const {
    if (substeps == 0) throw ArgumentError("bridge needs at least one substep");
    if (total.size() != dim_ || out.size() != substeps * dim_)
        throw ArgumentError("bridge buffers have the wrong dimension");
    if (substeps == 1) {
        std::copy(total.begin(), total.end(), out.begin());
        return;
    }
    if (substeps * dim_ >= (std::uint64_t{1} << 25) || macro_position >= (std::uint64_t{1} << 38))
        throw ArgumentError("bridge request exceeds the counter layout");
    // Sequential conditional sampling: piece s given the remainder over the
    // time still to cover. The last piece takes the remainder exactly.
    const double h = macro_dt / static_cast<double>(substeps);
    const std::uint64_t base = macro_position << 25;
    BlockCache cache;
    fill(base, kKindBridge, out.first((substeps - 1) * dim_), cache);
    double remaining_buf[8];
    std::vector<double> remaining_heap;
    std::span<double> remaining;
    if (dim_ <= 8) {
        remaining = std::span<double>(remaining_buf, dim_);
    } else {
        remaining_heap.assign(dim_, 0.0);
        remaining = remaining_heap;
    }
    std::copy(total.begin(), total.end(), remaining.begin());
    for (std::size_t s = 0; s + 1 < substeps; ++s) {
        const double left = static_cast<double>(substeps - s) * h;
        const double mean_w = h / left;
        const double sd = std::sqrt(h * (left - h) / left);
        for (std::size_t c = 0; c < dim_; ++c) {
            double& slot = out[s * dim_ + c];
            const double piece = remaining[c] * mean_w + sd * slot;
            slot = piece;
            remaining[c] -= piece;
        }
    }
    for (std::size_t c = 0; c < dim_; ++c) out[(substeps - 1) * dim_ + c] = remaining[c];
}

std::pair<NoiseSource, NoiseSource> coupled_pair(std::uint64_t master_seed,
                                                 std::uint64_t path_index, std::size_t d2) {
    NoiseSource s(master_seed, path_index, Channel::W2, d2);
    return {s, s};
}

}  // namespace slowfast
