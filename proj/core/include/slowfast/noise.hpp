#pragma once

// Counter-based Brownian increments.
//
// Every Gaussian is a pure function of (master_seed, path_index, channel,
// position), produced by Philox4x32-10 followed by Box-Muller, so paths can
// be generated in any order and on any number of workers.

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace slowfast {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) noexcept;
};

enum class Channel : std::uint32_t { W1 = 1, W2 = 2, Aux = 3 };

/// Mixes words into a new 64-bit seed (splitmix64 finaliser chain).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0) noexcept;

/// A replayable stream of d-dimensional N(0, dt I) increments.
///
/// Position k of the stream always maps to the same Gaussian vector, whatever
/// was drawn before. Copies are independent cursors over the same stream.
class NoiseSource {
public:
    NoiseSource(std::uint64_t master_seed, std::uint64_t path_index, Channel channel,
                std::size_t dim);

    /// Increment at the current position scaled by sqrt(dt); advances by one.
    /// Throws ArgumentError when dt <= 0.
    std::vector<double> next_increment(double dt);
    void next_increment(double dt, std::span<double> out);

    /// Standard normals for `position` without moving the cursor.
    void standard_normals(std::uint64_t position, std::span<double> out) const noexcept;

    /// Splits the macro increment `total` (over macro_dt, stored at macro
    /// position `macro_position`) into `substeps` Brownian-bridge pieces of
    /// equal length. out holds substeps * dim values; the pieces sum to total.
    void bridge(std::uint64_t macro_position, double macro_dt, std::span<const double> total,
                std::size_t substeps, std::span<double> out) const;

    std::uint64_t position() const noexcept { return position_; }
    void seek(std::uint64_t position) noexcept { position_ = position; }
    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t master_seed() const noexcept { return seed_; }
    std::uint64_t path_index() const noexcept { return path_; }
    Channel channel() const noexcept { return channel_; }

private:
    struct BlockCache {
        std::uint64_t block = 0;
        std::uint32_t kind = 0;
        bool valid = false;
        double z[2] = {0.0, 0.0};
    };

    void fill(std::uint64_t first, std::uint32_t kind, std::span<double> out,
              BlockCache& cache) const noexcept;

    std::uint64_t seed_;
    std::uint64_t path_;
    Channel channel_;
    std::size_t dim_;
    std::uint64_t position_ = 0;
    BlockCache cache_;
};

/// Two cursors over the same W2 stream: one for the coupled system, one for
/// the effective system.
std::pair<NoiseSource, NoiseSource> coupled_pair(std::uint64_t master_seed,
                                                 std::uint64_t path_index, std::size_t d2);

}  // namespace slowfast
