#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "slowfast/error.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/stats.hpp"

using namespace slowfast;

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswerZero) {
    const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                       {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
    const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                       {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(DeriveSeed, DistinguishesEveryWord) {
    const auto s = derive_seed(1, 2, 3, 4);
    EXPECT_EQ(s, derive_seed(1, 2, 3, 4));
    EXPECT_NE(s, derive_seed(0, 2, 3, 4));
    EXPECT_NE(s, derive_seed(1, 0, 3, 4));
    EXPECT_NE(s, derive_seed(1, 2, 0, 4));
    EXPECT_NE(s, derive_seed(1, 2, 3, 0));
}

TEST(NoiseSource, IncrementsAreStandardNormalScaled) {
    NoiseSource w(11, 0, Channel::W1, 1);
    const double dt = 0.25;
    std::vector<double> z;
    for (int i = 0; i < 20000; ++i) z.push_back(w.next_increment(dt)[0] / std::sqrt(dt));
    const auto ks = ks_test_standard_normal(z);
    EXPECT_GT(ks.p_value, 1e-3) << "KS statistic " << ks.statistic;
}

TEST(NoiseSource, EveryComponentPassesKs) {
    NoiseSource w(12, 5, Channel::W2, 3);
    std::vector<std::vector<double>> comps(3);
    for (int i = 0; i < 10000; ++i) {
        const auto inc = w.next_increment(1.0);
        for (int c = 0; c < 3; ++c) comps[c].push_back(inc[c]);
    }
    for (auto& c : comps) EXPECT_GT(ks_test_standard_normal(c).p_value, 1e-3);
}

TEST(NoiseSource, ReplayIsPositionAddressed) {
    NoiseSource a(3, 7, Channel::W1, 2);
    std::vector<std::vector<double>> first;
    for (int i = 0; i < 10; ++i) first.push_back(a.next_increment(0.1));
    NoiseSource b(3, 7, Channel::W1, 2);
    b.seek(6);
    EXPECT_EQ(b.next_increment(0.1), first[6]);
    b.seek(2);
    EXPECT_EQ(b.next_increment(0.1), first[2]);
    NoiseSource copy = a;
    EXPECT_EQ(copy.next_increment(0.1), a.next_increment(0.1));
}

TEST(NoiseSource, ChannelsAndPathsAreUncorrelated) {
    NoiseSource w1(5, 0, Channel::W1, 1), w2(5, 0, Channel::W2, 1), other(5, 1, Channel::W1, 1);
    const int n = 40000;
    double s12 = 0.0, s1o = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = w1.next_increment(1.0)[0];
        s12 += a * w2.next_increment(1.0)[0];
        s1o += a * other.next_increment(1.0)[0];
    }
    // Sample correlation of independent standard normals has sd 1/sqrt(n).
    EXPECT_LT(std::abs(s12 / n), 4.0 / std::sqrt(n));
    EXPECT_LT(std::abs(s1o / n), 4.0 / std::sqrt(n));
}

TEST(NoiseSource, RejectsNonPositiveStep) {
    NoiseSource w(1, 0, Channel::W1, 1);
    EXPECT_THROW(w.next_increment(0.0), ArgumentError);
    EXPECT_THROW(w.next_increment(-1.0), ArgumentError);
}

TEST(Bridge, PiecesSumToTotal) {
    NoiseSource w(9, 2, Channel::W2, 2);
    const std::vector<double> total{0.3, -0.7};
    for (std::size_t m : {1u, 2u, 7u, 64u}) {
        std::vector<double> out(m * 2);
        w.bridge(4, 0.01, total, m, out);
        for (std::size_t c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += out[j * 2 + c];
            EXPECT_NEAR(s, total[c], 1e-14);
        }
    }
}

TEST(Bridge, RefinedIncrementsHaveBrownianLaw) {
    // Bridge pieces of a N(0, dt) total are i.i.d. N(0, dt / m).
    const std::size_t m = 8;
    const double dt = 0.5;
    std::vector<double> z;
    NoiseSource w(21, 0, Channel::W2, 1);
    std::vector<double> out(m);
    for (std::uint64_t k = 0; k < 4000; ++k) {
        const auto total = w.next_increment(dt);
        w.bridge(k, dt, total, m, out);
        for (double v : out) z.push_back(v / std::sqrt(dt / m));
    }
    EXPECT_GT(ks_test_standard_normal(z).p_value, 1e-3);
    double lag = 0.0;
    for (std::size_t i = 0; i + 1 < z.size(); i += 2) lag += z[i] * z[i + 1];
    EXPECT_LT(std::abs(lag / (z.size() / 2.0)), 4.0 / std::sqrt(z.size() / 2.0));
}

TEST(CoupledPair, BothCursorsSeeTheW2Stream) {
    auto [c, e] = coupled_pair(17, 3, 2);
    NoiseSource ref(17, 3, Channel::W2, 2);
    for (int i = 0; i < 5; ++i) {
        const auto r = ref.next_increment(0.1);
        EXPECT_EQ(c.next_increment(0.1), r);
        EXPECT_EQ(e.next_increment(0.1), r);
    }
}
