#include "scbm/rng.hpp"

#include <gtest/gtest.h>

#include <set>

using scbm::Philox4x32;

TEST(Philox, KnownAnswerZero) {
    const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (Philox4x32::counter_type{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
    const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (Philox4x32::counter_type{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
    const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (Philox4x32::counter_type{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, SameSeedSameSequence) {
    auto a = scbm::make_stream(42, scbm::StreamPurpose::network, {1, 2});
    auto b = scbm::make_stream(42, scbm::StreamPurpose::network, {1, 2});
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(Philox, DistinctStreamsDiffer) {
    std::set<std::uint32_t> firsts;
    for (std::uint64_t id = 0; id < 50; ++id) firsts.insert(scbm::make_stream(7, scbm::StreamPurpose::kmeans, {id})());
    EXPECT_EQ(firsts.size(), 50u);
    auto a = scbm::make_stream(7, scbm::StreamPurpose::network);
    auto b = scbm::make_stream(7, scbm::StreamPurpose::innovations);
    EXPECT_NE(a(), b());
}

TEST(Philox, DiscardMatchesDraws) {
    auto a = scbm::make_stream(3, scbm::StreamPurpose::test);
    auto b = a;
    for (int i = 0; i < 37; ++i) a();
    b.discard(37);
    EXPECT_EQ(a(), b());
}

TEST(DeriveSeed, DeterministicAndOrderSensitive) {
    EXPECT_EQ(scbm::derive_seed(5, {1, 2}), scbm::derive_seed(5, {1, 2}));
    EXPECT_NE(scbm::derive_seed(5, {1, 2}), scbm::derive_seed(5, {2, 1}));
    EXPECT_NE(scbm::derive_seed(5, {1}), scbm::derive_seed(6, {1}));
}

TEST(Philox, UniformMeanIsCentered) {
    auto g = scbm::make_stream(11, scbm::StreamPurpose::test);
    double s = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) s += static_cast<double>(g()) / 4294967296.0;
    EXPECT_NEAR(s / n, 0.5, 0.005);
}
