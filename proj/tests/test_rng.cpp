#include <catch_amalgamated.hpp>

#include "mkv/rng.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace mkv;

TEST_CASE("philox matches the published known-answer vectors", "[rng]") {
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::generate(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
          C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::generate(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
          C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox is usable at compile time", "[rng]") {
    constexpr auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    STATIC_REQUIRE(out[0] == 0x6627e8d5u);
}

TEST_CASE("streams are pure functions of key and index", "[rng]") {
    const RandomStream a({42, StreamRole::common, 3, 0});
    const RandomStream b({42, StreamRole::common, 3, 0});
    for (std::uint64_t i = 0; i < 100; ++i) {
        CHECK(a.normal(i) == b.normal(i));
        CHECK(a.uniform(i) == b.uniform(i));
    }
    // random access agrees with sequential fill
    std::vector<double> filled(17);
    a.fill_normal(filled, 5);
    for (std::size_t i = 0; i < filled.size(); ++i) CHECK(filled[i] == a.normal(5 + i));
}

TEST_CASE("uniforms lie in the open unit interval", "[rng]") {
    const RandomStream s({7, StreamRole::sampler, 0, 0});
    for (std::uint64_t i = 0; i < 20000; ++i) {
        const double u = s.uniform(i);
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("keys differing in any field give different streams", "[rng]") {
    const StreamKey base{9, StreamRole::idiosyncratic, 1, 2};
    std::vector<StreamKey> keys{base};
    keys.push_back({10, StreamRole::idiosyncratic, 1, 2});
    keys.push_back({9, StreamRole::common, 1, 2});
    keys.push_back({9, StreamRole::idiosyncratic, 2, 2});
    keys.push_back({9, StreamRole::idiosyncratic, 1, 3});
    std::set<double> first;
    for (const auto& k : keys) first.insert(RandomStream(k).normal(0));
    CHECK(first.size() == keys.size());
}

TEST_CASE("brownian increments: sharing and determinism", "[rng]") {
    const double dt = 0.01;
    // two particles of one scenario read the same common stream
    const auto common0 = brownian_increments(50, 1, dt, {1, StreamRole::common, 4, 0});
    const auto common1 = brownian_increments(50, 1, dt, {1, StreamRole::common, 4, 0});
    CHECK(common0 == common1);
    const auto idio0 = brownian_increments(50, 1, dt, {1, StreamRole::idiosyncratic, 4, 0});
    const auto idio1 = brownian_increments(50, 1, dt, {1, StreamRole::idiosyncratic, 4, 1});
    CHECK(idio0 != idio1);
    const auto other_scenario = brownian_increments(50, 1, dt, {1, StreamRole::common, 5, 0});
    CHECK(other_scenario != common0);

    std::vector<double> buffer(100);
    brownian_increments(buffer, dt, {1, StreamRole::common, 4, 0});
    CHECK(std::equal(common0.begin(), common0.end(), buffer.begin()));
}

TEST_CASE("brownian increments have the normal sampling moments", "[rng][statistical]") {
    const double dt = 0.01;
    const std::size_t n = 1'000'000;
    const auto x = brownian_increments(n, 1, dt, {2024, StreamRole::sampler, 0, 0});
    double sum = 0.0, sum2 = 0.0;
    for (double v : x) {
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 * (0.1 / 1000.0));
    CHECK(std::abs(var - dt) < 0.01 * dt);
}

TEST_CASE("normals pass a coarse distribution check", "[rng][statistical]") {
    const RandomStream s({99, StreamRole::sampler, 1, 1});
    const std::size_t n = 200000;
    std::size_t below = 0, tail = 0;
    double m4 = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const double z = s.normal(i);
        below += z < 0.0;
        tail += std::abs(z) > 1.959963984540054;
        m4 += z * z * z * z;
    }
    CHECK(std::abs(static_cast<double>(below) / n - 0.5) < 4.0 * std::sqrt(0.25 / n));
    CHECK(std::abs(static_cast<double>(tail) / n - 0.05) < 4.0 * std::sqrt(0.05 * 0.95 / n));
    CHECK(std::abs(m4 / n - 3.0) < 0.1);
}

TEST_CASE("derived seeds separate labels and indices", "[rng]") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t label = 0; label < 8; ++label)
        for (std::uint64_t i = 0; i < 64; ++i) seen.insert(derive_seed(12345, label, i));
    CHECK(seen.size() == 8 * 64);
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    STATIC_REQUIRE(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
}
