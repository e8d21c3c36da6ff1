#include "mkv/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mkv {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 53-bit mantissa uniform in (0, 1): the half-ulp offset keeps log() finite.
constexpr double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

RandomStream::RandomStream(StreamKey key) noexcept
    : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
      tag_(static_cast<std::uint32_t>(key.role) << 24),
      scenario_(key.scenario),
      particle_(key.particle) {}

Philox4x32::Counter RandomStream::block(std::uint64_t block) const noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block),
                                  static_cast<std::uint32_t>((block >> 32) & 0x00FFFFFFu) | tag_,
                                  scenario_, particle_};
    return Philox4x32::generate(ctr, key_);
}

std::array<double, 2> RandomStream::uniform_pair(std::uint64_t blk) const noexcept {
    const auto w = block(blk);
    return {to_open_unit(w[0], w[1]), to_open_unit(w[2], w[3])};
}

double RandomStream::uniform(std::uint64_t index) const noexcept {
    return uniform_pair(index >> 1)[index & 1u];
}

std::array<double, 2> RandomStream::normal_pair(std::uint64_t blk) const noexcept {
    const auto [u1, u2] = uniform_pair(blk);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = kTwoPi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

double RandomStream::normal(std::uint64_t index) const noexcept {
    return normal_pair(index >> 1)[index & 1u];
}

void RandomStream::fill_normal(std::span<double> out, std::uint64_t first) const noexcept {
    std::size_t i = 0;
    std::uint64_t index = first;
    if ((index & 1u) != 0 && i < out.size()) {
        out[i++] = normal(index++);
    }
    for (; i + 1 < out.size(); i += 2, index += 2) {
        const auto pair = normal_pair(index >> 1);
        out[i] = pair[0];
        out[i + 1] = pair[1];
    }
    if (i < out.size()) {
        out[i] = normal(index);
    }
}

std::vector<double> brownian_increments(std::size_t steps, std::size_t dim, double dt, StreamKey key) {
    std::vector<double> out(steps * dim);
    brownian_increments(out, dt, key);
    return out;
}

void brownian_increments(std::span<double> out, double dt, StreamKey key) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("brownian_increments: time step must be positive");
    }
    RandomStream(key).fill_normal(out);
    const double scale = std::sqrt(dt);
    for (double& v : out) {
        v *= scale;
    }
}

}  // namespace mkv
