#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mkv {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Stateless: every output block is a pure function of (key, counter), which
/// is what makes the noise streams below independent of thread scheduling.
class Philox4x32 {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter generate(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

  private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// What a stream is used for. Part of the counter, so streams with different
/// roles never overlap.
enum class StreamRole : std::uint32_t {
    common = 1,         // common-noise increments, one stream per scenario
    idiosyncratic = 2,  // idiosyncratic increments, one stream per particle
    initial = 3,        // draws from the initial law
    auxiliary = 4,      // external randomization of weak controls
    resample = 5,       // atom resampling for restarts
    validation = 6,     // sample points of the assumption validators
    sampler = 7,        // general-purpose test/instance generation
};

struct StreamKey {
    std::uint64_t seed = 0;
    StreamRole role = StreamRole::sampler;
    std::uint32_t scenario = 0;
    std::uint32_t particle = 0;
};

/// Random-access stream of uniforms/normals addressed by a 64-bit draw index.
class RandomStream {
  public:
    explicit RandomStream(StreamKey key) noexcept;

    /// Four raw 32-bit words for block `block`.
    [[nodiscard]] Philox4x32::Counter block(std::uint64_t block) const noexcept;

    /// Two uniforms in the open interval (0, 1) built from 53-bit mantissas.
    [[nodiscard]] std::array<double, 2> uniform_pair(std::uint64_t block) const noexcept;

    /// Uniform number `index` of the stream, in (0, 1).
    [[nodiscard]] double uniform(std::uint64_t index) const noexcept;

    /// Two independent standard normals for block `block` (Box-Muller).
    [[nodiscard]] std::array<double, 2> normal_pair(std::uint64_t block) const noexcept;

    /// Normal number `index` of the stream.
    [[nodiscard]] double normal(std::uint64_t index) const noexcept;

    /// Fill `out` with consecutive normals starting at index `first`.
    void fill_normal(std::span<double> out, std::uint64_t first = 0) const noexcept;

  private:
    Philox4x32::Key key_{};
    std::uint32_t tag_ = 0;
    std::uint32_t scenario_ = 0;
    std::uint32_t particle_ = 0;
};

/// Brownian increments for one (role, scenario, particle) stream: `steps`
/// rows of `dim` i.i.d. N(0, dt) entries, row-major.
[[nodiscard]] std::vector<double> brownian_increments(std::size_t steps, std::size_t dim, double dt,
                                                      StreamKey key);

/// Same as above, writing into caller storage of size steps*dim.
void brownian_increments(std::span<double> out, double dt, StreamKey key);

/// SplitMix64 finalizer; used to derive child seeds.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Child seed for a labelled sub-experiment (inner restarts, instance ids).
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label,
                                                  std::uint64_t index = 0) noexcept {
    return mix64(mix64(seed ^ mix64(label)) + index);
}

}  // namespace mkv
