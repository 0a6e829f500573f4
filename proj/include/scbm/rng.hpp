#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace scbm {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The 128-bit counter is split into a 64-bit block index (low words) and a
/// 64-bit stream id (high words), so independent sub-streams can be addressed
/// directly by id rather than by skipping ahead. Satisfies
/// UniformRandomBitGenerator.
class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    Philox4x32() : Philox4x32(0, 0) {}
    Philox4x32(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (used_ == 4) refill();
        return buffer_[used_++];
    }

    void discard(unsigned long long n) {
        for (; n > 0; --n) (*this)();
    }

    /// Raw block function, exposed for known-answer tests.
    static counter_type block(counter_type ctr, key_type key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    void refill() {
        const counter_type ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                               static_cast<std::uint32_t>(stream_),
                               static_cast<std::uint32_t>(stream_ >> 32)};
        buffer_ = block(ctr, key_);
        ++block_;
        used_ = 0;
    }

    key_type key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    counter_type buffer_{};
    int used_ = 4;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Well-known sub-stream purposes. Mixed into the stream id so that, e.g.,
/// network sampling and innovation draws never share counters.
enum class StreamPurpose : std::uint64_t {
    network = 1,
    innovations = 2,
    pilot = 3,
    kmeans = 4,
    cv_mask = 5,
    test = 99,
};

/// Generator for the sub-stream addressed by (purpose, ids...) under `seed`.
inline Philox4x32 make_stream(std::uint64_t seed, StreamPurpose purpose,
                              std::initializer_list<std::uint64_t> ids = {}) {
    std::uint64_t h = detail::splitmix64(static_cast<std::uint64_t>(purpose));
    for (std::uint64_t id : ids) h = detail::splitmix64(h ^ detail::splitmix64(id + 0x51ull));
    return Philox4x32(seed, h);
}

/// Derive a child seed (used where an API takes a plain seed).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = detail::splitmix64(seed);
    for (std::uint64_t id : ids) h = detail::splitmix64(h ^ id);
    return h;
}

}  // namespace scbm
