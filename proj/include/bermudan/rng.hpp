#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace bermudan {

// Independent random streams are addressed by (family, seed, index). Every
// draw inside a stream is addressed by a 64-bit counter, so any draw can be
// produced without generating the ones before it.
enum class StreamFamily : std::uint8_t {
    train = 1,
    lower = 2,
    upper_outer = 3,
    upper_inner = 4,
    hedge_train = 5,
    hedge_eval = 6,
    network_init = 7,
    minibatch = 8,
};

const char* to_string(StreamFamily family);

struct RngStreamKey {
    StreamFamily family = StreamFamily::train;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;

    RngStreamKey with_index(std::uint64_t i) const { return {family, seed, i}; }
    RngStreamKey offset(std::uint64_t k) const { return {family, seed, index + k}; }
};

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

class RandomStream {
public:
    explicit RandomStream(const RngStreamKey& key);

    /// 64 random bits for draw `counter`.
    std::uint64_t bits(std::uint64_t counter) const;
    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t counter) const;
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const;
    /// Standard normal draw `counter` (Box-Muller on a pair of uniforms).
    double normal(std::uint64_t counter) const;
    /// Fills `out` with normal draws first, first+1, ...
    void normals(std::uint64_t first, std::span<double> out) const;

private:
    std::array<std::uint32_t, 4> block(std::uint64_t block_counter) const;

    std::array<std::uint32_t, 2> key_{};
    std::uint32_t index_lo_ = 0;
    std::uint32_t index_hi_ = 0;
};

}  // namespace bermudan
