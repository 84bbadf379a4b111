#include "bermudan/rng.hpp"

#include <cmath>
#include <numbers>

namespace bermudan {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

// 53-bit uniform in (0, 1).
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t word = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

const char* to_string(StreamFamily family) {
    switch (family) {
        case StreamFamily::train: return "TRAIN";
        case StreamFamily::lower: return "LOWER";
        case StreamFamily::upper_outer: return "UPPER_OUTER";
        case StreamFamily::upper_inner: return "UPPER_INNER";
        case StreamFamily::hedge_train: return "HEDGE_TRAIN";
        case StreamFamily::hedge_eval: return "HEDGE_EVAL";
        case StreamFamily::network_init: return "NETWORK_INIT";
        case StreamFamily::minibatch: return "MINIBATCH";
    }
    return "UNKNOWN";
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

RandomStream::RandomStream(const RngStreamKey& key)
    : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
      index_lo_(static_cast<std::uint32_t>(key.index)),
      index_hi_((static_cast<std::uint32_t>(key.index >> 32) & 0x00FFFFFFu) |
                (static_cast<std::uint32_t>(key.family) << 24)) {}

std::array<std::uint32_t, 4> RandomStream::block(std::uint64_t block_counter) const {
    return philox4x32({static_cast<std::uint32_t>(block_counter),
                       static_cast<std::uint32_t>(block_counter >> 32), index_lo_, index_hi_},
                      key_);
}

std::uint64_t RandomStream::bits(std::uint64_t counter) const {
    const auto r = block(counter >> 1);
    const bool second = (counter & 1u) != 0;
    const std::uint32_t hi = second ? r[2] : r[0];
    const std::uint32_t lo = second ? r[3] : r[1];
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

double RandomStream::uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RandomStream::below(std::uint64_t counter, std::uint64_t bound) const {
    __extension__ using u128 = unsigned __int128;
    const u128 wide = static_cast<u128>(bits(counter)) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
}

double RandomStream::normal(std::uint64_t counter) const {
    const auto r = block(counter >> 1);
    const double u1 = to_open_unit(r[0], r[1]);
    const double u2 = to_open_unit(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (counter & 1u) ? radius * std::sin(angle) : radius * std::cos(angle);
}

void RandomStream::normals(std::uint64_t first, std::span<double> out) const {
    std::size_t i = 0;
    if (!out.empty() && (first & 1u)) {
        out[i++] = normal(first);
    }
    for (; i + 1 < out.size(); i += 2) {
        const auto r = block((first + i) >> 1);
        const double radius = std::sqrt(-2.0 * std::log(to_open_unit(r[0], r[1])));
        const double angle = 2.0 * std::numbers::pi * to_open_unit(r[2], r[3]);
        out[i] = radius * std::cos(angle);
        out[i + 1] = radius * std::sin(angle);
    }
    if (i < out.size()) {
        out[i] = normal(first + i);
    }
}

}  // namespace bermudan
