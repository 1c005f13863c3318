#include "stoprec/rng.hpp"

#include <cmath>

namespace stoprec::rng {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mul_hi_lo(kPhiloxM0, ctr[0], hi0, lo0);
        mul_hi_lo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

std::uint64_t bits64(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
                     std::uint32_t b, std::uint32_t c) {
    const auto out = philox4x32({stream, a, b, c},
                                {static_cast<std::uint32_t>(seed),
                                 static_cast<std::uint32_t>(seed >> 32)});
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double uniform01(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
                 std::uint32_t b, std::uint32_t c) {
    return static_cast<double>(bits64(seed, stream, a, b, c) >> 11) * 0x1.0p-53;
}

double uniform(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
               std::uint32_t b, std::uint32_t c, double lo, double hi) {
    return lo + (hi - lo) * uniform01(seed, stream, a, b, c);
}

double normal(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
              std::uint32_t b, std::uint32_t c) {
    const auto out = philox4x32({stream, a, b, c},
                                {static_cast<std::uint32_t>(seed),
                                 static_cast<std::uint32_t>(seed >> 32)});
    const double u1 =
        (static_cast<double>(((static_cast<std::uint64_t>(out[0]) << 32) | out[1]) >> 11) + 0.5) *
        0x1.0p-53;  // (0,1), never exactly 0
    const double u2 =
        static_cast<double>(((static_cast<std::uint64_t>(out[2]) << 32) | out[3]) >> 11) *
        0x1.0p-53;
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace stoprec::rng
