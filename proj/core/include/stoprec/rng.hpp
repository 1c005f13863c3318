/// @file rng.hpp
/// @brief Counter-based random streams (Philox 4x32-10).
///
/// Every random draw in the library is a pure function of
/// (seed, stream, a, b, c), so results do not depend on evaluation order or
/// thread count. Streams partition the counter space between subsystems.

#ifndef STOPREC_RNG_HPP
#define STOPREC_RNG_HPP

#include <array>
#include <cstdint>

namespace stoprec::rng {

enum Stream : std::uint32_t {
    kMatGen = 1,        ///< random matrix generation, keyed (i, j)
    kWalk = 2,          ///< Markov-chain transitions, keyed (row, chain*; step)
    kNetInit = 3,       ///< network weight init, keyed (tensor, element)
    kShuffle = 4,       ///< dataset shuffles, keyed (epoch, position)
    kDropout = 5,       ///< dropout masks, keyed (step, unit)
    kProposal = 6,      ///< acquisition restarts, keyed (slot, restart, dim)
    kRandomSearch = 7,  ///< random-search points, keyed (point, dim)
    kPowerIter = 8,     ///< power-iteration start vectors
    kTestOracle = 100   ///< reserved for test-side oracles
};

/// One Philox 4x32-10 block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// 64 uniform bits at counter (stream, a, b, c) under `seed`.
std::uint64_t bits64(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
                     std::uint32_t b, std::uint32_t c);

/// Uniform double in [0, 1), 53-bit resolution.
double uniform01(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
                 std::uint32_t b, std::uint32_t c);

/// Uniform double in [lo, hi).
double uniform(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
               std::uint32_t b, std::uint32_t c, double lo, double hi);

/// Standard normal draw (Box-Muller over one counter block).
double normal(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
              std::uint32_t b, std::uint32_t c);

}  // namespace stoprec::rng

#endif  // STOPREC_RNG_HPP
