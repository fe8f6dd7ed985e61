#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace epopt {

using Rng = std::mt19937_64;

// Independent generator for a (seed, path) pair. Every stochastic consumer
// derives its own stream from the run seed plus a fixed tag path, so results
// do not depend on evaluation order or on how work is split across threads.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Stream tags. Values are arbitrary but frozen: changing one changes every
// reproduced run.
namespace stream_tag {
inline constexpr std::uint64_t policy_init = 0x1001;
inline constexpr std::uint64_t epopt_rollout = 0x2001;
inline constexpr std::uint64_t eval_episode = 0x3001;
inline constexpr std::uint64_t adapt_round = 0x4001;
inline constexpr std::uint64_t adapt_samples = 0x4002;
inline constexpr std::uint64_t adapt_target = 0x4003;
}  // namespace stream_tag

double standard_normal(Rng& rng);

}  // namespace epopt
