#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

namespace levytree::rng {

using Engine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t& state);

// Key of the stream (seed, index); a pure function of its arguments.
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index);

// Engine for replicate `index` under root `seed`.
Engine make_stream(std::uint64_t seed, std::uint64_t index);

// uniform on the open interval (0, 1)
inline double open01(Engine& eng)
{
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double exp1(Engine& eng) { return -std::log(open01(eng)); }

// Runs body(i) for i in [0, n) on `threads` workers; each index runs once.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

unsigned default_threads();

}  // namespace levytree::rng
