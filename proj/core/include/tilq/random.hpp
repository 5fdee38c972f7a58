#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace tilq {

/// Independent random streams used by the simulators. Each (seed, stream,
/// index) triple seeds its own engine, so results do not depend on the order
/// in which paths are generated or on the number of worker threads.
enum class Stream : std::uint64_t {
    factor = 1,
    outer = 2,
    inner = 3,
    state = 4,
    lambda = 5,
};

std::mt19937_64 make_engine(std::uint64_t seed, Stream stream, std::uint64_t index);

/// Fills `out` with independent standard normals.
void fill_normals(std::mt19937_64& engine, std::span<double> out);

}  // namespace tilq
