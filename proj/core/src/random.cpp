#include "tilq/random.hpp"

namespace tilq {

std::mt19937_64 make_engine(std::uint64_t seed, Stream stream, std::uint64_t index) {
    const auto s = static_cast<std::uint64_t>(stream);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

void fill_normals(std::mt19937_64& engine, std::span<double> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : out) x = normal(engine);
}

}  // namespace tilq
