#pragma once

#include <cstdint>
#include <random>

namespace fedpg {

using Engine = std::mt19937_64;

// Identifies one random stream; batch index is supplied per trajectory.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t round = 0;
  std::uint64_t agent = 0;
  std::uint64_t step = 0;
};

Engine make_engine(const StreamKey& key, std::uint64_t batch);
Engine make_engine(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

double uniform01(Engine& eng);
// Inverse-CDF draw from a probability row of length n.
int draw_index(const double* probs, int n, int stride, Engine& eng);

}  // namespace fedpg
