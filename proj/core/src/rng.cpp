#include "fedpg/rng.hpp"


namespace fedpg {

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Engine engine_from_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t w : words) h = mix(h ^ mix(w));
  return Engine(h);
}

}  // namespace

Engine make_engine(const StreamKey& key, std::uint64_t batch) {
  return engine_from_words({key.seed, key.round, key.agent, key.step, batch, 0x5eedULL});
}

Engine make_engine(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return engine_from_words({seed, a, b, c, 0xb1dULL});
}

double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

int draw_index(const double* probs, int n, int stride, Engine& eng) {
  const double u = uniform01(eng);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += probs[static_cast<std::ptrdiff_t>(i) * stride];
    if (u < acc) return i;
  }
  for (int i = n - 1; i >= 0; --i) {
    if (probs[static_cast<std::ptrdiff_t>(i) * stride] > 0.0) return i;
  }
  return n - 1;
}

}  // namespace fedpg
