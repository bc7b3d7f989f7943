#pragma once

#include <cstdint>
#include <random>

namespace specdec {

// Deterministic RNG used everywhere. Wraps mt19937_64 but fixes the
// uniform-double mapping (the standard library's distributions are not
// portable across implementations): 53 high bits -> [0, 1).
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform double in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    uint64_t next_u64() { return gen_(); }

  private:
    std::mt19937_64 gen_;
};

// splitmix64 step; used to derive independent per-generation seeds from a
// master seed: seed_i = split_seed(master, i).
inline uint64_t split_seed(uint64_t master, uint64_t index) {
    uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace specdec
