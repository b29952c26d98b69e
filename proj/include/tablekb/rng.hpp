#pragma once
// Seeded RNG helpers with a fixed bounded-draw scheme so sampled outputs
// are identical across platforms.

#include <cstdint>
#include <random>
#include <vector>

namespace tablekb {

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    // Unbiased draw in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    double uniform01() {
        return (gen_() >> 11) * 0x1.0p-53;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

// First n elements of a seeded shuffle (partial Fisher-Yates).
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, size_t n,
                                          uint64_t seed) {
    Rng rng(seed);
    if (n > pool.size()) n = pool.size();
    for (size_t i = 0; i < n; ++i)
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(n);
    return pool;
}

}  // namespace tablekb
