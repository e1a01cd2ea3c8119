#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace childgrad {

// Seeded random source. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the distributions are implemented here because the
// std:: distributions are implementation-defined and would break cross-platform
// reproducibility of seeded runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled.
    std::size_t index(std::size_t n);

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent stream derived from this generator's seed and a stream id.
    Rng derive(std::uint64_t stream) const;

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace childgrad
