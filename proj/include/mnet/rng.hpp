#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mnet {

/// SplitMix64 finalizer. Used to turn loosely structured integers into
/// well-mixed seeds.
uint64_t mix_seed(uint64_t x);

/// Pure derivation of an independent seed stream from a master seed.
/// derive_seed(m, i) never consumes generator state, so stream i is the
/// same no matter how many other streams were derived before it.
uint64_t derive_seed(uint64_t master, uint64_t stream);

/// Seeded generator with portable distributions. The engine is mt19937_64
/// (sequence fixed by the standard); uniform/normal/shuffle are implemented
/// here rather than with std:: distributions so that identical seeds give
/// identical draws on every platform and standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [lo, hi], both ends inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);

    /// Standard normal via Box-Muller.
    double normal();

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Random permutation of 0..n-1.
    std::vector<int> permutation(int n);

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mnet
