#include "mnet/rng.hpp"

#include <cmath>
#include <numbers>

#include "mnet/error.hpp"

namespace mnet {

uint64_t mix_seed(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t master, uint64_t stream) {
    return mix_seed(master + 0x9E3779B97F4A7C15ull * (stream + 1));
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw Error("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t max_valid = UINT64_MAX / span * span;
    uint64_t r;
    do {
        r = next_u64();
    } while (r >= max_valid);
    return lo + static_cast<int64_t>(r % span);
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // 1 - uniform() lies in (0, 1], keeping the log finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    shuffle(p);
    return p;
}

}  // namespace mnet
