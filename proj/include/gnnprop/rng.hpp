#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gnnprop {

/// Counter-based splittable generator (SplitMix64 core). Children are derived
/// by hashing a label into the parent state, so every pipeline stage draws
/// from its own stream and results do not depend on evaluation order.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Child stream for a named sub-task; independent of draws on the parent.
    Rng split(const std::string& label) const {
        uint64_t h = 0xcbf29ce484222325ULL ^ state_;
        for (unsigned char ch : label) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        return Rng(h);
    }

    Rng split(uint64_t index) const {
        uint64_t h = state_ ^ (0x9e3779b97f4a7c15ULL + index * 0xff51afd7ed558ccdULL);
        h = (h ^ (h >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return Rng(h ^ (h >> 33));
    }

    /// Uniform in [0, 1). Implemented by hand so results are identical on
    /// every platform (std:: distributions are implementation-defined).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace gnnprop
