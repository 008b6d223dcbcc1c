#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace kinseq {

// Counter-based generator (splitmix64). Fully specified here so that seeded
// runs are bit-reproducible across standard libraries; std:: distributions
// are implementation-defined and never used on a reproducibility path.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo,hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0,n)
    std::uint64_t next_below(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double normal(double mean = 0.0, double sigma = 1.0);

    // in-place Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

 private:
    std::uint64_t state_;
};

// Deterministic seed derivation: every random stream in a run hangs off the
// top-level seed via a named tag, so a run manifest can record the tree.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index);

}  // namespace kinseq
