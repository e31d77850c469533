#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "incant/mat.hpp"

namespace incant {

// mt19937_64 output is pinned by the standard; the normal transform is
// hand-rolled Box-Muller because std::normal_distribution is not, and
// every determinism contract here is bitwise.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double normal() {
        double u1 = uniform();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename S>
    void fill_normal(Mat<S>& m, double sigma = 1.0, double mean = 0.0) {
        for (auto& x : m.v) x = static_cast<S>(mean + sigma * normal());
    }

    template <typename S>
    Mat<S> normal_mat(int r, int c, double sigma = 1.0, double mean = 0.0) {
        Mat<S> m(r, c);
        fill_normal(m, sigma, mean);
        return m;
    }

private:
    std::mt19937_64 eng_;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stable sub-stream derivation: one run seed fans out into independent
// streams for x_T, renoise, prompt init, etc.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = 1469598103934665603ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return splitmix64(base ^ h);
}

}  // namespace incant
