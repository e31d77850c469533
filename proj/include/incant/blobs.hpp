#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "incant/errors.hpp"
#include "incant/rng.hpp"
#include "incant/types.hpp"
#include "incant/vocab.hpp"

namespace incant {

/*==================================== synthetic blob data ====================================*/
//
// Small colored shapes on a near-constant background, captioned
// "<color> <shape>". Per-element variance is deliberately low so a simple
// denoiser can cut the noise-prediction loss quickly.

template <typename S>
struct BlobSample {
    LatentImage<S> x0;
    TokenSequence caption;
};

namespace detail {

struct BlobPalette {
    const char* word;
    double rgb[3];
};

inline const std::vector<BlobPalette>& blob_colors() {
    static const std::vector<BlobPalette> k = {
        {"red", {0.9, 0.1, 0.1}},    {"green", {0.1, 0.9, 0.1}}, {"blue", {0.1, 0.1, 0.9}},
        {"yellow", {0.9, 0.9, 0.1}}, {"cyan", {0.1, 0.9, 0.9}},  {"purple", {0.7, 0.1, 0.8}},
        {"white", {0.9, 0.9, 0.9}},  {"orange", {0.9, 0.5, 0.1}},
    };
    return k;
}

inline const std::vector<std::string>& blob_shapes() {
    static const std::vector<std::string> k = {"dot", "square", "disk", "bar", "cross"};
    return k;
}

}  // namespace detail

template <typename S>
std::vector<BlobSample<S>> make_blob_dataset(int n, int c, int h, int w, uint64_t seed,
                                             const Vocabulary& vocab) {
    if (n < 1) throw input_error("blob dataset: need at least one sample");
    if (h < 5 || w < 5) throw input_error("blob dataset: grid must be at least 5x5");
    const auto& colors = detail::blob_colors();
    const auto& shapes = detail::blob_shapes();
    Rng rng(seed);
    std::vector<BlobSample<S>> out;
    out.reserve(static_cast<size_t>(n));
    const double bg = 0.1;

    for (int s = 0; s < n; ++s) {
        const auto& col = colors[rng.next_u64() % colors.size()];
        const std::string& shape = shapes[rng.next_u64() % shapes.size()];
        const int cy = 2 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(h - 4));
        const int cx = 2 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(w - 4));

        LatentImage<S> img(c, h, w);
        for (auto& v : img.v) v = static_cast<S>(bg);
        auto paint = [&](int y, int x) {
            if (y < 0 || y >= h || x < 0 || x >= w) return;
            for (int ci = 0; ci < c; ++ci) img.at(ci, y, x) = static_cast<S>(col.rgb[ci % 3]);
        };
        if (shape == "dot") {
            paint(cy, cx);
        } else if (shape == "square") {
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) paint(cy + dy, cx + dx);
        } else if (shape == "disk") {
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    if (dy * dy + dx * dx <= 4) paint(cy + dy, cx + dx);
        } else if (shape == "bar") {
            for (int dx = -2; dx <= 2; ++dx) paint(cy, cx + dx);
        } else {  // cross
            for (int d = -2; d <= 2; ++d) {
                paint(cy + d, cx);
                paint(cy, cx + d);
            }
        }

        BlobSample<S> sample;
        sample.x0 = std::move(img);
        sample.caption = vocab.tokenize(std::string(col.word) + " " + shape, /*n_max=*/2);
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace incant
