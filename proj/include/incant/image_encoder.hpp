#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "incant/errors.hpp"
#include "incant/hash.hpp"
#include "incant/mat.hpp"
#include "incant/rng.hpp"
#include "incant/types.hpp"

namespace incant {

/*==================================== toy image encoder ====================================*/
//
// Flatten + two affine-tanh layers + frozen projection into the joint space.
// Deliberately built on plain matrices (no tape): image embeddings are always
// gradient-excluded, so keeping them off the tape enforces that by type.

struct ImageEncoderSpec {
    int c = 3, h = 8, w = 8;
    int d = 32;
    int hidden = 64;
    uint64_t seed = 202;

    void validate() const {
        if (c < 1 || h < 1 || w < 1) throw input_error("image encoder: bad input shape");
        if (d < 1 || hidden < 1) throw input_error("image encoder: bad dimensions");
    }
};

template <typename S>
class ImageEncoder {
   public:
    explicit ImageEncoder(ImageEncoderSpec spec) : spec_(spec) {
        spec_.validate();
        Rng rng(spec_.seed);
        const double s = kWeightScale;
        const int flat = spec_.c * spec_.h * spec_.w;
        w1_ = rng.normal_mat<S>(flat, spec_.hidden, s);
        b1_ = rng.normal_mat<S>(1, spec_.hidden, s);
        w2_ = rng.normal_mat<S>(spec_.hidden, spec_.hidden, s);
        b2_ = rng.normal_mat<S>(1, spec_.hidden, s);
        proj_ = rng.normal_mat<S>(spec_.hidden, spec_.d, s);
    }

    const ImageEncoderSpec& spec() const { return spec_; }

    GlobalEmbedding<S> encode(const LatentImage<S>& img) const {
        if (img.c != spec_.c || img.h != spec_.h || img.w != spec_.w)
            throw input_error("image encoder: latent shape mismatch");
        if (!img.is_clean())
            throw input_error("image encoder: latent must be a clean sample (t = clean)");
        if (!img.all_finite()) throw numeric_error("image encoder: non-finite latent");

        Mat<S> x(1, static_cast<int>(img.numel()), img.v);
        Mat<S> z1 = affine_tanh(x, w1_, b1_);
        Mat<S> z2 = affine_tanh(z1, w2_, b2_);
        Mat<S> e = matmul(z2, proj_);
        GlobalEmbedding<S> g{std::move(e.v), false};
        g.validate();
        return g;
    }

    std::string weights_hash() const {
        Sha256 h;
        h.update("image-encoder");
        h.update(&spec_.c, sizeof(spec_.c));
        h.update(&spec_.h, sizeof(spec_.h));
        h.update(&spec_.w, sizeof(spec_.w));
        h.update(&spec_.d, sizeof(spec_.d));
        h.update_mat(w1_);
        h.update_mat(b1_);
        h.update_mat(w2_);
        h.update_mat(b2_);
        h.update_mat(proj_);
        return h.hex();
    }

    static constexpr double kWeightScale = 0.02;

   private:
    static Mat<S> affine_tanh(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
        Mat<S> y = matmul(x, w);
        for (int j = 0; j < y.cols; ++j) y.v[static_cast<size_t>(j)] += b.v[static_cast<size_t>(j)];
        for (auto& v : y.v) v = std::tanh(v);
        return y;
    }

    ImageEncoderSpec spec_;
    Mat<S> w1_, b1_, w2_, b2_, proj_;
};

/*==================================== word-image similarity ====================================*/

// Per-word cosine similarity between the projected contextual text rows and
// the image embedding. Prompt rows are excluded; zero-norm rows score 0 and
// are reported through `zero_norm_rows` instead of aborting.
template <typename S>
SimilarityScores<S> word_image_similarity(const EmbeddingMatrix<S>& rows,
                                          const GlobalEmbedding<S>& image,
                                          std::vector<int>* zero_norm_rows = nullptr) {
    if (rows.values.cols != image.dim())
        throw input_error("word_image_similarity: dimension mismatch");
    const Mat<S> img = image.as_row();
    const S img_n2 = dot_all(img, img);
    SimilarityScores<S> out;
    for (int i = 0; i < rows.values.rows; ++i) {
        if (rows.roles[static_cast<size_t>(i)] == RowRole::Prompt) continue;
        Mat<S> r(1, rows.values.cols);
        std::copy(rows.values.row_ptr(i), rows.values.row_ptr(i) + rows.values.cols, r.v.begin());
        const S r_n2 = dot_all(r, r);
        if (r_n2 == S(0) || img_n2 == S(0)) {
            out.scores.push_back(S(0));
            if (zero_norm_rows) zero_norm_rows->push_back(i);
            continue;
        }
        out.scores.push_back(cosine(r, img));
    }
    return out;
}

}  // namespace incant
