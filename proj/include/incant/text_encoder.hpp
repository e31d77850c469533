#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "incant/errors.hpp"
#include "incant/hash.hpp"
#include "incant/mat.hpp"
#include "incant/rng.hpp"
#include "incant/tape.hpp"
#include "incant/types.hpp"

namespace incant {

/*==================================== toy text encoder ====================================*/
//
// Embedding lookup + sinusoidal position signal + bidirectional self-attention
// + tanh feed-forward, followed by a frozen linear projection into the joint
// text-image space. All weights are frozen after seeded construction; the only
// differentiable input is the prompt matrix supplied by the caller.
//
// Sequence layout: word rows, then prompt rows (continuous vectors bypassing
// the embedding lookup), then one internal end-of-sequence row. The projected
// EOS row is the global embedding; the returned row matrix excludes it.

struct TextEncoderSpec {
    int vocab_size = 0;
    int d = 32;
    int max_len = 20;  // bound on word + prompt rows (EOS excluded)
    int layers = 1;
    int d_ff = 64;
    int mask_token_id = 0;
    uint64_t seed = 101;

    void validate() const {
        if (vocab_size < 1) throw input_error("text encoder: vocab_size must be >= 1");
        if (d < 1 || max_len < 1 || d_ff < 1) throw input_error("text encoder: bad dimensions");
        if (layers < 1) throw input_error("text encoder: needs at least one attention layer");
        if (mask_token_id < 0 || mask_token_id >= vocab_size)
            throw input_error("text encoder: mask token id outside vocabulary");
    }
};

template <typename S>
class TextEncoder {
   public:
    struct Layer {
        Mat<S> wq, wk, wv, wo;  // d x d
        Mat<S> w1, b1, w2, b2;  // d x d_ff, 1 x d_ff, d_ff x d, 1 x d
    };

    struct Encoded {
        typename Tape<S>::id rows = -1;    // word (+ prompt) rows, projected
        typename Tape<S>::id global = -1;  // 1 x d, projected EOS row
        std::vector<RowRole> roles;
    };

    explicit TextEncoder(TextEncoderSpec spec) : spec_(spec) {
        spec_.validate();
        Rng rng(spec_.seed);
        const double s = kWeightScale;
        embed_ = rng.normal_mat<S>(spec_.vocab_size, spec_.d, s);
        eos_ = rng.normal_mat<S>(1, spec_.d, s);
        for (int l = 0; l < spec_.layers; ++l) {
            Layer ly;
            ly.wq = rng.normal_mat<S>(spec_.d, spec_.d, s);
            ly.wk = rng.normal_mat<S>(spec_.d, spec_.d, s);
            ly.wv = rng.normal_mat<S>(spec_.d, spec_.d, s);
            ly.wo = rng.normal_mat<S>(spec_.d, spec_.d, s);
            ly.w1 = rng.normal_mat<S>(spec_.d, spec_.d_ff, s);
            ly.b1 = rng.normal_mat<S>(1, spec_.d_ff, s);
            ly.w2 = rng.normal_mat<S>(spec_.d_ff, spec_.d, s);
            ly.b2 = rng.normal_mat<S>(1, spec_.d, s);
            layers_.push_back(std::move(ly));
        }
        proj_ = rng.normal_mat<S>(spec_.d, spec_.d, s);
        pos_ = position_table(spec_.max_len + 1, spec_.d);
    }

    const TextEncoderSpec& spec() const { return spec_; }

    // Differentiable path. `prompt` is a tape node of shape n_p x d or -1 for
    // no prompt; positions in `mask_positions` (each < n_o) have their input
    // embedding replaced by the mask word's embedding.
    Encoded encode(Tape<S>& t, const TokenSequence& tokens, typename Tape<S>::id prompt,
                   const std::vector<int>& mask_positions) const {
        const int n_o = tokens.length();
        tokens.validate(spec_.max_len, spec_.vocab_size);
        const int n_p = prompt >= 0 ? t.value(prompt).rows : 0;
        if (n_p > 0 && t.value(prompt).cols != spec_.d)
            throw input_error("text encoder: prompt column count != d");
        if (n_o + n_p > spec_.max_len)
            throw input_error("text encoder: sequence of " + std::to_string(n_o + n_p) +
                              " rows exceeds max length " + std::to_string(spec_.max_len));

        Encoded out;
        out.roles.assign(static_cast<size_t>(n_o), RowRole::Word);
        Mat<S> base(n_o, spec_.d);
        for (int i = 0; i < n_o; ++i) {
            const S* src = embed_.row_ptr(tokens.ids[static_cast<size_t>(i)]);
            std::copy(src, src + spec_.d, base.row_ptr(i));
        }
        for (int p : mask_positions) {
            if (p < 0 || p >= n_o)
                throw input_error("text encoder: mask position outside text range");
            const S* src = embed_.row_ptr(spec_.mask_token_id);
            std::copy(src, src + spec_.d, base.row_ptr(p));
            out.roles[static_cast<size_t>(p)] = RowRole::Mask;
        }
        for (int i = 0; i < n_p; ++i) out.roles.push_back(RowRole::Prompt);

        auto x = t.constant(std::move(base));
        if (prompt >= 0) x = t.concat_rows(x, prompt);
        x = t.concat_rows(x, t.constant(eos_));
        const int rows = n_o + n_p + 1;

        Mat<S> pos(rows, spec_.d);
        std::copy(pos_.row_ptr(0), pos_.row_ptr(0) + pos.v.size(), pos.v.begin());
        x = t.add(x, t.constant(std::move(pos)));

        const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(spec_.d));
        for (const Layer& ly : layers_) {
            auto q = t.matmul(x, t.constant(ly.wq));
            auto k = t.matmul(x, t.constant(ly.wk));
            auto v = t.matmul(x, t.constant(ly.wv));
            auto a = t.row_softmax(t.scale(t.matmul(q, t.transpose(k)), inv_sqrt_d));
            x = t.add(x, t.matmul(t.matmul(a, v), t.constant(ly.wo)));
            auto h = t.tanh_(t.add_rowvec(t.matmul(x, t.constant(ly.w1)), t.constant(ly.b1)));
            auto f = t.add_rowvec(t.matmul(h, t.constant(ly.w2)), t.constant(ly.b2));
            x = t.add(x, f);
        }
        auto projected = t.matmul(x, t.constant(proj_));
        out.rows = t.slice_rows(projected, 0, rows - 1);
        out.global = t.slice_rows(projected, rows - 1, rows);
        return out;
    }

    // Value-level convenience for the frozen (non-differentiated) paths.
    std::pair<EmbeddingMatrix<S>, GlobalEmbedding<S>> encode_text(
        const TokenSequence& tokens, const Mat<S>* prompt = nullptr,
        const std::vector<int>& mask_positions = {}) const {
        Tape<S> t;
        typename Tape<S>::id pid = prompt ? t.constant(*prompt) : -1;
        Encoded e = encode(t, tokens, pid, mask_positions);
        EmbeddingMatrix<S> em{t.value(e.rows), e.roles};
        const Mat<S>& g = t.value(e.global);
        GlobalEmbedding<S> ge{std::vector<S>(g.v.begin(), g.v.end()), false};
        return {std::move(em), std::move(ge)};
    }

    std::string weights_hash() const {
        Sha256 h;
        h.update("text-encoder");
        h.update(&spec_.vocab_size, sizeof(spec_.vocab_size));
        h.update(&spec_.d, sizeof(spec_.d));
        h.update(&spec_.layers, sizeof(spec_.layers));
        h.update_mat(embed_);
        h.update_mat(eos_);
        for (const Layer& ly : layers_) {
            h.update_mat(ly.wq);
            h.update_mat(ly.wk);
            h.update_mat(ly.wv);
            h.update_mat(ly.wo);
            h.update_mat(ly.w1);
            h.update_mat(ly.b1);
            h.update_mat(ly.w2);
            h.update_mat(ly.b2);
        }
        h.update_mat(proj_);
        return h.hex();
    }

    static constexpr double kWeightScale = 0.02;
    // keep the position signal at the same magnitude as the embeddings so
    // neither drowns the other in the contextual mix
    static constexpr double kPosScale = 0.02;

   private:
    static Mat<S> position_table(int n, int d) {
        Mat<S> p(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                const double omega = std::pow(10000.0, -double(2 * (j / 2)) / d);
                const double angle = i * omega;
                p.at(i, j) =
                    static_cast<S>(kPosScale * (j % 2 == 0 ? std::sin(angle) : std::cos(angle)));
            }
        return p;
    }

    TextEncoderSpec spec_;
    Mat<S> embed_;  // vocab_size x d
    Mat<S> eos_;    // 1 x d
    std::vector<Layer> layers_;
    Mat<S> proj_;  // d x d, joint-space projection
    Mat<S> pos_;   // (max_len + 1) x d
};

}  // namespace incant
