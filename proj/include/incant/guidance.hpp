#pragma once
// Guidance signals that steer prompt optimization: the image-quality
// direction, its tape-side text counterpart, and similarity-driven word
// masking with an interpolated percentile threshold.

#include <algorithm>
#include <cmath>
#include <vector>

#include "incant/errors.hpp"
#include "incant/mat.hpp"
#include "incant/tape.hpp"
#include "incant/types.hpp"
#include "incant/vocab.hpp"

namespace incant {

/*==================================== quality direction ====================================*/

// normalize(e_fine) - normalize(e_coarse); plain values, never on a tape, so
// nothing downstream can backpropagate into the image branch.
template <typename S>
Mat<S> quality_direction(const GlobalEmbedding<S>& coarse, const GlobalEmbedding<S>& fine) {
    if (coarse.dim() != fine.dim())
        throw input_error("quality_direction: embedding dimension mismatch");
    auto unit = [](const GlobalEmbedding<S>& g) {
        Mat<S> r = g.as_row();
        const S n = norm2(r);
        if (n == S(0)) throw numeric_error("quality_direction: zero-norm embedding");
        for (auto& v : r.v) v /= n;
        return r;
    };
    Mat<S> dir = unit(fine);
    const Mat<S> c = unit(coarse);
    for (size_t i = 0; i < dir.v.size(); ++i) dir.v[i] -= c.v[i];
    return dir;
}

/*==================================== text direction ====================================*/

// normalize(e_hat_g) - normalize(e_g) on the tape; the reference embedding
// enters as a constant so gradient flows only through the prompt-augmented
// branch.
template <typename S>
typename Tape<S>::id text_direction(Tape<S>& t, typename Tape<S>::id e_hat_global,
                                    const Mat<S>& e_global) {
    Mat<S> base = e_global;
    if (base.rows != 1) throw input_error("text_direction: reference must be a single row");
    const S n = norm2(base);
    if (n == S(0)) throw numeric_error("text_direction: zero-norm reference embedding");
    for (auto& v : base.v) v /= n;
    const auto unit_hat = t.div_scalar(e_hat_global, t.l2norm(e_hat_global));
    return t.sub(unit_hat, t.constant(base));
}

/*==================================== percentile ====================================*/

// Linear-interpolated percentile of the sorted scores (index pct/100*(n-1)).
template <typename S>
S percentile_threshold(std::vector<S> scores, double pct) {
    if (scores.empty()) throw input_error("percentile_threshold: empty score vector");
    if (!(pct >= 0.0 && pct <= 100.0))
        throw input_error("percentile_threshold: percentile must be in [0, 100]");
    for (S s : scores)
        if (!std::isfinite(static_cast<double>(s)))
            throw numeric_error("percentile_threshold: non-finite score");
    std::sort(scores.begin(), scores.end());
    const double idx = pct / 100.0 * static_cast<double>(scores.size() - 1);
    const size_t lo = static_cast<size_t>(idx);
    if (lo + 1 >= scores.size()) return scores.back();
    const double frac = idx - static_cast<double>(lo);
    return static_cast<S>(static_cast<double>(scores[lo]) +
                          frac * (static_cast<double>(scores[lo + 1]) -
                                  static_cast<double>(scores[lo])));
}

/*==================================== masking ====================================*/

template <typename S>
struct MaskResult {
    TokenSequence tokens;        // input with low-scoring words replaced by the mask token
    std::vector<int> positions;  // masked indices, ascending
    S threshold = S(0);
};

// Words scoring strictly below gamma are replaced. Masking everything would
// leave no signal to optimize against, so that case aborts.
template <typename S>
MaskResult<S> mask_with_threshold(const TokenSequence& text, const std::vector<S>& scores,
                                  const Vocabulary& vocab, S gamma) {
    if (scores.size() != text.ids.size())
        throw input_error("mask_with_threshold: one score per word required");
    if (text.ids.empty()) throw input_error("mask_with_threshold: empty text");
    MaskResult<S> out;
    out.tokens = text;
    out.threshold = gamma;
    const int mask_id = vocab.mask_id();
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(static_cast<double>(scores[i])))
            throw numeric_error("mask_with_threshold: non-finite score");
        if (scores[i] < gamma) {
            out.tokens.ids[i] = mask_id;
            out.tokens.words[i] = vocab.word(mask_id);
            out.positions.push_back(static_cast<int>(i));
        }
    }
    if (out.positions.size() == text.ids.size())
        throw numeric_error("mask_with_threshold: degenerate mask (every word masked)");
    return out;
}

template <typename S>
MaskResult<S> mask_text(const TokenSequence& text, const std::vector<S>& scores,
                        const Vocabulary& vocab, double pct = 30.0) {
    return mask_with_threshold(text, scores, vocab, percentile_threshold(scores, pct));
}

}  // namespace incant
