#pragma once
// The five prompt-optimization loss terms and their weighted combination.
// Every builder returns a 1x1 tape node; minimizing the total pushes the
// prompt-augmented text embedding along the image-quality direction while
// staying close to the original text, the image, and the masked text, with
// decorrelated prompt rows.

#include <cmath>
#include <string>
#include <vector>

#include "incant/errors.hpp"
#include "incant/guidance.hpp"
#include "incant/mat.hpp"
#include "incant/tape.hpp"
#include "incant/types.hpp"

namespace incant {

/*==================================== term builders ====================================*/

// -(delta_img . delta_txt); the image direction enters as a constant.
template <typename S>
typename Tape<S>::id loss_quality(Tape<S>& t, typename Tape<S>::id delta_txt,
                                  const Mat<S>& delta_img) {
    return t.neg(t.dot(delta_txt, t.constant(delta_img)));
}

// -cos(e_hat_g, e_hat_mask_g); raw_dot swaps cosine for an unnormalized dot.
template <typename S>
typename Tape<S>::id loss_semantic(Tape<S>& t, typename Tape<S>::id e_hat_global,
                                   typename Tape<S>::id masked_global, bool raw_dot = false) {
    if (raw_dot) return t.neg(t.dot(e_hat_global, masked_global));
    return t.neg(t.cosine(e_hat_global, masked_global));
}

// -cos(e_hat_g, e_g): stay close to the unprompted text embedding.
template <typename S>
typename Tape<S>::id loss_text_text(Tape<S>& t, typename Tape<S>::id e_hat_global,
                                    const Mat<S>& text_global) {
    return t.neg(t.cosine(e_hat_global, t.constant(text_global)));
}

// -cos(e_hat_g, e_img).
template <typename S>
typename Tape<S>::id loss_text_image(Tape<S>& t, typename Tape<S>::id e_hat_global,
                                     const GlobalEmbedding<S>& image_global) {
    return t.neg(t.cosine(e_hat_global, t.constant(image_global.as_row())));
}

// sum over ordered pairs i != j of |cos| between contextualized prompt rows.
// Zero-norm rows cannot enter a cosine; their pairs are skipped and reported.
template <typename S>
typename Tape<S>::id loss_sparsity(Tape<S>& t, typename Tape<S>::id rows,
                                   const std::vector<RowRole>& roles,
                                   std::vector<std::string>* warnings = nullptr) {
    std::vector<int> prompt_rows;
    for (size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == RowRole::Prompt) prompt_rows.push_back(static_cast<int>(i));

    std::vector<typename Tape<S>::id> row_ids;
    std::vector<bool> usable;
    for (int r : prompt_rows) {
        auto rid = t.slice_rows(rows, r, r + 1);
        row_ids.push_back(rid);
        const bool ok = norm2(t.value(rid)) != S(0);
        usable.push_back(ok);
        if (!ok && warnings)
            warnings->push_back("sparsity: prompt row " + std::to_string(r) +
                                " has zero norm; its pairs are skipped");
    }

    typename Tape<S>::id acc = t.constant(Mat<S>(1, 1));
    for (size_t i = 0; i < row_ids.size(); ++i)
        for (size_t j = 0; j < row_ids.size(); ++j) {
            if (i == j || !usable[i] || !usable[j]) continue;
            acc = t.add(acc, t.abs_(t.cosine(row_ids[i], row_ids[j])));
        }
    return acc;
}

/*==================================== combination ====================================*/

template <typename S>
struct LossNodes {
    typename Tape<S>::id qual = -1, sem = -1, tt = -1, ti = -1, spar = -1;
    typename Tape<S>::id total = -1;
    std::vector<std::string> warnings;
};

namespace detail {

template <typename S>
S finite_term(const Tape<S>& t, typename Tape<S>::id node, const char* name) {
    const S v = t.value(node).v[0];
    if (!std::isfinite(static_cast<double>(v)))
        throw numeric_error(std::string("loss term '") + name + "' is non-finite");
    return v;
}

}  // namespace detail

// Weighted sum in a fixed left-to-right order so independent recomputations
// agree bitwise. Every term is built even at weight zero; a non-finite term
// aborts with its name.
template <typename S>
typename Tape<S>::id combine_losses(Tape<S>& t, LossNodes<S>& n, const GuidanceWeights& w) {
    detail::finite_term(t, n.qual, "qual");
    detail::finite_term(t, n.sem, "sem");
    detail::finite_term(t, n.tt, "tt");
    detail::finite_term(t, n.ti, "ti");
    detail::finite_term(t, n.spar, "spar");
    auto total = t.scale(n.qual, static_cast<S>(w.qual));
    total = t.add(total, t.scale(n.sem, static_cast<S>(w.sem)));
    total = t.add(total, t.scale(n.tt, static_cast<S>(w.tt)));
    total = t.add(total, t.scale(n.ti, static_cast<S>(w.ti)));
    total = t.add(total, t.scale(n.spar, static_cast<S>(w.spar)));
    n.total = total;
    return total;
}

/*==================================== composed build ====================================*/

template <typename S>
struct LossInputs {
    typename Tape<S>::id e_hat_global = -1;   // prompt-augmented text global
    typename Tape<S>::id masked_global = -1;  // prompt-augmented masked-text global
    typename Tape<S>::id rows = -1;           // contextualized rows, for sparsity
    std::vector<RowRole> roles;
    Mat<S> text_global;              // e_g, unprompted text (enters as constant)
    GlobalEmbedding<S> image_global; // e_img (enters as constant)
    Mat<S> quality_dir;              // normalized fine-minus-coarse image shift
    bool raw_dot_sem = false;
};

// Builds all five terms (regardless of weights) and their weighted total.
// A term that turns non-finite mid-construction aborts with the term's name.
template <typename S>
LossNodes<S> build_losses(Tape<S>& t, const LossInputs<S>& in, const GuidanceWeights& w) {
    LossNodes<S> n;
    auto wrap = [](const char* name, auto&& fn) {
        try {
            return fn();
        } catch (const numeric_error& e) {
            throw numeric_error(std::string("loss term '") + name + "': " + e.what());
        }
    };
    n.qual = wrap("qual", [&] {
        return loss_quality(t, text_direction(t, in.e_hat_global, in.text_global),
                            in.quality_dir);
    });
    n.sem = wrap("sem",
                 [&] { return loss_semantic(t, in.e_hat_global, in.masked_global, in.raw_dot_sem); });
    n.tt = wrap("tt", [&] { return loss_text_text(t, in.e_hat_global, in.text_global); });
    n.ti = wrap("ti", [&] { return loss_text_image(t, in.e_hat_global, in.image_global); });
    n.spar = wrap("spar", [&] { return loss_sparsity(t, in.rows, in.roles, &n.warnings); });
    combine_losses(t, n, w);
    return n;
}

template <typename S>
LossReport<S> extract_report(const Tape<S>& t, const LossNodes<S>& n, int iteration = 0) {
    LossReport<S> r;
    r.qual = t.value(n.qual).v[0];
    r.sem = t.value(n.sem).v[0];
    r.tt = t.value(n.tt).v[0];
    r.ti = t.value(n.ti).v[0];
    r.spar = t.value(n.spar).v[0];
    r.total = t.value(n.total).v[0];
    r.iteration = iteration;
    return r;
}

}  // namespace incant
