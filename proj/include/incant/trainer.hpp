#pragma once
// The two-stage per-input prompt optimization loop: stage 1 samples a coarse
// and a fine image from the same terminal noise and caches every embedding;
// stage 2 trains only the prompt rows against the five guidance losses,
// periodically regenerating the image with the current prompt. Frozen model
// weights are never touched.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "incant/adam.hpp"
#include "incant/backend.hpp"
#include "incant/guidance.hpp"
#include "incant/losses.hpp"
#include "incant/sampler.hpp"
#include "incant/types.hpp"

namespace incant {

/*==================================== stage 1 ====================================*/

template <typename S>
struct Stage1Cache {
    TokenSequence tokens;
    LatentImage<S> x_T;                       // shared by both samplers and stage 2
    LatentImage<S> x0_coarse, x0_fine;
    GlobalEmbedding<S> e_img_coarse, e_img_fine;
    Mat<S> quality_dir;                       // normalized fine-minus-coarse shift
    Mat<S> text_rows;                         // plain-text conditioning rows
    Mat<S> text_global;                       // e_g as a 1 x d row
    std::vector<S> scores;                    // word-image similarity vs the fine sample
    MaskResult<S> mask;
};

// Samples coarse and fine images from one seeded x_T and caches all derived
// embeddings. With a planted target, the embedding of a known prompt replaces
// the fine image embedding, giving the optimizer a reachable optimum.
template <typename S>
Stage1Cache<S> stage1(const ToyBackend<S>& be, const std::string& text, uint64_t seed) {
    const RunConfig& cfg = be.cfg;
    Stage1Cache<S> c;
    c.tokens = be.vocab.tokenize(text, cfg.encoder.n_max);

    c.x_T = LatentImage<S>(cfg.backend.latent_shape[0], cfg.backend.latent_shape[1],
                           cfg.backend.latent_shape[2]);
    Rng rng(derive_seed(seed, "x_T"));
    for (auto& v : c.x_T.v) v = static_cast<S>(rng.normal());
    c.x_T.timestep = cfg.schedule.T;

    auto enc = be.text_enc.encode_text(c.tokens);
    c.text_rows = enc.first.values;
    c.text_global = enc.second.as_row();

    c.x0_coarse =
        sample(be.denoiser, c.x_T, c.text_rows, cfg.schedule.T_coarse, be.schedule).first;
    c.x0_fine = sample(be.denoiser, c.x_T, c.text_rows, cfg.schedule.T_fine, be.schedule).first;
    c.e_img_coarse = be.image_enc.encode(c.x0_coarse);
    c.e_img_fine = be.image_enc.encode(c.x0_fine);

    if (cfg.training.planted_target) {
        Rng prng(derive_seed(seed, "planted"));
        Mat<S> pstar = prng.template normal_mat<S>(cfg.prompt.n_p, cfg.encoder.d, S(0.5));
        c.e_img_fine = be.text_enc.encode_text(c.tokens, &pstar).second;
        c.quality_dir = quality_direction(GlobalEmbedding<S>{c.text_global.v, false},
                                          c.e_img_fine);
    } else {
        c.quality_dir = quality_direction(c.e_img_coarse, c.e_img_fine);
    }

    c.scores = word_image_similarity(enc.first, c.e_img_fine).scores;
    c.mask = mask_text(c.tokens, c.scores, be.vocab, cfg.training.mask_percentile);
    return c;
}

/*==================================== stage 2 ====================================*/

template <typename S>
PromptState<S> init_prompt(const RunConfig& cfg, uint64_t seed) {
    Rng rng(derive_seed(seed, "prompt_init"));
    return PromptState<S>{
        rng.template normal_mat<S>(cfg.prompt.n_p, cfg.encoder.d,
                                   static_cast<S>(cfg.prompt.init_sigma)),
        0};
}

struct MaskEvent {
    int iteration = 0;
    std::vector<double> scores;
    double threshold = 0;
    std::vector<int> masked;
};

template <typename S>
struct OptimizationRun {
    std::string text;
    uint64_t seed = 0;
    Stage1Cache<S> cache;
    PromptState<S> prompt;
    std::vector<LossReport<S>> history;  // rows at iterations 0..N; row N is eval-only
    std::vector<MaskEvent> mask_events;
    bool aborted = false;
    std::string abort_reason;
};

// Runs N prompt updates. Every refresh_period iterations (and at iteration 0)
// the fine image is regenerated with the current prompt and the image
// embedding, quality direction, scores, and mask are recomputed; a period of
// 0 keeps the stage-1 values throughout. A numeric abort preserves the last
// good prompt and history.
template <typename S>
OptimizationRun<S> optimize_with_cache(const ToyBackend<S>& be, const std::string& text,
                                       uint64_t seed, Stage1Cache<S> cache) {
    const RunConfig& cfg = be.cfg;
    OptimizationRun<S> run;
    run.text = text;
    run.seed = seed;
    run.cache = std::move(cache);
    run.prompt = init_prompt<S>(cfg, seed);

    // image-derived state; refreshed between updates, constant on the tape
    GlobalEmbedding<S> e_img = run.cache.e_img_fine;
    Mat<S> quality_dir = run.cache.quality_dir;
    MaskResult<S> mask = run.cache.mask;
    std::vector<S> scores = run.cache.scores;

    const int N = cfg.training.iterations;
    const int K = cfg.training.refresh_period;
    Adam<S> adam(cfg.training.lr);
    adam.init({&run.prompt.values});

    auto record_mask_event = [&](int iter) {
        MaskEvent ev;
        ev.iteration = iter;
        ev.threshold = static_cast<double>(mask.threshold);
        for (S s : scores) ev.scores.push_back(static_cast<double>(s));
        ev.masked = mask.positions;
        run.mask_events.push_back(std::move(ev));
    };

    auto refresh = [&](int iter) {
        auto prompted = be.text_enc.encode_text(run.cache.tokens, &run.prompt.values);
        auto xhat = sample(be.denoiser, run.cache.x_T, prompted.first.values,
                           cfg.schedule.T_fine, be.schedule)
                        .first;
        e_img = be.image_enc.encode(xhat);
        quality_dir = quality_direction(run.cache.e_img_coarse, e_img);
        scores = word_image_similarity(prompted.first, e_img).scores;
        mask = mask_text(run.cache.tokens, scores, be.vocab, cfg.training.mask_percentile);
        record_mask_event(iter);
    };

    if (K == 0) record_mask_event(0);  // stage-1 masking rules the whole run

    auto eval_iteration = [&](int iter, bool update) {
        Tape<S> t;
        auto pid = t.param(run.prompt.values);
        auto full = be.text_enc.encode(t, run.cache.tokens, pid, {});
        auto masked_enc = be.text_enc.encode(t, run.cache.tokens, pid, mask.positions);
        LossInputs<S> in;
        in.e_hat_global = full.global;
        in.masked_global = masked_enc.global;
        in.rows = full.rows;
        in.roles = full.roles;
        in.text_global = run.cache.text_global;
        in.image_global = e_img;
        in.quality_dir = quality_dir;
        in.raw_dot_sem = cfg.training.raw_dot_sem;
        auto nodes = build_losses(t, in, cfg.weights);
        run.history.push_back(extract_report(t, nodes, iter));
        if (update) {
            t.backward(nodes.total);
            const Mat<S> g = t.grad(pid);
            adam.step({&run.prompt.values}, {&g});
            run.prompt.step_count += 1;
        }
    };

    try {
        for (int i = 0; i < N; ++i) {
            if (K > 0 && i % K == 0) refresh(i);
            eval_iteration(i, true);
        }
        eval_iteration(N, false);  // closing evaluation row, no update
    } catch (const numeric_error& e) {
        run.aborted = true;
        run.abort_reason = e.what();
    }
    return run;
}

template <typename S>
OptimizationRun<S> optimize(const ToyBackend<S>& be, const std::string& text, uint64_t seed) {
    return optimize_with_cache(be, text, seed, stage1(be, text, seed));
}

/*==================================== synthesis ====================================*/

// Final image from the cached x_T with the trained prompt, through the
// configured 1step/2step pipeline.
template <typename S>
std::pair<LatentImage<S>, std::optional<AttentionRecord<S>>> synthesize_final(
    const ToyBackend<S>& be, const OptimizationRun<S>& run, bool capture = false,
    std::vector<std::string>* trace = nullptr) {
    auto prompted = be.text_enc.encode_text(run.cache.tokens, &run.prompt.values);
    return run_pipeline(be.denoiser, run.cache.x_T, prompted.first.values,
                        be.cfg.training.pipeline, be.cfg.schedule.T_fine, be.schedule,
                        derive_seed(run.seed, "renoise"), capture, trace);
}

/*==================================== ablation ====================================*/

inline GuidanceWeights ablated_weights(const GuidanceWeights& w, const std::string& variant) {
    GuidanceWeights out = w;
    if (variant == "full") {
    } else if (variant == "no-qual") {
        out.qual = 0;
    } else if (variant == "no-sem") {
        out.sem = 0;
    } else if (variant == "no-tt") {
        out.tt = 0;
    } else if (variant == "no-ti") {
        out.ti = 0;
    } else if (variant == "no-spar") {
        out.spar = 0;
    } else {
        throw input_error("ablate: unknown variant '" + variant + "'");
    }
    out.validate();
    return out;
}

template <typename S>
struct AblationOutcome {
    OptimizationRun<S> run;
    LatentImage<S> image;
};

// One optimization per variant, all sharing the stage-1 cache and seed.
template <typename S>
std::map<std::string, AblationOutcome<S>> ablate(const ToyBackend<S>& be,
                                                 const std::string& text, uint64_t seed,
                                                 const std::vector<std::string>& variants) {
    if (variants.empty()) throw input_error("ablate: no variants requested");
    auto cache = stage1(be, text, seed);
    std::map<std::string, AblationOutcome<S>> out;
    for (const auto& v : variants) {
        if (out.count(v)) throw input_error("ablate: duplicate variant '" + v + "'");
        ToyBackend<S> vbe = be;  // frozen models copied, weights overridden
        vbe.cfg.weights = ablated_weights(be.cfg.weights, v);
        AblationOutcome<S> o;
        o.run = optimize_with_cache(vbe, text, seed, cache);
        o.image = synthesize_final(vbe, o.run).first;
        out.emplace(v, std::move(o));
    }
    return out;
}

}  // namespace incant
