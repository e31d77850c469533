#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "incant/denoiser.hpp"
#include "incant/errors.hpp"
#include "incant/rng.hpp"
#include "incant/schedule.hpp"
#include "incant/types.hpp"

namespace incant {

/*==================================== deterministic sampler ====================================*/

// Evenly spaced sub-schedule of `steps` timesteps from [1, T], always ending
// at T. round(i*T/steps) keeps the subset property: the set for k steps is
// contained in the set for m steps whenever k divides m.
inline std::vector<int> sub_schedule(int T, int steps) {
    if (steps < 1 || steps > T)
        throw input_error("sub_schedule: steps must lie in [1, T]");
    std::vector<int> taus;
    taus.reserve(static_cast<size_t>(steps));
    for (int i = 1; i <= steps; ++i)
        taus.push_back(static_cast<int>(std::llround(double(i) * T / steps)));
    for (size_t i = 1; i < taus.size(); ++i)
        if (taus[i] <= taus[i - 1]) throw numeric_error("sub_schedule: not strictly increasing");
    return taus;
}

// Closed form of iterating the forward process: sqrt(ab_t) x0 + sqrt(1-ab_t) eps.
template <typename S>
LatentImage<S> forward_noise(const LatentImage<S>& x0, int t, const LatentImage<S>& noise,
                             const NoiseSchedule<S>& sched) {
    sched.check_t(t, "forward_noise");
    if (x0.c != noise.c || x0.h != noise.h || x0.w != noise.w)
        throw input_error("forward_noise: noise shape mismatch");
    LatentImage<S> out(x0.c, x0.h, x0.w);
    const S a = sched.sqrt_ab(t);
    const S b = sched.sqrt_one_minus_ab(t);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * x0.v[i] + b * noise.v[i];
    out.timestep = (t == 0) ? LatentImage<S>::kClean : t;
    return out;
}

// Deterministic (variance-zero) reverse process over an even sub-schedule.
// Never touches the conditioning matrix: the backbone stays frozen.
template <typename S>
std::pair<LatentImage<S>, std::optional<AttentionRecord<S>>> sample(
    const Denoiser<S>& den, const LatentImage<S>& x_T, const Mat<S>& cond, int steps,
    const NoiseSchedule<S>& sched, bool capture = false) {
    if (x_T.c != den.spec().c || x_T.h != den.spec().h || x_T.w != den.spec().w)
        throw input_error("sample: latent shape mismatch");
    const std::vector<int> taus = sub_schedule(sched.T, steps);

    LatentImage<S> x = x_T;
    std::optional<AttentionRecord<S>> record;
    if (capture) record.emplace();

    for (int i = steps - 1; i >= 0; --i) {
        const int t_cur = taus[static_cast<size_t>(i)];
        const int t_prev = (i > 0) ? taus[static_cast<size_t>(i) - 1] : 0;
        auto [eps, attn] = den.predict_eps(x, cond, t_cur);
        if (record) record->steps.push_back(std::move(attn));

        const S sa_cur = sched.sqrt_ab(t_cur);
        const S sb_cur = sched.sqrt_one_minus_ab(t_cur);
        const S sa_prev = sched.sqrt_ab(t_prev);
        const S sb_prev = sched.sqrt_one_minus_ab(t_prev);
        for (size_t k = 0; k < x.v.size(); ++k) {
            const S x0_pred = (x.v[k] - sb_cur * eps.v[k]) / sa_cur;
            x.v[k] = sa_prev * x0_pred + sb_prev * eps.v[k];
        }
        if (!x.all_finite())
            throw numeric_error("sample: non-finite latent at step " +
                                std::to_string(steps - i) + " (t=" + std::to_string(t_cur) + ")");
    }
    x.timestep = LatentImage<S>::kClean;
    return {std::move(x), std::move(record)};
}

// Fresh terminal latent for the 2-step pipeline: forward-noise the clean
// sample back to t = T with a seeded draw.
template <typename S>
LatentImage<S> renoise(const LatentImage<S>& x0, const NoiseSchedule<S>& sched, uint64_t seed) {
    if (!x0.is_clean()) throw input_error("renoise: input must be a clean sample");
    LatentImage<S> noise(x0.c, x0.h, x0.w);
    Rng rng(seed);
    for (auto& v : noise.v) v = static_cast<S>(rng.normal());
    return forward_noise(x0, sched.T, noise, sched);
}

// "1step": one reverse pass; "2step": denoise, re-noise, denoise again.
// The attention record (if captured) comes from the final reverse pass.
template <typename S>
std::pair<LatentImage<S>, std::optional<AttentionRecord<S>>> run_pipeline(
    const Denoiser<S>& den, const LatentImage<S>& x_T, const Mat<S>& cond,
    const std::string& mode, int steps, const NoiseSchedule<S>& sched, uint64_t renoise_seed,
    bool capture = false, std::vector<std::string>* trace = nullptr) {
    auto note = [&](const std::string& s) {
        if (trace) trace->push_back(s);
    };
    if (mode == "1step") {
        note("sample(steps=" + std::to_string(steps) + ")");
        return sample(den, x_T, cond, steps, sched, capture);
    }
    if (mode == "2step") {
        note("sample(steps=" + std::to_string(steps) + ")");
        auto [mid, rec0] = sample(den, x_T, cond, steps, sched, false);
        note("renoise");
        LatentImage<S> x_T2 = renoise(mid, sched, renoise_seed);
        note("sample(steps=" + std::to_string(steps) + ")");
        return sample(den, x_T2, cond, steps, sched, capture);
    }
    throw input_error("pipeline: mode must be '1step' or '2step'");
}

}  // namespace incant
