#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "incant/adam.hpp"
#include "incant/denoiser.hpp"
#include "incant/errors.hpp"
#include "incant/rng.hpp"
#include "incant/sampler.hpp"
#include "incant/schedule.hpp"

namespace incant {

/*==================================== toy denoiser training ====================================*/

template <typename S>
struct DenoiserTrainSample {
    LatentImage<S> x0;
    Mat<S> cond;  // caption's contextual rows in the joint space
};

struct DenoiserTrainReport {
    double initial_loss = 0;
    double final_loss = 0;
    int steps = 0;
};

namespace detail {

// Fixed held-out pairs (sample, t, noise) so the before/after comparison is
// an honest oracle rather than a moving batch estimate.
template <typename S>
struct EvalSet {
    std::vector<int> index;
    std::vector<int> t;
    std::vector<LatentImage<S>> noise;
};

template <typename S>
EvalSet<S> make_eval_set(const std::vector<DenoiserTrainSample<S>>& data, int T, uint64_t seed) {
    EvalSet<S> ev;
    const int n = std::min<int>(64, static_cast<int>(data.size()));
    Rng rng(derive_seed(seed, "eval"));
    for (int i = 0; i < n; ++i) {
        ev.index.push_back(i);
        ev.t.push_back(1 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(T)));
        LatentImage<S> eps(data[0].x0.c, data[0].x0.h, data[0].x0.w);
        for (auto& v : eps.v) v = static_cast<S>(rng.normal());
        ev.noise.push_back(std::move(eps));
    }
    return ev;
}

template <typename S>
double eval_loss(const Denoiser<S>& den, const std::vector<DenoiserTrainSample<S>>& data,
                 const NoiseSchedule<S>& sched, const EvalSet<S>& ev) {
    double total = 0;
    for (size_t i = 0; i < ev.index.size(); ++i) {
        const auto& sample = data[static_cast<size_t>(ev.index[i])];
        LatentImage<S> x_t = forward_noise(sample.x0, ev.t[i], ev.noise[i], sched);
        auto [eps_hat, attn] = den.predict_eps(x_t, sample.cond, ev.t[i]);
        double se = 0;
        for (size_t k = 0; k < eps_hat.v.size(); ++k) {
            const double d = static_cast<double>(eps_hat.v[k]) -
                             static_cast<double>(ev.noise[i].v[k]);
            se += d * d;
        }
        total += se / static_cast<double>(eps_hat.numel());
    }
    return total / static_cast<double>(ev.index.size());
}

}  // namespace detail

// Minimizes the mean-squared noise-prediction error with Adam on mini-batches
// of (x0, t, eps) triples. Only the denoiser weights move; conditioning stays
// frozen. Zero steps leaves the weights untouched.
template <typename S>
DenoiserTrainReport train_toy_denoiser(Denoiser<S>& den,
                                       const std::vector<DenoiserTrainSample<S>>& data,
                                       const NoiseSchedule<S>& sched, int steps, uint64_t seed,
                                       double lr = 3e-3, int batch = 8) {
    if (data.empty()) throw input_error("denoiser training: empty dataset");
    if (steps < 0) throw input_error("denoiser training: negative step count");
    if (batch < 1) throw input_error("denoiser training: batch must be >= 1");
    for (const auto& s : data)
        if (s.x0.c != den.spec().c || s.x0.h != den.spec().h || s.x0.w != den.spec().w)
            throw input_error("denoiser training: sample shape mismatch");

    const auto ev = detail::make_eval_set(data, sched.T, seed);
    DenoiserTrainReport report;
    report.initial_loss = detail::eval_loss(den, data, sched, ev);
    report.steps = steps;

    Adam<S> adam(lr);
    {
        std::vector<const Mat<S>*> params;
        for (Mat<S>* m : den.weights().all()) params.push_back(m);
        adam.init(params);
    }

    Rng rng(derive_seed(seed, "train"));
    const int width = den.spec().h * den.spec().w;
    for (int s = 0; s < steps; ++s) {
        Tape<S> t;
        auto pw = den.push_weights(t, true);
        typename Tape<S>::id loss = -1;
        const S scale = S(1) / static_cast<S>(batch * width * den.spec().c);
        for (int b = 0; b < batch; ++b) {
            const auto& sample = data[rng.next_u64() % data.size()];
            const int step_t = 1 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(sched.T));
            LatentImage<S> eps(sample.x0.c, sample.x0.h, sample.x0.w);
            for (auto& v : eps.v) v = static_cast<S>(rng.normal());
            LatentImage<S> x_t = forward_noise(sample.x0, step_t, eps, sched);

            auto x = t.constant(x_t.as_grid_rows());
            auto cond = t.constant(sample.cond);
            auto f = den.forward_with(t, x, cond, step_t, pw);
            auto term = t.scale(t.sumsq(t.sub(f.eps, t.constant(eps.as_grid_rows()))), scale);
            loss = (loss < 0) ? term : t.add(loss, term);
        }
        if (!std::isfinite(static_cast<double>(t.value(loss).v[0])))
            throw numeric_error("denoiser training: loss diverged at step " + std::to_string(s));
        t.backward(loss);

        std::vector<Mat<S>*> params = den.weights().all();
        std::vector<const Mat<S>*> grads;
        for (auto id : pw.ids) grads.push_back(&t.grad(id));
        adam.step(params, grads);
    }

    report.final_loss = steps > 0 ? detail::eval_loss(den, data, sched, ev) : report.initial_loss;
    return report;
}

}  // namespace incant
