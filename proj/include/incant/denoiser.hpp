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

/*==================================== toy denoiser ====================================*/
//
// Noise predictor over (h*w) x c grid rows: sinusoidal timestep features gate
// the first convolution (scale/shift), one cross-attention layer mixes in the
// conditioning rows, and a learned t-dependent gain on the x_t passthrough
// lets the model express the dominant linear component of epsilon.

struct DenoiserSpec {
    int c = 3, h = 8, w = 8;
    int d = 32;        // conditioning dimension (joint space)
    int t_dim = 8;     // sinusoidal timestep embedding size
    int t_feat = 16;   // timestep feature width
    int channels = 8;  // hidden channels
    int d_attn = 16;   // attention dimension
    uint64_t seed = 303;

    void validate() const {
        if (c < 1 || h < 1 || w < 1) throw input_error("denoiser: bad latent shape");
        if (d < 1 || t_dim < 1 || t_feat < 1 || channels < 1 || d_attn < 1)
            throw input_error("denoiser: bad dimensions");
    }
};

template <typename S>
struct DenoiserWeights {
    Mat<S> wt, bt;          // t_dim x t_feat, 1 x t_feat
    Mat<S> k1;              // 9c x channels
    Mat<S> w_scale, b_scale;  // t_feat x channels, 1 x channels
    Mat<S> w_shift, b_shift;  // t_feat x channels, 1 x channels
    Mat<S> wq, wk, wv, wo;  // ch x da, d x da, d x da, da x ch
    Mat<S> k2;              // 9ch x channels
    Mat<S> k3;              // 9ch x c
    Mat<S> w_gain, b_gain;  // t_feat x c, 1 x c

    std::vector<Mat<S>*> all() {
        return {&wt, &bt,      &k1, &w_scale, &b_scale, &w_shift, &b_shift, &wq,
                &wk, &wv,      &wo, &k2,      &k3,      &w_gain,  &b_gain};
    }
    std::vector<const Mat<S>*> all() const {
        return {&wt, &bt,      &k1, &w_scale, &b_scale, &w_shift, &b_shift, &wq,
                &wk, &wv,      &wo, &k2,      &k3,      &w_gain,  &b_gain};
    }
    static std::vector<const char*> names() {
        return {"wt", "bt", "k1", "w_scale", "b_scale", "w_shift", "b_shift", "wq",
                "wk", "wv", "wo", "k2",      "k3",      "w_gain",  "b_gain"};
    }
};

// Per-step cross-attention capture: each entry is (conditioning rows) x (h*w);
// every column (one latent position) is a distribution over the rows.
template <typename S>
struct AttentionRecord {
    std::vector<Mat<S>> steps;

    void validate(double tol = 1e-6) const {
        for (const Mat<S>& a : steps)
            for (int j = 0; j < a.cols; ++j) {
                double sum = 0;
                for (int i = 0; i < a.rows; ++i) {
                    if (a.at(i, j) < S(0))
                        throw numeric_error("attention record: negative weight");
                    sum += static_cast<double>(a.at(i, j));
                }
                if (std::abs(sum - 1.0) > tol)
                    throw numeric_error("attention record: column does not sum to 1");
            }
    }

    // average attention over steps: rows x (h*w)
    Mat<S> mean() const {
        if (steps.empty()) throw input_error("attention record: empty");
        Mat<S> m(steps[0].rows, steps[0].cols);
        for (const Mat<S>& a : steps)
            for (size_t k = 0; k < m.v.size(); ++k) m.v[k] += a.v[k];
        for (auto& x : m.v) x /= static_cast<S>(steps.size());
        return m;
    }
};

template <typename S>
class Denoiser {
   public:
    struct PushedWeights {
        std::vector<typename Tape<S>::id> ids;  // same order as DenoiserWeights::all()
    };

    struct Forward {
        typename Tape<S>::id eps = -1;   // (h*w) x c
        typename Tape<S>::id attn = -1;  // (h*w) x cond_rows
    };

    explicit Denoiser(DenoiserSpec spec) : spec_(spec) {
        spec_.validate();
        Rng rng(spec_.seed);
        const double s = kWeightScale;
        w_.wt = rng.normal_mat<S>(spec_.t_dim, spec_.t_feat, s);
        w_.bt = rng.normal_mat<S>(1, spec_.t_feat, s);
        w_.k1 = rng.normal_mat<S>(9 * spec_.c, spec_.channels, s);
        w_.w_scale = rng.normal_mat<S>(spec_.t_feat, spec_.channels, s);
        w_.b_scale = rng.normal_mat<S>(1, spec_.channels, s);
        w_.w_shift = rng.normal_mat<S>(spec_.t_feat, spec_.channels, s);
        w_.b_shift = rng.normal_mat<S>(1, spec_.channels, s);
        w_.wq = rng.normal_mat<S>(spec_.channels, spec_.d_attn, s);
        w_.wk = rng.normal_mat<S>(spec_.d, spec_.d_attn, s);
        w_.wv = rng.normal_mat<S>(spec_.d, spec_.d_attn, s);
        w_.wo = rng.normal_mat<S>(spec_.d_attn, spec_.channels, s);
        w_.k2 = rng.normal_mat<S>(9 * spec_.channels, spec_.channels, s);
        w_.k3 = rng.normal_mat<S>(9 * spec_.channels, spec_.c, s);
        w_.w_gain = rng.normal_mat<S>(spec_.t_feat, spec_.c, s);
        w_.b_gain = rng.normal_mat<S>(1, spec_.c, s);
    }

    const DenoiserSpec& spec() const { return spec_; }
    DenoiserWeights<S>& weights() { return w_; }
    const DenoiserWeights<S>& weights() const { return w_; }

    PushedWeights push_weights(Tape<S>& t, bool trainable) const {
        PushedWeights pw;
        for (const Mat<S>* m : w_.all())
            pw.ids.push_back(trainable ? t.param(*m) : t.constant(*m));
        return pw;
    }

    // Graph-mode forward. x: (h*w) x c node; cond: n x d node; 1 <= step_t.
    Forward forward_with(Tape<S>& t, typename Tape<S>::id x, typename Tape<S>::id cond,
                         int step_t, const PushedWeights& pw) const {
        if (step_t < 1) throw input_error("denoiser: timestep must be >= 1");
        if (t.value(x).rows != spec_.h * spec_.w || t.value(x).cols != spec_.c)
            throw input_error("denoiser: latent grid shape mismatch");
        if (t.value(cond).cols != spec_.d)
            throw input_error("denoiser: conditioning dimension mismatch");
        auto id_of = [&](int i) { return pw.ids[static_cast<size_t>(i)]; };
        // order matches DenoiserWeights::all()
        auto wt = id_of(0), bt = id_of(1), k1 = id_of(2), w_scale = id_of(3), b_scale = id_of(4),
             w_shift = id_of(5), b_shift = id_of(6), wq = id_of(7), wk = id_of(8), wv = id_of(9),
             wo = id_of(10), k2 = id_of(11), k3 = id_of(12), w_gain = id_of(13),
             b_gain = id_of(14);

        auto temb = t.constant(timestep_embedding(step_t));
        auto tfeat = t.tanh_(t.add(t.matmul(temb, wt), bt));  // 1 x t_feat

        auto h1 = t.conv3x3(x, k1, spec_.h, spec_.w);
        auto scale_row =
            t.add(t.add(t.matmul(tfeat, w_scale), b_scale), t.constant(ones(spec_.channels)));
        auto shift_row = t.add(t.matmul(tfeat, w_shift), b_shift);
        auto h1f = t.tanh_(t.add_rowvec(t.mul_rowvec(h1, scale_row), shift_row));

        const S inv_sqrt_da = S(1) / std::sqrt(static_cast<S>(spec_.d_attn));
        auto q = t.matmul(h1f, wq);
        auto k = t.matmul(cond, wk);
        auto v = t.matmul(cond, wv);
        Forward f;
        f.attn = t.row_softmax(t.scale(t.matmul(q, t.transpose(k)), inv_sqrt_da));
        auto h2 = t.add(h1f, t.matmul(t.matmul(f.attn, v), wo));

        auto h3 = t.tanh_(t.conv3x3(h2, k2, spec_.h, spec_.w));
        auto eps_raw = t.conv3x3(h3, k3, spec_.h, spec_.w);
        auto gain = t.tanh_(t.add(t.matmul(tfeat, w_gain), b_gain));  // 1 x c
        f.eps = t.add(eps_raw, t.mul_rowvec(x, gain));
        return f;
    }

    // Value-level prediction for sampling. Returns the epsilon estimate and
    // the attention map transposed to (cond rows) x (h*w).
    std::pair<LatentImage<S>, Mat<S>> predict_eps(const LatentImage<S>& x_t,
                                                  const Mat<S>& cond, int step_t) const {
        if (x_t.c != spec_.c || x_t.h != spec_.h || x_t.w != spec_.w)
            throw input_error("denoiser: latent shape mismatch");
        Tape<S> t;
        auto x = t.constant(x_t.as_grid_rows());
        auto c = t.constant(cond);
        Forward f = forward_with(t, x, c, step_t, push_weights(t, false));
        LatentImage<S> eps = LatentImage<S>::from_grid_rows(t.value(f.eps), spec_.c, spec_.h,
                                                            spec_.w, LatentImage<S>::kClean);
        return {std::move(eps), transpose(t.value(f.attn))};
    }

    std::string weights_hash() const {
        Sha256 h;
        h.update("denoiser");
        h.update(&spec_.c, sizeof(spec_.c));
        h.update(&spec_.h, sizeof(spec_.h));
        h.update(&spec_.w, sizeof(spec_.w));
        h.update(&spec_.d, sizeof(spec_.d));
        h.update(&spec_.channels, sizeof(spec_.channels));
        for (const Mat<S>* m : w_.all()) h.update_mat(*m);
        return h.hex();
    }

    Mat<S> timestep_embedding(int step_t) const {
        Mat<S> e(1, spec_.t_dim);
        for (int j = 0; j < spec_.t_dim; ++j) {
            const double omega = std::pow(10000.0, -double(2 * (j / 2)) / spec_.t_dim);
            const double angle = step_t * omega;
            e.v[static_cast<size_t>(j)] =
                static_cast<S>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
        return e;
    }

    static constexpr double kWeightScale = 0.02;

   private:
    static Mat<S> ones(int n) {
        Mat<S> m(1, n);
        for (auto& x : m.v) x = S(1);
        return m;
    }

    DenoiserSpec spec_;
    DenoiserWeights<S> w_;
};

}  // namespace incant
