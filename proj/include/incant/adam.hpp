#pragma once

#include <cmath>
#include <vector>

#include "incant/errors.hpp"
#include "incant/mat.hpp"

namespace incant {

// First-order adaptive-moment update (bias-corrected). One instance owns the
// moment state for a fixed set of parameter shapes.
template <typename S>
class Adam {
   public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void init(const std::vector<const Mat<S>*>& params) {
        m_.clear();
        v_.clear();
        for (const Mat<S>* p : params) {
            m_.emplace_back(p->rows, p->cols);
            v_.emplace_back(p->rows, p->cols);
        }
        t_ = 0;
    }

    void step(const std::vector<Mat<S>*>& params, const std::vector<const Mat<S>*>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw input_error("adam: parameter set changed size");
        ++t_;
        const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
        const S corr1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
        const S corr2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
        const S lr = static_cast<S>(lr_), eps = static_cast<S>(eps_);
        for (size_t i = 0; i < params.size(); ++i) {
            Mat<S>& p = *params[i];
            const Mat<S>& g = *grads[i];
            if (!p.same_shape(m_[i]) || !g.same_shape(m_[i]))
                throw input_error("adam: shape mismatch");
            for (size_t k = 0; k < p.v.size(); ++k) {
                m_[i].v[k] = b1 * m_[i].v[k] + (S(1) - b1) * g.v[k];
                v_[i].v[k] = b2 * v_[i].v[k] + (S(1) - b2) * g.v[k] * g.v[k];
                const S mhat = m_[i].v[k] / corr1;
                const S vhat = v_[i].v[k] / corr2;
                p.v[k] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    int step_count() const { return t_; }

   private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

}  // namespace incant
