#pragma once

#include <cmath>
#include <vector>

#include "incant/errors.hpp"

namespace incant {

// Forward-process noise schedule. Index convention: beta[t] and alpha_bar[t]
// are defined for t in 1..T; alpha_bar[0] == 1 (the clean image).
template <typename S>
struct NoiseSchedule {
    int T = 0;
    std::vector<S> beta;       // size T+1, beta[0] unused (= 0)
    std::vector<S> alpha_bar;  // size T+1, alpha_bar[0] = 1

    // beta_t linearly interpolated from beta_start (t=1) to beta_end (t=T);
    // alpha_bar by the exact product recurrence so tests can replay it bitwise.
    static NoiseSchedule linear(int T, S beta_start, S beta_end) {
        if (T < 1) throw input_error("schedule: T must be >= 1");
        if (!(beta_start > S(0) && beta_start < S(1)) || !(beta_end > S(0) && beta_end < S(1)))
            throw input_error("schedule: beta bounds must lie in (0,1)");
        NoiseSchedule s;
        s.T = T;
        s.beta.assign(static_cast<size_t>(T) + 1, S(0));
        s.alpha_bar.assign(static_cast<size_t>(T) + 1, S(1));
        for (int t = 1; t <= T; ++t) {
            S frac = (T == 1) ? S(0) : S(t - 1) / S(T - 1);
            s.beta[static_cast<size_t>(t)] = beta_start + frac * (beta_end - beta_start);
            s.alpha_bar[static_cast<size_t>(t)] =
                s.alpha_bar[static_cast<size_t>(t) - 1] * (S(1) - s.beta[static_cast<size_t>(t)]);
        }
        s.validate();
        return s;
    }

    void validate() const {
        if (T < 1 || beta.size() != static_cast<size_t>(T) + 1 ||
            alpha_bar.size() != static_cast<size_t>(T) + 1)
            throw input_error("schedule: inconsistent sizes");
        if (alpha_bar[0] != S(1)) throw input_error("schedule: alpha_bar[0] must equal 1");
        for (int t = 1; t <= T; ++t) {
            S b = beta[static_cast<size_t>(t)];
            if (!(b > S(0) && b < S(1)))
                throw input_error("schedule: beta out of (0,1) at t=" + std::to_string(t));
            if (!(alpha_bar[static_cast<size_t>(t)] < alpha_bar[static_cast<size_t>(t) - 1]))
                throw input_error("schedule: alpha_bar not strictly decreasing at t=" +
                                  std::to_string(t));
            if (!(alpha_bar[static_cast<size_t>(t)] > S(0)))
                throw input_error("schedule: alpha_bar must stay positive");
        }
    }

    S sqrt_ab(int t) const { return std::sqrt(alpha_bar.at(static_cast<size_t>(t))); }
    S sqrt_one_minus_ab(int t) const {
        return std::sqrt(S(1) - alpha_bar.at(static_cast<size_t>(t)));
    }

    void check_t(int t, const char* who) const {
        if (t < 0 || t > T)
            throw input_error(std::string(who) + ": timestep " + std::to_string(t) +
                              " outside [0," + std::to_string(T) + "]");
    }
};

}  // namespace incant
