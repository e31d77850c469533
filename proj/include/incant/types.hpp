#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "incant/errors.hpp"
#include "incant/mat.hpp"

namespace incant {

enum class RowRole : uint8_t { Word = 0, Prompt = 1, Mask = 2 };

inline const char* row_role_name(RowRole r) {
    switch (r) {
        case RowRole::Word: return "word";
        case RowRole::Prompt: return "prompt";
        case RowRole::Mask: return "mask";
    }
    return "?";
}

/*==================================== domain types ====================================*/

struct TokenSequence {
    std::vector<std::string> words;
    std::vector<int> ids;

    int length() const { return static_cast<int>(ids.size()); }

    void validate(int n_max, int vocab_size) const {
        if (words.size() != ids.size())
            throw input_error("TokenSequence: words/ids length mismatch");
        if (ids.empty() || length() > n_max)
            throw input_error("TokenSequence: length must be in [1, " + std::to_string(n_max) + "]");
        for (int id : ids)
            if (id < 0 || id >= vocab_size)
                throw input_error("TokenSequence: id out of vocabulary range");
    }
};

template <typename S>
struct EmbeddingMatrix {
    Mat<S> values;                // rows = sequence positions, cols = d
    std::vector<RowRole> roles;   // per-row tag

    int word_row_count() const {
        int n = 0;
        for (RowRole r : roles)
            if (r == RowRole::Word) ++n;
        return n;
    }

    void validate(int d) const {
        if (values.rows < 1) throw input_error("EmbeddingMatrix: needs at least one row");
        if (values.cols != d) throw input_error("EmbeddingMatrix: column count != d");
        if (static_cast<int>(roles.size()) != values.rows)
            throw input_error("EmbeddingMatrix: role per row required");
        if (!values.all_finite()) throw numeric_error("EmbeddingMatrix: non-finite entries");
    }
};

template <typename S>
struct GlobalEmbedding {
    std::vector<S> values;
    bool normalized = false;

    int dim() const { return static_cast<int>(values.size()); }

    Mat<S> as_row() const { return Mat<S>(1, dim(), values); }

    void validate() const {
        for (S x : values)
            if (!std::isfinite(static_cast<double>(x)))
                throw numeric_error("GlobalEmbedding: non-finite entry");
        if (normalized) {
            double n2 = 0;
            for (S x : values) n2 += static_cast<double>(x) * static_cast<double>(x);
            if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
                throw numeric_error("GlobalEmbedding: normalized flag set but norm != 1");
        }
    }
};

template <typename S>
struct PromptState {
    Mat<S> values;  // n_p x d, the only trainable parameters
    int step_count = 0;

    int n_p() const { return values.rows; }

    void validate() const {
        if (values.rows < 1) throw input_error("PromptState: n_p must be >= 1");
        if (!values.all_finite()) throw numeric_error("PromptState: non-finite entries");
    }
};

// Latent stored channel-major: v[(ci*h + y)*w + x], matching the export format.
template <typename S>
struct LatentImage {
    int c = 0, h = 0, w = 0;
    std::vector<S> v;
    int timestep = kClean;  // kClean means a clean sample (t = "clean")

    static constexpr int kClean = -1;

    LatentImage() = default;
    LatentImage(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, S(0)) {}

    size_t numel() const { return v.size(); }
    S& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    const S& at(int ci, int y, int x) const {
        return v[(static_cast<size_t>(ci) * h + y) * w + x];
    }
    bool is_clean() const { return timestep == kClean; }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    // (h*w) x c layout used by the denoiser (positions as rows)
    Mat<S> as_grid_rows() const {
        Mat<S> m(h * w, c);
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) m.at(y * w + x, ci) = at(ci, y, x);
        return m;
    }

    static LatentImage from_grid_rows(const Mat<S>& m, int c, int h, int w, int timestep) {
        LatentImage out(c, h, w);
        out.timestep = timestep;
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at(ci, y, x) = m.at(y * w + x, ci);
        return out;
    }
};

struct GuidanceWeights {
    double qual = 1.0;
    double sem = 0.5;
    double tt = 0.5;
    double ti = 0.5;
    double spar = 0.1;

    void validate() const {
        const double all[] = {qual, sem, tt, ti, spar};
        bool any_pos = false;
        for (double w : all) {
            if (!(w >= 0.0)) throw input_error("weights: every guidance weight must be >= 0");
            if (w > 0.0) any_pos = true;
        }
        if (!any_pos) throw input_error("weights: at least one guidance weight positive");
    }
};

template <typename S>
struct SimilarityScores {
    std::vector<S> scores;  // one per word of the original text
    S threshold = S(0);     // gamma

    void validate(int n_o) const {
        if (static_cast<int>(scores.size()) != n_o)
            throw input_error("SimilarityScores: length must equal text length");
        for (S s : scores)
            if (!std::isfinite(static_cast<double>(s)))
                throw numeric_error("SimilarityScores: non-finite score");
    }
};

template <typename S>
struct LossReport {
    S qual = 0, sem = 0, tt = 0, ti = 0, spar = 0;
    S total = 0;
    int iteration = 0;
};

/*==================================== serialization ====================================*/
//
// Scalars are written as doubles; float -> double -> float is lossless and
// nlohmann emits shortest round-trip representations, so every round trip
// is bit-exact.

template <typename S>
nlohmann::json mat_to_json(const Mat<S>& m) {
    std::vector<double> data(m.v.begin(), m.v.end());
    return nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", data}};
}

template <typename S>
Mat<S> mat_from_json(const nlohmann::json& j) {
    Mat<S> m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (data.size() != m.v.size()) throw input_error("mat_from_json: data size mismatch");
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = static_cast<S>(data[i].get<double>());
    return m;
}

inline void to_json(nlohmann::json& j, const TokenSequence& t) {
    j = nlohmann::json{{"words", t.words}, {"ids", t.ids}};
}
inline void from_json(const nlohmann::json& j, TokenSequence& t) {
    j.at("words").get_to(t.words);
    j.at("ids").get_to(t.ids);
}

inline void to_json(nlohmann::json& j, const GuidanceWeights& w) {
    j = nlohmann::json{{"qual", w.qual}, {"sem", w.sem}, {"tt", w.tt}, {"ti", w.ti}, {"spar", w.spar}};
}
inline void from_json(const nlohmann::json& j, GuidanceWeights& w) {
    j.at("qual").get_to(w.qual);
    j.at("sem").get_to(w.sem);
    j.at("tt").get_to(w.tt);
    j.at("ti").get_to(w.ti);
    j.at("spar").get_to(w.spar);
}

template <typename S>
nlohmann::json embedding_matrix_to_json(const EmbeddingMatrix<S>& e) {
    std::vector<int> roles;
    for (RowRole r : e.roles) roles.push_back(static_cast<int>(r));
    return nlohmann::json{{"values", mat_to_json(e.values)}, {"roles", roles}};
}
template <typename S>
EmbeddingMatrix<S> embedding_matrix_from_json(const nlohmann::json& j) {
    EmbeddingMatrix<S> e;
    e.values = mat_from_json<S>(j.at("values"));
    for (int r : j.at("roles").get<std::vector<int>>()) e.roles.push_back(static_cast<RowRole>(r));
    return e;
}

template <typename S>
nlohmann::json global_embedding_to_json(const GlobalEmbedding<S>& g) {
    std::vector<double> data(g.values.begin(), g.values.end());
    return nlohmann::json{{"values", data}, {"normalized", g.normalized}};
}
template <typename S>
GlobalEmbedding<S> global_embedding_from_json(const nlohmann::json& j) {
    GlobalEmbedding<S> g;
    for (const auto& x : j.at("values")) g.values.push_back(static_cast<S>(x.get<double>()));
    g.normalized = j.at("normalized").get<bool>();
    return g;
}

template <typename S>
nlohmann::json prompt_state_to_json(const PromptState<S>& p) {
    return nlohmann::json{{"values", mat_to_json(p.values)}, {"step_count", p.step_count}};
}
template <typename S>
PromptState<S> prompt_state_from_json(const nlohmann::json& j) {
    PromptState<S> p;
    p.values = mat_from_json<S>(j.at("values"));
    p.step_count = j.at("step_count").get<int>();
    return p;
}

template <typename S>
nlohmann::json latent_to_json(const LatentImage<S>& x) {
    std::vector<double> data(x.v.begin(), x.v.end());
    return nlohmann::json{
        {"c", x.c}, {"h", x.h}, {"w", x.w}, {"timestep", x.timestep}, {"data", data}};
}
template <typename S>
LatentImage<S> latent_from_json(const nlohmann::json& j) {
    LatentImage<S> x(j.at("c").get<int>(), j.at("h").get<int>(), j.at("w").get<int>());
    x.timestep = j.at("timestep").get<int>();
    const auto& data = j.at("data");
    if (data.size() != x.v.size()) throw input_error("latent_from_json: data size mismatch");
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = static_cast<S>(data[i].get<double>());
    return x;
}

template <typename S>
nlohmann::json similarity_scores_to_json(const SimilarityScores<S>& s) {
    std::vector<double> data(s.scores.begin(), s.scores.end());
    return nlohmann::json{{"scores", data}, {"threshold", static_cast<double>(s.threshold)}};
}
template <typename S>
SimilarityScores<S> similarity_scores_from_json(const nlohmann::json& j) {
    SimilarityScores<S> s;
    for (const auto& x : j.at("scores")) s.scores.push_back(static_cast<S>(x.get<double>()));
    s.threshold = static_cast<S>(j.at("threshold").get<double>());
    return s;
}

}  // namespace incant
