#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "incant/errors.hpp"
#include "incant/types.hpp"

namespace incant {

// Resolved run configuration. The JSON document mirrors this nesting:
// top-level keys {backend, schedule, encoder, prompt, weights, training, io};
// unknown keys anywhere are rejected.
struct RunConfig {
    struct Backend {
        std::array<int, 3> latent_shape{3, 8, 8};
        std::string precision = "f32";  // "f64" in test mode
        bool attention_capture = true;
        uint64_t text_encoder_seed = 101;
        uint64_t image_encoder_seed = 202;
        uint64_t denoiser_seed = 303;
        int image_hidden = 64;
        int image_d = -1;  // -1 = follow encoder.d; explicit value must match
    } backend;

    struct Schedule {
        int T = 100;
        double beta_start = 1e-4;
        double beta_end = 0.02;
        int T_coarse = 10;
        int T_fine = 50;
    } schedule;

    struct Encoder {
        int d = 32;
        int n_max = 16;
        int max_len = 20;
        int d_ff = 64;
        int layers = 1;
    } encoder;

    struct Prompt {
        int n_p = 4;
        double init_sigma = 0.02;
    } prompt;

    GuidanceWeights weights;

    struct Training {
        int iterations = 100;
        double lr = 1e-2;
        int refresh_period = 25;  // 0 = never refresh
        double mask_percentile = 30.0;
        bool raw_dot_sem = false;
        bool planted_target = false;
        std::string pipeline = "1step";
        int denoiser_steps = 2000;
        int denoiser_dataset = 256;
        double denoiser_lr = 3e-3;
        int denoiser_batch = 8;
    } training;

    struct Io {
        std::string vocab_path;
        int png_scale = 16;
        std::string cache_dir;
    } io;

    nlohmann::json to_json() const;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                           const std::string& path) {
    if (!j.is_object()) throw input_error("config: " + path + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw input_error("config: unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
        throw input_error("config: bad value for " + path + "." + key);
    }
}

}  // namespace detail

inline nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["backend"] = {{"latent_shape", backend.latent_shape},
                    {"precision", backend.precision},
                    {"attention_capture", backend.attention_capture},
                    {"text_encoder_seed", backend.text_encoder_seed},
                    {"image_encoder_seed", backend.image_encoder_seed},
                    {"denoiser_seed", backend.denoiser_seed},
                    {"image_hidden", backend.image_hidden},
                    {"image_d", backend.image_d}};
    j["schedule"] = {{"T", schedule.T},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end},
                     {"T_coarse", schedule.T_coarse},
                     {"T_fine", schedule.T_fine}};
    j["encoder"] = {{"d", encoder.d},
                    {"n_max", encoder.n_max},
                    {"max_len", encoder.max_len},
                    {"d_ff", encoder.d_ff},
                    {"layers", encoder.layers}};
    j["prompt"] = {{"n_p", prompt.n_p}, {"init_sigma", prompt.init_sigma}};
    j["weights"] = weights;
    j["training"] = {{"iterations", training.iterations},
                     {"lr", training.lr},
                     {"refresh_period", training.refresh_period},
                     {"mask_percentile", training.mask_percentile},
                     {"raw_dot_sem", training.raw_dot_sem},
                     {"planted_target", training.planted_target},
                     {"pipeline", training.pipeline},
                     {"denoiser_steps", training.denoiser_steps},
                     {"denoiser_dataset", training.denoiser_dataset},
                     {"denoiser_lr", training.denoiser_lr},
                     {"denoiser_batch", training.denoiser_batch}};
    j["io"] = {{"vocab_path", io.vocab_path},
               {"png_scale", io.png_scale},
               {"cache_dir", io.cache_dir}};
    return j;
}

// Parses a raw configuration document, fills defaults, cross-checks every
// dimensional constraint. Throws input_error with the offending field path.
inline RunConfig validate_config(const nlohmann::json& doc) {
    using detail::read_field;
    using detail::reject_unknown;

    reject_unknown(doc, {"backend", "schedule", "encoder", "prompt", "weights", "training", "io"},
                   "");
    RunConfig c;

    if (doc.contains("backend")) {
        const auto& j = doc.at("backend");
        reject_unknown(j,
                       {"latent_shape", "precision", "attention_capture", "text_encoder_seed",
                        "image_encoder_seed", "denoiser_seed", "image_hidden", "image_d"},
                       "backend");
        read_field(j, "latent_shape", c.backend.latent_shape, "backend");
        read_field(j, "precision", c.backend.precision, "backend");
        read_field(j, "attention_capture", c.backend.attention_capture, "backend");
        read_field(j, "text_encoder_seed", c.backend.text_encoder_seed, "backend");
        read_field(j, "image_encoder_seed", c.backend.image_encoder_seed, "backend");
        read_field(j, "denoiser_seed", c.backend.denoiser_seed, "backend");
        read_field(j, "image_hidden", c.backend.image_hidden, "backend");
        read_field(j, "image_d", c.backend.image_d, "backend");
    }
    if (doc.contains("schedule")) {
        const auto& j = doc.at("schedule");
        reject_unknown(j, {"T", "beta_start", "beta_end", "T_coarse", "T_fine"}, "schedule");
        read_field(j, "T", c.schedule.T, "schedule");
        read_field(j, "beta_start", c.schedule.beta_start, "schedule");
        read_field(j, "beta_end", c.schedule.beta_end, "schedule");
        read_field(j, "T_coarse", c.schedule.T_coarse, "schedule");
        read_field(j, "T_fine", c.schedule.T_fine, "schedule");
    }
    if (doc.contains("encoder")) {
        const auto& j = doc.at("encoder");
        reject_unknown(j, {"d", "n_max", "max_len", "d_ff", "layers"}, "encoder");
        read_field(j, "d", c.encoder.d, "encoder");
        read_field(j, "n_max", c.encoder.n_max, "encoder");
        read_field(j, "max_len", c.encoder.max_len, "encoder");
        read_field(j, "d_ff", c.encoder.d_ff, "encoder");
        read_field(j, "layers", c.encoder.layers, "encoder");
    }
    if (doc.contains("prompt")) {
        const auto& j = doc.at("prompt");
        reject_unknown(j, {"n_p", "init_sigma"}, "prompt");
        read_field(j, "n_p", c.prompt.n_p, "prompt");
        read_field(j, "init_sigma", c.prompt.init_sigma, "prompt");
    }
    if (doc.contains("weights")) {
        const auto& j = doc.at("weights");
        reject_unknown(j, {"qual", "sem", "tt", "ti", "spar"}, "weights");
        read_field(j, "qual", c.weights.qual, "weights");
        read_field(j, "sem", c.weights.sem, "weights");
        read_field(j, "tt", c.weights.tt, "weights");
        read_field(j, "ti", c.weights.ti, "weights");
        read_field(j, "spar", c.weights.spar, "weights");
    }
    if (doc.contains("training")) {
        const auto& j = doc.at("training");
        reject_unknown(j,
                       {"iterations", "lr", "refresh_period", "mask_percentile", "raw_dot_sem",
                        "planted_target", "pipeline", "denoiser_steps", "denoiser_dataset",
                        "denoiser_lr", "denoiser_batch"},
                       "training");
        read_field(j, "iterations", c.training.iterations, "training");
        read_field(j, "lr", c.training.lr, "training");
        read_field(j, "refresh_period", c.training.refresh_period, "training");
        read_field(j, "mask_percentile", c.training.mask_percentile, "training");
        read_field(j, "raw_dot_sem", c.training.raw_dot_sem, "training");
        read_field(j, "planted_target", c.training.planted_target, "training");
        read_field(j, "pipeline", c.training.pipeline, "training");
        read_field(j, "denoiser_steps", c.training.denoiser_steps, "training");
        read_field(j, "denoiser_dataset", c.training.denoiser_dataset, "training");
        read_field(j, "denoiser_lr", c.training.denoiser_lr, "training");
        read_field(j, "denoiser_batch", c.training.denoiser_batch, "training");
    }
    if (doc.contains("io")) {
        const auto& j = doc.at("io");
        reject_unknown(j, {"vocab_path", "png_scale", "cache_dir"}, "io");
        read_field(j, "vocab_path", c.io.vocab_path, "io");
        read_field(j, "png_scale", c.io.png_scale, "io");
        read_field(j, "cache_dir", c.io.cache_dir, "io");
    }

    // dimensional cross-checks
    if (c.encoder.d < 1) throw input_error("encoder.d must be >= 1");
    if (c.encoder.n_max < 1) throw input_error("encoder.n_max must be >= 1");
    if (c.encoder.d_ff < 1) throw input_error("encoder.d_ff must be >= 1");
    if (c.encoder.layers < 1) throw input_error("encoder.layers must be >= 1");
    if (c.prompt.n_p < 1) throw input_error("prompt.n_p must be >= 1");
    if (c.backend.image_d >= 0 && c.backend.image_d != c.encoder.d)
        throw input_error("backend.image_d: dimension mismatch with encoder.d");
    for (int s : c.backend.latent_shape)
        if (s < 1) throw input_error("backend.latent_shape entries must be >= 1");
    if (c.backend.precision != "f32" && c.backend.precision != "f64")
        throw input_error("backend.precision must be 'f32' or 'f64'");
    if (c.encoder.max_len < c.encoder.n_max + c.prompt.n_p)
        throw input_error("encoder.max_len: must be >= n_max + n_p");
    if (c.schedule.T < 1) throw input_error("schedule.T must be >= 1");
    if (!(c.schedule.beta_start > 0.0 && c.schedule.beta_start < 1.0) ||
        !(c.schedule.beta_end > 0.0 && c.schedule.beta_end < 1.0))
        throw input_error("schedule.beta_start/beta_end must lie in (0,1)");
    if (c.schedule.T_coarse < 1) throw input_error("schedule.T_coarse must be >= 1");
    if (c.schedule.T_coarse >= c.schedule.T_fine)
        throw input_error("T_coarse must be < T_fine");
    if (c.schedule.T_fine > c.schedule.T) throw input_error("schedule.T_fine must be <= T");
    c.weights.validate();
    if (c.training.iterations < 0) throw input_error("training.iterations must be >= 0");
    if (!(c.training.lr > 0)) throw input_error("training.lr must be > 0");
    if (c.training.refresh_period < 0) throw input_error("training.refresh_period must be >= 0");
    if (c.training.mask_percentile < 0 || c.training.mask_percentile > 100)
        throw input_error("training.mask_percentile must lie in [0,100]");
    if (c.training.pipeline != "1step" && c.training.pipeline != "2step")
        throw input_error("training.pipeline must be '1step' or '2step'");
    if (c.training.planted_target && c.training.refresh_period != 0)
        throw input_error("training.planted_target requires refresh_period = 0");
    if (c.training.denoiser_steps < 0) throw input_error("training.denoiser_steps must be >= 0");
    if (c.training.denoiser_dataset < 1)
        throw input_error("training.denoiser_dataset must be >= 1");
    if (!(c.training.denoiser_lr > 0)) throw input_error("training.denoiser_lr must be > 0");
    if (c.training.denoiser_batch < 1) throw input_error("training.denoiser_batch must be >= 1");
    if (c.io.png_scale < 1) throw input_error("io.png_scale must be >= 1");
    return c;
}

inline RunConfig validate_config_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("config: invalid JSON: ") + e.what());
    }
    return validate_config(doc);
}

}  // namespace incant
