#pragma once
// One construction point for the frozen toy models: vocabulary, text/image
// encoders, noise schedule, and a denoiser whose trained weights live under
// a content-addressed cache path, so every command is deterministic from a
// cold start.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "incant/blobs.hpp"
#include "incant/config.hpp"
#include "incant/denoiser.hpp"
#include "incant/denoiser_train.hpp"
#include "incant/hash.hpp"
#include "incant/image_encoder.hpp"
#include "incant/rng.hpp"
#include "incant/schedule.hpp"
#include "incant/text_encoder.hpp"
#include "incant/vocab.hpp"

namespace incant {

/*==================================== cache ====================================*/

inline std::string resolve_cache_dir(const RunConfig& cfg) {
    if (!cfg.io.cache_dir.empty()) return cfg.io.cache_dir;
    if (const char* env = std::getenv("INCANT_CACHE"); env && *env) return env;
    return ".incant-cache";
}

// Everything the trained denoiser weights depend on, hashed into the cache
// key: architecture, seeds, schedule, training recipe, conditioning encoder,
// vocabulary content, and scalar precision.
inline std::string denoiser_cache_key(const RunConfig& cfg, const Vocabulary& vocab) {
    std::string words;
    for (const auto& w : vocab.all_words()) {
        words += w;
        words += '\n';
    }
    const nlohmann::json j{{"latent_shape", cfg.backend.latent_shape},
                           {"d", cfg.encoder.d},
                           {"denoiser_seed", cfg.backend.denoiser_seed},
                           {"text_encoder_seed", cfg.backend.text_encoder_seed},
                           {"encoder_layers", cfg.encoder.layers},
                           {"encoder_d_ff", cfg.encoder.d_ff},
                           {"encoder_max_len", cfg.encoder.max_len},
                           {"T", cfg.schedule.T},
                           {"beta_start", cfg.schedule.beta_start},
                           {"beta_end", cfg.schedule.beta_end},
                           {"steps", cfg.training.denoiser_steps},
                           {"dataset", cfg.training.denoiser_dataset},
                           {"lr", cfg.training.denoiser_lr},
                           {"batch", cfg.training.denoiser_batch},
                           {"precision", cfg.backend.precision},
                           {"vocab_sha256", sha256_hex(words)}};
    return sha256_hex(j.dump());
}

namespace detail {

template <typename S>
nlohmann::json denoiser_weights_to_json(const DenoiserWeights<S>& w) {
    nlohmann::json j;
    auto mats = w.all();
    const auto& names = DenoiserWeights<S>::names();
    for (size_t i = 0; i < mats.size(); ++i) j[names[i]] = mat_to_json(*mats[i]);
    return j;
}

template <typename S>
void denoiser_weights_from_json(DenoiserWeights<S>& w, const nlohmann::json& j) {
    auto mats = w.all();
    const auto& names = DenoiserWeights<S>::names();
    for (size_t i = 0; i < mats.size(); ++i) {
        if (!j.contains(names[i]))
            throw input_error("denoiser cache: missing matrix '" + std::string(names[i]) + "'");
        Mat<S> m = mat_from_json<S>(j.at(names[i]));
        if (m.rows != mats[i]->rows || m.cols != mats[i]->cols)
            throw input_error("denoiser cache: shape mismatch for '" + std::string(names[i]) +
                              "'");
        *mats[i] = std::move(m);
    }
}

}  // namespace detail

/*==================================== backend ====================================*/

template <typename S>
struct ToyBackend {
    Vocabulary vocab;
    TextEncoder<S> text_enc;
    ImageEncoder<S> image_enc;
    Denoiser<S> denoiser;
    NoiseSchedule<S> schedule;
    RunConfig cfg;
};

// Builds all frozen models from the config. When denoiser training is
// enabled, trained weights are loaded from the cache or trained once and
// stored there.
template <typename S>
ToyBackend<S> make_backend(const RunConfig& cfg) {
    Vocabulary vocab =
        cfg.io.vocab_path.empty() ? Vocabulary::builtin() : Vocabulary::load(cfg.io.vocab_path);

    TextEncoderSpec tspec;
    tspec.vocab_size = vocab.size();
    tspec.d = cfg.encoder.d;
    tspec.max_len = cfg.encoder.max_len;
    tspec.layers = cfg.encoder.layers;
    tspec.d_ff = cfg.encoder.d_ff;
    tspec.mask_token_id = vocab.mask_id();
    tspec.seed = cfg.backend.text_encoder_seed;
    TextEncoder<S> text_enc(tspec);

    ImageEncoderSpec ispec;
    ispec.c = cfg.backend.latent_shape[0];
    ispec.h = cfg.backend.latent_shape[1];
    ispec.w = cfg.backend.latent_shape[2];
    ispec.d = cfg.backend.image_d == -1 ? cfg.encoder.d : cfg.backend.image_d;
    ispec.hidden = cfg.backend.image_hidden;
    ispec.seed = cfg.backend.image_encoder_seed;
    ImageEncoder<S> image_enc(ispec);

    DenoiserSpec dspec;
    dspec.c = ispec.c;
    dspec.h = ispec.h;
    dspec.w = ispec.w;
    dspec.d = cfg.encoder.d;
    dspec.seed = cfg.backend.denoiser_seed;
    Denoiser<S> denoiser(dspec);

    auto schedule =
        NoiseSchedule<S>::linear(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);

    if (cfg.training.denoiser_steps > 0) {
        namespace fs = std::filesystem;
        const fs::path dir = resolve_cache_dir(cfg);
        const fs::path path = dir / ("denoiser-" + denoiser_cache_key(cfg, vocab) + ".json");
        if (fs::exists(path)) {
            std::ifstream in(path);
            nlohmann::json j;
            in >> j;
            detail::denoiser_weights_from_json(denoiser.weights(), j);
        } else {
            auto blobs = make_blob_dataset<S>(static_cast<size_t>(cfg.training.denoiser_dataset),
                                              dspec.c, dspec.h, dspec.w,
                                              derive_seed(cfg.backend.denoiser_seed, "blobs"),
                                              vocab);
            std::vector<DenoiserTrainSample<S>> data;
            data.reserve(blobs.size());
            for (auto& b : blobs)
                data.push_back({std::move(b.x0), text_enc.encode_text(b.caption).first.values});
            train_toy_denoiser(denoiser, data, schedule, cfg.training.denoiser_steps,
                               cfg.backend.denoiser_seed, cfg.training.denoiser_lr,
                               cfg.training.denoiser_batch);
            fs::create_directories(dir);
            const fs::path tmp = path.string() + ".tmp";
            {
                std::ofstream out(tmp);
                out << detail::denoiser_weights_to_json(denoiser.weights()).dump(1);
            }
            fs::rename(tmp, path);
        }
    }

    return ToyBackend<S>{std::move(vocab), std::move(text_enc), std::move(image_enc),
                         std::move(denoiser), std::move(schedule), cfg};
}

}  // namespace incant
