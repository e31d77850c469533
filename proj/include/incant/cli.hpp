#pragma once
// In-process command implementations behind the `incant` binary. Each command
// validates its inputs, runs the requested operation, writes every artifact
// into an output directory, and finishes with a RunManifest. Errors surface
// as the exception taxonomy in errors.hpp; the binary maps them to exit codes
// (input 2, capability 3, numeric 4).

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "incant/backend.hpp"
#include "incant/io.hpp"
#include "incant/manifest.hpp"
#include "incant/trainer.hpp"

namespace incant::cli {

namespace fs = std::filesystem;

/*==================================== shared plumbing ====================================*/

inline RunConfig load_config(const std::string& path) {
    if (path.empty()) return validate_config(nlohmann::json::object());
    std::ifstream in(path);
    if (!in) throw input_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return validate_config_text(ss.str());
}

inline std::string config_hash(const RunConfig& cfg) { return sha256_hex(cfg.to_json().dump()); }

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ','))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

template <typename S>
LatentImage<S> seeded_terminal_latent(const RunConfig& cfg, uint64_t seed) {
    LatentImage<S> x(cfg.backend.latent_shape[0], cfg.backend.latent_shape[1],
                     cfg.backend.latent_shape[2]);
    Rng rng(derive_seed(seed, "x_T"));
    for (auto& v : x.v) v = static_cast<S>(rng.normal());
    x.timestep = cfg.schedule.T;
    return x;
}

template <typename S>
double text_image_cosine(const GlobalEmbedding<S>& text, const GlobalEmbedding<S>& image) {
    if (text.dim() != image.dim()) throw input_error("cosine: dimension mismatch");
    double d = 0, na = 0, nb = 0;
    for (int i = 0; i < text.dim(); ++i) {
        const double a = static_cast<double>(text.values[static_cast<size_t>(i)]);
        const double b = static_cast<double>(image.values[static_cast<size_t>(i)]);
        d += a * b;
        na += a * a;
        nb += b * b;
    }
    if (na == 0 || nb == 0) throw numeric_error("cosine: zero-norm embedding");
    return d / (std::sqrt(na) * std::sqrt(nb));
}

// Runs `body` with the scalar type selected by backend.precision.
template <typename F>
auto dispatch_precision(const RunConfig& cfg, F&& body) {
    if (cfg.backend.precision == "f64") return body(double{});
    return body(float{});
}

/*==================================== generate ====================================*/

struct GenerateArgs {
    std::string text;
    uint64_t seed = 0;
    int steps = 0;  // 0 = schedule.T_fine
    std::string mode = "1step";
    std::string out_dir = "generate-out";
    std::string config_path;
};

inline void cmd_generate(const GenerateArgs& args) {
    const RunConfig cfg = load_config(args.config_path);
    dispatch_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        WallTimer timer;
        auto be = make_backend<S>(cfg);
        const auto tokens = be.vocab.tokenize(args.text, cfg.encoder.n_max);
        const Mat<S> cond = be.text_enc.encode_text(tokens).first.values;
        const auto x_T = seeded_terminal_latent<S>(cfg, args.seed);
        const int steps = args.steps > 0 ? args.steps : cfg.schedule.T_fine;

        auto [image, rec] = run_pipeline(be.denoiser, x_T, cond, args.mode, steps, be.schedule,
                                         derive_seed(args.seed, "renoise"));

        fs::create_directories(args.out_dir);
        const fs::path dir(args.out_dir);
        write_latent_bin((dir / "image.bin").string(), image);
        write_latent_png((dir / "image.png").string(), image, cfg.io.png_scale);

        RunManifest m;
        m.command = "generate";
        m.config_hash = config_hash(cfg);
        m.inputs = {"text=" + args.text, "seed=" + std::to_string(args.seed),
                    "mode=" + args.mode, "steps=" + std::to_string(steps)};
        m.add_artifact(dir, "image.bin");
        m.add_artifact(dir, "image.png");
        m.duration_seconds = timer.seconds();
        m.status = "ok";
        write_manifest(dir / "manifest.json", m);
    });
}

/*==================================== optimize ====================================*/

struct OptimizeArgs {
    std::string text;
    uint64_t seed = 0;
    std::string config_path;
    std::string out_dir = "optimize-out";
};

struct OptimizeStatus {
    bool aborted = false;
    std::string reason;
};

namespace detail {

// Everything a finished (or aborted) optimization leaves on disk. Shared by
// optimize and ablate; the final image is skipped for aborted runs.
template <typename S>
RunManifest write_run_artifacts(const fs::path& dir, const ToyBackend<S>& be,
                                const OptimizationRun<S>& run, const std::string& command,
                                const WallTimer& timer) {
    fs::create_directories(dir);
    const int scale = be.cfg.io.png_scale;
    write_latent_bin((dir / "stage1_coarse.bin").string(), run.cache.x0_coarse);
    write_latent_png((dir / "stage1_coarse.png").string(), run.cache.x0_coarse, scale);
    write_latent_bin((dir / "stage1_fine.bin").string(), run.cache.x0_fine);
    write_latent_png((dir / "stage1_fine.png").string(), run.cache.x0_fine, scale);
    write_loss_csv((dir / "losses.csv").string(), run.history);
    write_mask_audit((dir / "mask_audit.jsonl").string(), run.mask_events);
    write_checkpoint((dir / "checkpoint.json").string(), run, be.cfg);
    {
        std::ofstream out(dir / "config.json");
        out << be.cfg.to_json().dump(1) << '\n';
    }

    RunManifest m;
    m.command = command;
    m.config_hash = config_hash(be.cfg);
    m.inputs = {"text=" + run.text, "seed=" + std::to_string(run.seed)};
    for (const char* name : {"stage1_coarse.bin", "stage1_coarse.png", "stage1_fine.bin",
                             "stage1_fine.png", "losses.csv", "mask_audit.jsonl",
                             "checkpoint.json", "config.json"})
        m.add_artifact(dir, name);

    if (!run.aborted) {
        const auto image = synthesize_final(be, run).first;
        write_latent_bin((dir / "final.bin").string(), image);
        write_latent_png((dir / "final.png").string(), image, scale);
        m.add_artifact(dir, "final.bin");
        m.add_artifact(dir, "final.png");
        m.status = "ok";
    } else {
        m.status = "failed: " + run.abort_reason;
    }
    m.duration_seconds = timer.seconds();
    write_manifest(dir / "manifest.json", m);
    return m;
}

}  // namespace detail

inline OptimizeStatus cmd_optimize(const OptimizeArgs& args) {
    const RunConfig cfg = load_config(args.config_path);
    return dispatch_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        WallTimer timer;
        auto be = make_backend<S>(cfg);
        const auto run = optimize(be, args.text, args.seed);
        detail::write_run_artifacts(fs::path(args.out_dir), be, run, "optimize", timer);
        return OptimizeStatus{run.aborted, run.abort_reason};
    });
}

/*==================================== ablate ====================================*/

struct AblateArgs {
    std::string text;
    uint64_t seed = 0;
    std::string variants = "full,no-qual,no-sem,no-tt,no-ti,no-spar";
    std::string config_path;
    std::string out_dir = "ablate-out";
};

inline void cmd_ablate(const AblateArgs& args) {
    const RunConfig cfg = load_config(args.config_path);
    dispatch_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        WallTimer timer;
        auto be = make_backend<S>(cfg);
        const auto variants = split_csv(args.variants);
        auto outcomes = ablate(be, args.text, args.seed, variants);
        for (auto& [name, outcome] : outcomes) {
            ToyBackend<S> vbe = be;
            vbe.cfg.weights = ablated_weights(be.cfg.weights, name);
            detail::write_run_artifacts(fs::path(args.out_dir) / name, vbe, outcome.run,
                                        "ablate:" + name, timer);
        }
    });
}

/*==================================== heatmap ====================================*/

struct HeatmapArgs {
    std::string text;             // plain text input, or
    std::string checkpoint_path;  // a trained prompt checkpoint (wins over text)
    uint64_t seed = 0;
    int step = -1;  // -1 = average over all sampling steps
    std::string config_path;
    std::string out_dir = "heatmap-out";
};

namespace detail {

inline std::string row_label(const TokenSequence& tokens, const std::vector<RowRole>& roles,
                             int row) {
    int word_i = 0;
    int prompt_i = 0;
    for (int r = 0; r <= row; ++r) {
        const bool is_word = roles[static_cast<size_t>(r)] == RowRole::Word;
        if (r == row) {
            if (is_word) return tokens.words[static_cast<size_t>(word_i)];
            return "prompt" + std::to_string(prompt_i);
        }
        (is_word ? word_i : prompt_i) += 1;
    }
    throw input_error("row_label: row out of range");
}

inline std::string sanitize(const std::string& s) {
    std::string out;
    for (char ch : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
    return out;
}

}  // namespace detail

inline void cmd_heatmap(const HeatmapArgs& args) {
    const bool from_checkpoint = !args.checkpoint_path.empty();
    RunConfig cfg;
    std::optional<Checkpoint<double>> ckpt;  // prompt re-cast per precision below
    if (from_checkpoint) {
        ckpt = read_checkpoint<double>(args.checkpoint_path);
        cfg = validate_config(ckpt->config);
    } else {
        cfg = load_config(args.config_path);
    }
    if (!cfg.backend.attention_capture)
        throw capability_error("heatmap: attention capture is disabled by this backend config");

    dispatch_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        WallTimer timer;
        auto be = make_backend<S>(cfg);
        const std::string text = from_checkpoint ? ckpt->text : args.text;
        const uint64_t seed = from_checkpoint ? ckpt->seed : args.seed;
        const auto tokens = be.vocab.tokenize(text, cfg.encoder.n_max);

        std::optional<Mat<S>> prompt;
        if (from_checkpoint) {
            prompt.emplace(ckpt->prompt.rows, ckpt->prompt.cols);
            for (size_t i = 0; i < prompt->v.size(); ++i)
                prompt->v[i] = static_cast<S>(ckpt->prompt.v[i]);
        }
        const auto enc = be.text_enc.encode_text(tokens, prompt ? &*prompt : nullptr);
        const auto x_T = seeded_terminal_latent<S>(cfg, seed);

        auto [image, rec] = run_pipeline(be.denoiser, x_T, enc.first.values,
                                         cfg.training.pipeline, cfg.schedule.T_fine, be.schedule,
                                         derive_seed(seed, "renoise"), /*capture=*/true);
        if (!rec) throw capability_error("heatmap: sampler returned no attention record");
        rec->validate();

        Mat<S> attn;
        if (args.step >= 0) {
            if (args.step >= static_cast<int>(rec->steps.size()))
                throw input_error("heatmap: --step out of range (captured " +
                                  std::to_string(rec->steps.size()) + " steps)");
            attn = rec->steps[static_cast<size_t>(args.step)];
        } else {
            attn = rec->mean();
        }

        fs::create_directories(args.out_dir);
        const fs::path dir(args.out_dir);
        const int h = cfg.backend.latent_shape[1], w = cfg.backend.latent_shape[2];

        RunManifest m;
        m.command = "heatmap";
        m.config_hash = config_hash(cfg);
        m.inputs = {"text=" + text, "seed=" + std::to_string(seed)};
        if (from_checkpoint) m.inputs.push_back("checkpoint=" + args.checkpoint_path);
        if (args.step >= 0) m.inputs.push_back("step=" + std::to_string(args.step));

        std::ofstream csv(dir / "attention.csv");
        csv << "token,mass\n";
        for (int r = 0; r < attn.rows; ++r) {
            const std::string label = detail::row_label(tokens, enc.first.roles, r);
            std::vector<S> row(attn.v.begin() + static_cast<size_t>(r) * attn.cols,
                               attn.v.begin() + static_cast<size_t>(r + 1) * attn.cols);
            double mass = 0;
            for (S v : row) mass += static_cast<double>(v);
            mass /= static_cast<double>(h * w);
            char idx[16];
            std::snprintf(idx, sizeof idx, "%02d", r);
            const std::string png =
                "heatmap_" + std::string(idx) + "_" + detail::sanitize(label) + ".png";
            write_heatmap_png((dir / png).string(), row, h, w, cfg.io.png_scale);
            csv << label << ',' << incant::detail::g17(mass) << '\n';
            m.add_artifact(dir, png);
        }
        csv.close();
        m.add_artifact(dir, "attention.csv");
        m.duration_seconds = timer.seconds();
        m.status = "ok";
        write_manifest(dir / "manifest.json", m);
    });
}

/*==================================== compare ====================================*/

struct CompareArgs {
    std::string textfile;
    std::string seeds = "0";
    std::string modes = "1step,2step";
    std::string config_path;
    std::string out_dir = "compare-out";
};

inline void cmd_compare(const CompareArgs& args) {
    std::ifstream in(args.textfile);
    if (!in) throw input_error("compare: cannot open " + args.textfile);
    std::vector<std::string> texts;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) texts.push_back(line);
    }
    if (texts.empty()) throw input_error("compare: no texts in " + args.textfile);

    std::vector<uint64_t> seeds;
    for (const auto& s : split_csv(args.seeds)) {
        try {
            seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
            throw input_error("compare: bad seed '" + s + "'");
        }
    }
    const auto modes = split_csv(args.modes);
    if (seeds.empty() || modes.empty()) throw input_error("compare: need seeds and modes");
    for (const auto& m : modes)
        if (m != "1step" && m != "2step") throw input_error("compare: bad mode '" + m + "'");

    const RunConfig cfg = load_config(args.config_path);
    dispatch_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        WallTimer timer;
        auto be = make_backend<S>(cfg);
        fs::create_directories(args.out_dir);
        const fs::path dir(args.out_dir);

        std::ofstream csv(dir / "compare.csv");
        csv << "text,seed,mode,text_image_cosine\n";
        std::vector<LatentImage<S>> cells;  // row-major: (text,seed) rows x mode columns
        for (const auto& text : texts) {
            const auto tokens = be.vocab.tokenize(text, cfg.encoder.n_max);
            const auto enc = be.text_enc.encode_text(tokens);
            for (uint64_t seed : seeds) {
                const auto x_T = seeded_terminal_latent<S>(cfg, seed);
                for (const auto& mode : modes) {
                    auto image = run_pipeline(be.denoiser, x_T, enc.first.values, mode,
                                              cfg.schedule.T_fine, be.schedule,
                                              derive_seed(seed, "renoise"))
                                     .first;
                    const double cosv = text_image_cosine(enc.second, be.image_enc.encode(image));
                    csv << text << ',' << seed << ',' << mode << ',' << incant::detail::g17(cosv)
                        << '\n';
                    cells.push_back(std::move(image));
                }
            }
        }
        csv.close();

        // grid: one row per (text, seed), one column per mode
        const int ch = cfg.backend.latent_shape[0], lh = cfg.backend.latent_shape[1],
                  lw = cfg.backend.latent_shape[2];
        const int grid_rows = static_cast<int>(texts.size() * seeds.size());
        const int grid_cols = static_cast<int>(modes.size());
        LatentImage<S> grid(ch, grid_rows * lh, grid_cols * lw);
        for (int gr = 0; gr < grid_rows; ++gr)
            for (int gc = 0; gc < grid_cols; ++gc) {
                const auto& cell = cells[static_cast<size_t>(gr) * grid_cols + gc];
                for (int c = 0; c < ch; ++c)
                    for (int y = 0; y < lh; ++y)
                        for (int x = 0; x < lw; ++x)
                            grid.at(c, gr * lh + y, gc * lw + x) = cell.at(c, y, x);
            }
        write_latent_png((dir / "grid.png").string(), grid, cfg.io.png_scale);

        RunManifest m;
        m.command = "compare";
        m.config_hash = config_hash(cfg);
        m.inputs = {"textfile=" + args.textfile, "seeds=" + args.seeds, "modes=" + args.modes};
        m.add_artifact(dir, "compare.csv");
        m.add_artifact(dir, "grid.png");
        m.duration_seconds = timer.seconds();
        m.status = "ok";
        write_manifest(dir / "manifest.json", m);
    });
}

}  // namespace incant::cli
