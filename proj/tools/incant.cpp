// Command-line front end: prompt optimization and generation against the
// deterministic toy diffusion backend.
//
// Exit codes: 0 success, 2 input error, 3 capability error, 4 numerical abort.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "incant/cli.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kCapabilityError = 3;
constexpr int kNumericAbort = 4;

int run(int argc, char** argv) {
    CLI::App app{"prompt optimization toolkit (toy diffusion backend)"};
    app.require_subcommand(1);

    incant::cli::GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "sample an image for a text");
    g->add_option("text", gen.text, "input text")->required();
    g->add_option("--seed", gen.seed, "base RNG seed");
    g->add_option("--steps", gen.steps, "sampling steps (default: schedule.T_fine)");
    g->add_option("--mode", gen.mode, "1step or 2step")->check(CLI::IsMember({"1step", "2step"}));
    g->add_option("--out", gen.out_dir, "output directory");
    g->add_option("--config", gen.config_path, "config JSON path");

    incant::cli::OptimizeArgs opt;
    auto* o = app.add_subcommand("optimize", "learn a per-input prompt");
    o->add_option("text", opt.text, "input text")->required();
    o->add_option("--seed", opt.seed, "base RNG seed");
    o->add_option("--config", opt.config_path, "config JSON path");
    o->add_option("--out-dir", opt.out_dir, "output directory");

    incant::cli::AblateArgs abl;
    auto* a = app.add_subcommand("ablate", "optimize under ablated loss weights");
    a->add_option("text", abl.text, "input text")->required();
    a->add_option("--seed", abl.seed, "base RNG seed");
    a->add_option("--variants", abl.variants, "comma list: full,no-qual,no-sem,no-tt,no-ti,no-spar");
    a->add_option("--config", abl.config_path, "config JSON path");
    a->add_option("--out-dir", abl.out_dir, "output directory");

    incant::cli::HeatmapArgs hm;
    auto* h = app.add_subcommand("heatmap", "cross-attention heatmaps per conditioning row");
    h->add_option("--text", hm.text, "input text");
    h->add_option("--checkpoint", hm.checkpoint_path, "trained prompt checkpoint (overrides --text)");
    h->add_option("--seed", hm.seed, "base RNG seed");
    h->add_option("--step", hm.step, "single sampling step index (default: average)");
    h->add_option("--config", hm.config_path, "config JSON path");
    h->add_option("--out", hm.out_dir, "output directory");

    incant::cli::CompareArgs cmp;
    auto* c = app.add_subcommand("compare", "grid of generations across seeds and modes");
    c->add_option("textfile", cmp.textfile, "file with one text per line")->required();
    c->add_option("--seeds", cmp.seeds, "comma list of seeds");
    c->add_option("--modes", cmp.modes, "comma list of 1step/2step");
    c->add_option("--config", cmp.config_path, "config JSON path");
    c->add_option("--out", cmp.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInputError;
    }

    if (g->parsed()) {
        incant::cli::cmd_generate(gen);
    } else if (o->parsed()) {
        const auto status = incant::cli::cmd_optimize(opt);
        if (status.aborted) {
            std::fprintf(stderr, "optimize aborted: %s\n", status.reason.c_str());
            return kNumericAbort;
        }
    } else if (a->parsed()) {
        incant::cli::cmd_ablate(abl);
    } else if (h->parsed()) {
        if (hm.text.empty() && hm.checkpoint_path.empty())
            throw incant::input_error("heatmap: need --text or --checkpoint");
        incant::cli::cmd_heatmap(hm);
    } else if (c->parsed()) {
        incant::cli::cmd_compare(cmp);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const incant::input_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInputError;
    } catch (const incant::capability_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kCapabilityError;
    } catch (const incant::numeric_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumericAbort;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInputError;
    }
}
