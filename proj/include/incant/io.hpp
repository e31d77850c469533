#pragma once
// On-disk formats: raw latent tensors (8-byte shape header + 32-bit
// little-endian floats), PNG images via zlib with a fixed linear latent->RGB
// map, loss-history CSV, mask-audit JSONL, and prompt checkpoints as JSON.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "incant/config.hpp"
#include "incant/errors.hpp"
#include "incant/trainer.hpp"
#include "incant/types.hpp"

namespace incant {

/*==================================== raw latents ====================================*/

// Header: uint16 c, h, w, reserved(=0), little-endian; then float32 values in
// storage order (channel, row, column). Timesteps are not stored; loaded
// latents are treated as clean samples.
template <typename S>
void write_latent_bin(const std::string& path, const LatentImage<S>& x) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("write_latent_bin: cannot open " + path);
    auto put16 = [&](uint16_t v) {
        const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                    static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
    };
    if (x.c < 0 || x.c > 0xffff || x.h < 0 || x.h > 0xffff || x.w < 0 || x.w > 0xffff)
        throw input_error("write_latent_bin: shape out of range");
    put16(static_cast<uint16_t>(x.c));
    put16(static_cast<uint16_t>(x.h));
    put16(static_cast<uint16_t>(x.w));
    put16(0);
    for (S v : x.v) {
        const float f = static_cast<float>(v);
        uint32_t u;
        std::memcpy(&u, &f, 4);
        const unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                                    static_cast<unsigned char>((u >> 8) & 0xff),
                                    static_cast<unsigned char>((u >> 16) & 0xff),
                                    static_cast<unsigned char>(u >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!out) throw input_error("write_latent_bin: write failed for " + path);
}

template <typename S>
LatentImage<S> read_latent_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("read_latent_bin: cannot open " + path);
    unsigned char hdr[8];
    if (!in.read(reinterpret_cast<char*>(hdr), 8))
        throw input_error("read_latent_bin: truncated header in " + path);
    auto get16 = [&](int i) {
        return static_cast<uint16_t>(hdr[i] | (hdr[i + 1] << 8));
    };
    const int c = get16(0), h = get16(2), w = get16(4);
    if (get16(6) != 0) throw input_error("read_latent_bin: bad reserved field in " + path);
    if (c == 0 || h == 0 || w == 0) throw input_error("read_latent_bin: zero dimension");
    LatentImage<S> x(c, h, w);
    for (auto& v : x.v) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4))
            throw input_error("read_latent_bin: truncated data in " + path);
        uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                     (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        v = static_cast<S>(f);
    }
    if (in.get() != std::ifstream::traits_type::eof())
        throw input_error("read_latent_bin: trailing bytes in " + path);
    return x;
}

/*==================================== png ====================================*/

namespace detail {

inline void png_chunk(std::string& out, const char type[4], const std::string& data) {
    auto put32 = [&](uint32_t v) {
        out.push_back(static_cast<char>(v >> 24));
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
        out.push_back(static_cast<char>(v & 0xff));
    };
    put32(static_cast<uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    put32(static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

// Minimal PNG container: 8-bit, filter 0 scanlines, one IDAT chunk.
// color_type 2 = RGB (3 bytes/px), 0 = grayscale (1 byte/px).
inline void png_write(const std::string& path, int width, int height, int color_type,
                      const std::vector<unsigned char>& pixels) {
    const int bpp = color_type == 2 ? 3 : 1;
    if (width <= 0 || height <= 0) throw input_error("png_write: empty image");
    if (pixels.size() != static_cast<size_t>(width) * height * bpp)
        throw input_error("png_write: pixel buffer size mismatch");

    std::string raw;
    raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * bpp));
    for (int y = 0; y < height; ++y) {
        raw.push_back('\0');  // filter type 0
        raw.append(reinterpret_cast<const char*>(&pixels[static_cast<size_t>(y) * width * bpp]),
                   static_cast<size_t>(width) * bpp);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(bound);
    if (compress2(comp.data(), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw numeric_error("png_write: compression failed");
    comp.resize(bound);

    std::string ihdr;
    auto put32 = [&](uint32_t v) {
        ihdr.push_back(static_cast<char>(v >> 24));
        ihdr.push_back(static_cast<char>((v >> 16) & 0xff));
        ihdr.push_back(static_cast<char>((v >> 8) & 0xff));
        ihdr.push_back(static_cast<char>(v & 0xff));
    };
    put32(static_cast<uint32_t>(width));
    put32(static_cast<uint32_t>(height));
    ihdr.push_back(8);                             // bit depth
    ihdr.push_back(static_cast<char>(color_type));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace

    std::string file("\x89PNG\r\n\x1a\n", 8);
    png_chunk(file, "IHDR", ihdr);
    png_chunk(file, "IDAT", std::string(comp.begin(), comp.end()));
    png_chunk(file, "IEND", "");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("png_write: cannot open " + path);
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw input_error("png_write: write failed for " + path);
}

inline unsigned char to_byte(double v) {
    if (v <= 0.0) return 0;
    if (v >= 1.0) return 255;
    return static_cast<unsigned char>(v * 255.0 + 0.5);
}

}  // namespace detail

// Fixed linear latent->RGB map: channel i feeds color i (clamped to [0,1]);
// missing channels reuse the last one. `scale` upsamples by nearest neighbor.
template <typename S>
void write_latent_png(const std::string& path, const LatentImage<S>& x, int scale = 16) {
    if (scale < 1) throw input_error("write_latent_png: scale must be >= 1");
    const int W = x.w * scale, H = x.h * scale;
    std::vector<unsigned char> px(static_cast<size_t>(W) * H * 3);
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
            for (int ch = 0; ch < 3; ++ch) {
                const int ci = std::min(ch, x.c - 1);
                const double v = static_cast<double>(x.at(ci, y / scale, xx / scale));
                px[(static_cast<size_t>(y) * W + xx) * 3 + ch] = detail::to_byte(v);
            }
    detail::png_write(path, W, H, 2, px);
}

// Grayscale heatmap of one attention row (length h*w), normalized to its own
// peak for display.
template <typename S>
void write_heatmap_png(const std::string& path, const std::vector<S>& weights, int h, int w,
                       int scale = 16) {
    if (static_cast<int>(weights.size()) != h * w)
        throw input_error("write_heatmap_png: weight count != h*w");
    if (scale < 1) throw input_error("write_heatmap_png: scale must be >= 1");
    double peak = 0;
    for (S v : weights) peak = std::max(peak, static_cast<double>(v));
    const int W = w * scale, H = h * scale;
    std::vector<unsigned char> px(static_cast<size_t>(W) * H);
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
            const double v = static_cast<double>(weights[static_cast<size_t>(y / scale) * w +
                                                         static_cast<size_t>(xx / scale)]);
            px[static_cast<size_t>(y) * W + xx] = detail::to_byte(peak > 0 ? v / peak : 0.0);
        }
    detail::png_write(path, W, H, 0, px);
}

/*==================================== csv ====================================*/

namespace detail {

inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

template <typename S>
void write_loss_csv(const std::string& path, const std::vector<LossReport<S>>& history) {
    std::ofstream out(path);
    if (!out) throw input_error("write_loss_csv: cannot open " + path);
    out << "iteration,qual,sem,tt,ti,spar,total\n";
    for (const auto& r : history)
        out << r.iteration << ',' << detail::g17(static_cast<double>(r.qual)) << ','
            << detail::g17(static_cast<double>(r.sem)) << ','
            << detail::g17(static_cast<double>(r.tt)) << ','
            << detail::g17(static_cast<double>(r.ti)) << ','
            << detail::g17(static_cast<double>(r.spar)) << ','
            << detail::g17(static_cast<double>(r.total)) << '\n';
    if (!out) throw input_error("write_loss_csv: write failed for " + path);
}

/*==================================== mask audit ====================================*/

inline void write_mask_audit(const std::string& path, const std::vector<MaskEvent>& events) {
    std::ofstream out(path);
    if (!out) throw input_error("write_mask_audit: cannot open " + path);
    for (const auto& ev : events) {
        nlohmann::json j{{"iteration", ev.iteration},
                         {"scores", ev.scores},
                         {"gamma", ev.threshold},
                         {"masked_indices", ev.masked}};
        out << j.dump() << '\n';
    }
}

/*==================================== checkpoints ====================================*/

template <typename S>
struct Checkpoint {
    std::string text;
    uint64_t seed = 0;
    nlohmann::json config;
    int n_p = 0;
    int d = 0;
    Mat<S> prompt;
    int iteration = 0;
    std::vector<LossReport<S>> history;
};

template <typename S>
nlohmann::json loss_history_to_json(const std::vector<LossReport<S>>& history) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : history)
        rows.push_back({{"iteration", r.iteration},
                        {"qual", static_cast<double>(r.qual)},
                        {"sem", static_cast<double>(r.sem)},
                        {"tt", static_cast<double>(r.tt)},
                        {"ti", static_cast<double>(r.ti)},
                        {"spar", static_cast<double>(r.spar)},
                        {"total", static_cast<double>(r.total)}});
    return rows;
}

template <typename S>
std::vector<LossReport<S>> loss_history_from_json(const nlohmann::json& rows) {
    std::vector<LossReport<S>> out;
    for (const auto& j : rows) {
        LossReport<S> r;
        r.iteration = j.at("iteration").get<int>();
        r.qual = static_cast<S>(j.at("qual").get<double>());
        r.sem = static_cast<S>(j.at("sem").get<double>());
        r.tt = static_cast<S>(j.at("tt").get<double>());
        r.ti = static_cast<S>(j.at("ti").get<double>());
        r.spar = static_cast<S>(j.at("spar").get<double>());
        r.total = static_cast<S>(j.at("total").get<double>());
        out.push_back(r);
    }
    return out;
}

template <typename S>
void write_checkpoint(const std::string& path, const OptimizationRun<S>& run,
                      const RunConfig& cfg) {
    std::vector<double> prompt(run.prompt.values.v.begin(), run.prompt.values.v.end());
    const nlohmann::json j{{"text", run.text},
                           {"seed", run.seed},
                           {"config", cfg.to_json()},
                           {"n_p", run.prompt.values.rows},
                           {"d", run.prompt.values.cols},
                           {"prompt", prompt},
                           {"iteration", run.prompt.step_count},
                           {"loss_history", loss_history_to_json(run.history)}};
    std::ofstream out(path);
    if (!out) throw input_error("write_checkpoint: cannot open " + path);
    out << j.dump(1) << '\n';
    if (!out) throw input_error("write_checkpoint: write failed for " + path);
}

template <typename S>
Checkpoint<S> read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("read_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("read_checkpoint: bad JSON in " + path + ": " + e.what());
    }
    Checkpoint<S> c;
    try {
        c.text = j.at("text").get<std::string>();
        c.seed = j.at("seed").get<uint64_t>();
        c.config = j.at("config");
        c.n_p = j.at("n_p").get<int>();
        c.d = j.at("d").get<int>();
        const auto prompt = j.at("prompt").get<std::vector<double>>();
        if (static_cast<int>(prompt.size()) != c.n_p * c.d)
            throw input_error("read_checkpoint: prompt size != n_p*d");
        c.prompt = Mat<S>(c.n_p, c.d);
        for (size_t i = 0; i < prompt.size(); ++i) c.prompt.v[i] = static_cast<S>(prompt[i]);
        c.iteration = j.at("iteration").get<int>();
        c.history = loss_history_from_json<S>(j.at("loss_history"));
    } catch (const nlohmann::json::exception& e) {
        throw input_error("read_checkpoint: missing field in " + path + ": " + e.what());
    }
    return c;
}

}  // namespace incant
