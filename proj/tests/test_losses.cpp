// Loss terms against brute-force oracles, analytic bounds, exact extremes,
// finite-difference gradients through the full encoder, gradient exclusion
// of the image/reference branches, and the fixed combination order.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "incant/guidance.hpp"
#include "incant/image_encoder.hpp"
#include "incant/losses.hpp"
#include "incant/rng.hpp"
#include "incant/text_encoder.hpp"
#include "incant/vocab.hpp"

using namespace incant;
using Catch::Matchers::ContainsSubstring;

namespace {

constexpr int kD = 16;

TextEncoder<double> toy_encoder(uint64_t seed = 101) {
    auto vocab = Vocabulary::builtin();
    TextEncoderSpec es;
    es.vocab_size = vocab.size();
    es.d = kD;
    es.max_len = 12;
    es.d_ff = 24;
    es.seed = seed;
    return TextEncoder<double>(es);
}

double vcos(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / (std::sqrt(na) * std::sqrt(nb));
}

struct Fixture {
    Tape<double> t;
    typename Tape<double>::id prompt = -1;
    LossNodes<double> nodes;
    LossInputs<double> in;
    Mat<double> prompt_value;
};

// Builds the full composed loss for "a red dot" with a 2-row prompt, a random
// image embedding, and mask position {1}.
Fixture make_fixture(uint64_t seed, const GuidanceWeights& w, bool raw_dot = false) {
    auto vocab = Vocabulary::builtin();
    auto enc = toy_encoder();
    auto tok = vocab.tokenize("a red dot", 12);
    Rng rng(seed);

    Fixture f;
    f.prompt_value = rng.normal_mat<double>(2, kD, 0.05);
    f.prompt = f.t.param(f.prompt_value);
    auto full = enc.encode(f.t, tok, f.prompt, {});
    auto masked = enc.encode(f.t, tok, f.prompt, {1});

    f.in.e_hat_global = full.global;
    f.in.masked_global = masked.global;
    f.in.rows = full.rows;
    f.in.roles = full.roles;
    f.in.text_global = enc.encode_text(tok).second.as_row();
    f.in.image_global = GlobalEmbedding<double>{rng.normal_mat<double>(1, kD).v, false};
    auto coarse = GlobalEmbedding<double>{rng.normal_mat<double>(1, kD).v, false};
    auto fine = GlobalEmbedding<double>{rng.normal_mat<double>(1, kD).v, false};
    f.in.quality_dir = quality_direction(coarse, fine);
    f.in.raw_dot_sem = raw_dot;
    f.nodes = build_losses(f.t, f.in, w);
    return f;
}

}  // namespace

/*==================================== oracles ====================================*/

TEST_CASE("every term matches a brute-force recomputation from tape values") {
    GuidanceWeights w;
    auto f = make_fixture(3, w);
    auto& t = f.t;
    const auto ehat = t.value(f.in.e_hat_global).v;
    const auto emask = t.value(f.in.masked_global).v;

    // qual: -(delta_img . (ehat/|ehat| - eg/|eg|))
    double nh = 0;
    for (double x : ehat) nh += x * x;
    nh = std::sqrt(nh);
    double ng = 0;
    for (double x : f.in.text_global.v) ng += x * x;
    ng = std::sqrt(ng);
    double q = 0;
    for (size_t i = 0; i < ehat.size(); ++i)
        q += f.in.quality_dir.v[i] * (ehat[i] / nh - f.in.text_global.v[i] / ng);
    REQUIRE(t.value(f.nodes.qual).v[0] == Catch::Approx(-q).epsilon(1e-12));

    REQUIRE(t.value(f.nodes.sem).v[0] == Catch::Approx(-vcos(ehat, emask)).epsilon(1e-12));
    REQUIRE(t.value(f.nodes.tt).v[0] ==
            Catch::Approx(-vcos(ehat, f.in.text_global.v)).epsilon(1e-12));
    REQUIRE(t.value(f.nodes.ti).v[0] ==
            Catch::Approx(-vcos(ehat, f.in.image_global.values)).epsilon(1e-12));

    // spar: ordered pairs of the contextualized prompt rows (indices 3,4)
    const auto rows = t.value(f.in.rows);
    std::vector<double> p0(rows.row_ptr(3), rows.row_ptr(3) + kD);
    std::vector<double> p1(rows.row_ptr(4), rows.row_ptr(4) + kD);
    const double spar = 2.0 * std::abs(vcos(p0, p1));
    REQUIRE(t.value(f.nodes.spar).v[0] == Catch::Approx(spar).epsilon(1e-12));

    // total: identical left-to-right recomputation is bitwise equal
    auto rep = extract_report(t, f.nodes);
    double total = w.qual * rep.qual;
    total = total + w.sem * rep.sem;
    total = total + w.tt * rep.tt;
    total = total + w.ti * rep.ti;
    total = total + w.spar * rep.spar;
    REQUIRE(rep.total == total);
}

TEST_CASE("terms respect their analytic bounds") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        GuidanceWeights w;
        auto f = make_fixture(seed, w);
        auto rep = extract_report(f.t, f.nodes);
        REQUIRE(rep.qual >= -4.0);
        REQUIRE(rep.qual <= 4.0);
        REQUIRE(rep.sem >= -1.0);
        REQUIRE(rep.sem <= 1.0);
        REQUIRE(rep.tt >= -1.0);
        REQUIRE(rep.tt <= 1.0);
        REQUIRE(rep.ti >= -1.0);
        REQUIRE(rep.ti <= 1.0);
        REQUIRE(rep.spar >= 0.0);
        REQUIRE(rep.spar <= 2.0);  // n_p(n_p-1) with n_p=2
    }
}

/*==================================== exact extremes ====================================*/

TEST_CASE("semantic loss is exactly -1 when the mask set is empty") {
    auto vocab = Vocabulary::builtin();
    auto enc = toy_encoder();
    auto tok = vocab.tokenize("red", 12);
    Tape<double> t;
    Rng rng(23);
    auto prompt = t.param(rng.normal_mat<double>(2, kD, 0.05));
    auto full = enc.encode(t, tok, prompt, {});
    auto unmasked = enc.encode(t, tok, prompt, {});  // empty mask: same branch
    auto sem = loss_semantic(t, full.global, unmasked.global);
    REQUIRE(t.value(sem).v[0] == -1.0);
}

TEST_CASE("sparsity is exactly 0 for orthogonal rows and n_p(n_p-1) for identical rows") {
    Tape<double> t;
    Mat<double> ortho(3, 6);
    ortho.at(0, 0) = 0.7;
    ortho.at(1, 2) = -1.3;
    ortho.at(2, 4) = 2.2;  // disjoint supports: dot products are exactly 0
    auto rows = t.param(ortho);
    std::vector<RowRole> roles(3, RowRole::Prompt);
    auto spar0 = loss_sparsity(t, rows, roles);
    REQUIRE(t.value(spar0).v[0] == 0.0);

    Rng rng(29);
    Mat<double> same(4, 6);
    Mat<double> one_row = rng.normal_mat<double>(1, 6);
    for (int r = 0; r < 4; ++r)
        std::copy(one_row.v.begin(), one_row.v.end(), same.row_ptr(r));
    auto rows2 = t.param(same);
    std::vector<RowRole> roles2(4, RowRole::Prompt);
    auto spar1 = loss_sparsity(t, rows2, roles2);
    REQUIRE(t.value(spar1).v[0] == 12.0);  // 4*3 ordered pairs, each cosine snaps to 1
}

TEST_CASE("quality loss is exactly 0 when coarse and fine collapse") {
    Tape<double> t;
    Rng rng(31);
    auto hat = t.param(rng.normal_mat<double>(1, 8));
    Mat<double> base = rng.normal_mat<double>(1, 8);
    GlobalEmbedding<double> e{rng.normal_mat<double>(1, 8).v, false};
    auto dir = quality_direction(e, e);  // identical samples: zero direction
    auto qual = loss_quality(t, text_direction(t, hat, base), dir);
    REQUIRE(t.value(qual).v[0] == 0.0);
}

TEST_CASE("axis-aligned inputs reach the quality bound exactly") {
    Tape<double> t;
    Mat<double> d_txt(1, 4);
    d_txt.v[0] = 2.0;
    Mat<double> d_img(1, 4);
    d_img.v[0] = 2.0;
    auto q = loss_quality(t, t.param(d_txt), d_img);
    REQUIRE(t.value(q).v[0] == -4.0);
    d_img.v[0] = -2.0;
    auto q2 = loss_quality(t, t.param(d_txt), d_img);
    REQUIRE(t.value(q2).v[0] == 4.0);
}

TEST_CASE("self-referential cosine losses snap to exactly -1") {
    Tape<double> t;
    Rng rng(37);
    Mat<double> v = rng.normal_mat<double>(1, 8);
    auto hat = t.param(v);
    REQUIRE(t.value(loss_text_text(t, hat, v)).v[0] == -1.0);
    REQUIRE(t.value(loss_text_image(t, hat, GlobalEmbedding<double>{v.v, false})).v[0] ==
            -1.0);
}

/*==================================== raw-dot flag ====================================*/

TEST_CASE("raw_dot_sem swaps cosine for an unnormalized dot") {
    GuidanceWeights w;
    auto fc = make_fixture(41, w, false);
    auto fr = make_fixture(41, w, true);
    const auto ehat = fr.t.value(fr.in.e_hat_global).v;
    const auto emask = fr.t.value(fr.in.masked_global).v;
    double d = 0;
    for (size_t i = 0; i < ehat.size(); ++i) d += ehat[i] * emask[i];
    REQUIRE(fr.t.value(fr.nodes.sem).v[0] == Catch::Approx(-d).epsilon(1e-12));
    REQUIRE(fr.t.value(fr.nodes.sem).v[0] != fc.t.value(fc.nodes.sem).v[0]);
}

/*==================================== gradients ====================================*/

TEST_CASE("total-loss gradient w.r.t. the prompt matches finite differences") {
    GuidanceWeights w;  // all five weights active
    const double h = 1e-6;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        auto f = make_fixture(seed, w);
        f.t.backward(f.nodes.total);
        const auto grad = f.t.grad(f.prompt);

        auto eval_at = [&](const Mat<double>& pv) {
            auto vocab = Vocabulary::builtin();
            auto enc = toy_encoder();
            auto tok = vocab.tokenize("a red dot", 12);
            Tape<double> t2;
            auto p2 = t2.param(pv);
            auto full = enc.encode(t2, tok, p2, {});
            auto masked = enc.encode(t2, tok, p2, {1});
            LossInputs<double> in2 = f.in;
            in2.e_hat_global = full.global;
            in2.masked_global = masked.global;
            in2.rows = full.rows;
            in2.roles = full.roles;
            auto n2 = build_losses(t2, in2, w);
            return t2.value(n2.total).v[0];
        };

        double worst = 0;
        for (size_t k = 0; k < f.prompt_value.v.size(); ++k) {
            auto pv = f.prompt_value;
            pv.v[k] += h;
            const double fp = eval_at(pv);
            pv.v[k] -= 2 * h;
            const double fm = eval_at(pv);
            const double fd = (fp - fm) / (2 * h);
            const double an = grad.v[k];
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-3});
            worst = std::max(worst, std::abs(fd - an) / scale);
        }
        CAPTURE(seed, worst);
        REQUIRE(worst < 1e-4);
    }
}

TEST_CASE("image and reference branches stay out of the gradient pass") {
    GuidanceWeights w;
    auto f = make_fixture(51, w);
    f.t.backward(f.nodes.total);
    REQUIRE(f.t.has_grad(f.prompt));

    // a constant spliced into the same loss graph acquires no gradient storage
    Tape<double> t;
    Rng rng(52);
    auto p = t.param(rng.normal_mat<double>(1, 4));
    auto c = t.constant(rng.normal_mat<double>(1, 4));
    auto loss = t.neg(t.cosine(p, c));
    t.backward(loss);
    REQUIRE(t.has_grad(p));
    REQUIRE_FALSE(t.has_grad(c));
    REQUIRE_FALSE(t.requires_grad(c));
}

TEST_CASE("quality gradient direction is invariant to image-embedding rescale") {
    GuidanceWeights w{1.0, 0.0, 0.0, 0.0, 0.0};
    auto base = make_fixture(61, w);
    base.t.backward(base.nodes.total);
    auto gbase = base.t.grad(base.prompt);

    // rebuild with rescaled coarse/fine inputs: quality_dir must not move
    Rng rng(61);
    rng.normal_mat<double>(2, kD, 0.05);  // consume prompt draw
    rng.normal_mat<double>(1, kD);        // consume image draw
    auto coarse = GlobalEmbedding<double>{rng.normal_mat<double>(1, kD).v, false};
    auto fine = GlobalEmbedding<double>{rng.normal_mat<double>(1, kD).v, false};
    for (auto& x : coarse.values) x *= 3.7;
    for (auto& x : fine.values) x *= 0.13;
    auto dir2 = quality_direction(coarse, fine);
    for (size_t i = 0; i < dir2.v.size(); ++i)
        REQUIRE(std::abs(dir2.v[i] - base.in.quality_dir.v[i]) < 1e-12);

    Tape<double> t2;
    auto p2 = t2.param(base.prompt_value);
    auto vocab = Vocabulary::builtin();
    auto enc = toy_encoder();
    auto tok = vocab.tokenize("a red dot", 12);
    auto full = enc.encode(t2, tok, p2, {});
    auto qual = loss_quality(t2, text_direction(t2, full.global, base.in.text_global), dir2);
    t2.backward(qual);
    auto g2 = t2.grad(p2);
    for (size_t i = 0; i < g2.v.size(); ++i)
        REQUIRE(std::abs(g2.v[i] - gbase.v[i]) < 1e-10);
}

/*==================================== combination ====================================*/

TEST_CASE("all five terms are built even at weight zero") {
    GuidanceWeights w{0.0, 0.0, 0.0, 0.0, 0.1};
    auto f = make_fixture(71, w);
    auto rep = extract_report(f.t, f.nodes);
    REQUIRE(rep.qual != 0.0);  // term computed despite zero weight
    REQUIRE(rep.sem != 0.0);
    REQUIRE(rep.total == Catch::Approx(0.1 * rep.spar).epsilon(1e-15));
}

TEST_CASE("a non-finite term aborts naming the term") {
    auto vocab = Vocabulary::builtin();
    auto enc = toy_encoder();
    auto tok = vocab.tokenize("a red dot", 12);
    Tape<double> t;
    Rng rng(81);
    auto prompt = t.param(rng.normal_mat<double>(2, kD, 0.05));
    auto full = enc.encode(t, tok, prompt, {});
    auto masked = enc.encode(t, tok, prompt, {1});
    LossInputs<double> in;
    in.e_hat_global = full.global;
    in.masked_global = masked.global;
    in.rows = full.rows;
    in.roles = full.roles;
    in.text_global = enc.encode_text(tok).second.as_row();
    in.image_global = GlobalEmbedding<double>{rng.normal_mat<double>(1, kD).v, false};
    in.quality_dir = rng.normal_mat<double>(1, kD);
    in.quality_dir.v[3] = std::numeric_limits<double>::infinity();
    GuidanceWeights w;
    REQUIRE_THROWS_WITH(build_losses(t, in, w), ContainsSubstring("loss term 'qual'"));

    in.quality_dir.v[3] = 0.0;
    in.image_global.values[2] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_WITH(build_losses(t, in, w), ContainsSubstring("loss term 'ti'"));
}

TEST_CASE("zero-norm prompt rows skip sparsity pairs with a warning") {
    Tape<double> t;
    Mat<double> rows(3, 4);
    rows.at(0, 0) = 1.0;
    rows.at(2, 1) = 1.0;  // row 1 is all zeros
    auto rid = t.param(rows);
    std::vector<RowRole> roles(3, RowRole::Prompt);
    std::vector<std::string> warnings;
    auto spar = loss_sparsity(t, rid, roles, &warnings);
    REQUIRE(t.value(spar).v[0] == 0.0);  // surviving pair (0,2) is orthogonal
    REQUIRE(warnings.size() == 1);
    REQUIRE_THAT(warnings[0], ContainsSubstring("zero norm"));
}

TEST_CASE("rescaling every weight by one positive scalar keeps the gradient direction") {
    GuidanceWeights w;  // all five active
    auto base = make_fixture(71, w);
    base.t.backward(base.nodes.total);
    const auto g1 = base.t.grad(base.prompt);
    double n1 = 0;
    for (double g : g1.v) n1 += g * g;
    n1 = std::sqrt(n1);
    REQUIRE(n1 > 0);

    auto scaled_grad = [&](double c) {
        GuidanceWeights ws = w;
        ws.qual *= c;
        ws.sem *= c;
        ws.tt *= c;
        ws.ti *= c;
        ws.spar *= c;
        auto f = make_fixture(71, ws);
        f.t.backward(f.nodes.total);
        return f.t.grad(f.prompt);
    };

    SECTION("power-of-two scalars scale the gradient bitwise") {
        for (double c : {4.0, 0.125}) {
            const auto g2 = scaled_grad(c);
            REQUIRE(g2.v.size() == g1.v.size());
            for (size_t i = 0; i < g1.v.size(); ++i) REQUIRE(g2.v[i] == c * g1.v[i]);
        }
    }
    SECTION("arbitrary scalars keep the normalized direction") {
        for (double c : {3.7, 0.013}) {
            const auto g2 = scaled_grad(c);
            double n2 = 0;
            for (double g : g2.v) n2 += g * g;
            n2 = std::sqrt(n2);
            REQUIRE(n2 > 0);
            for (size_t i = 0; i < g1.v.size(); ++i)
                REQUIRE(std::abs(g1.v[i] / n1 - g2.v[i] / n2) < 1e-12);
        }
    }
}
