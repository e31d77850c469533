// Configuration parsing: defaults, unknown-key rejection at every level,
// typed field errors, and the dimensional cross-checks.

#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include "incant/config.hpp"

using incant::input_error;
using incant::RunConfig;
using incant::validate_config;
using incant::validate_config_text;
using nlohmann::json;

TEST_CASE("empty document yields the documented defaults") {
    RunConfig c = validate_config(json::object());
    REQUIRE(c.encoder.d == 32);
    REQUIRE(c.encoder.n_max == 16);
    REQUIRE(c.prompt.n_p == 4);
    REQUIRE(c.prompt.init_sigma == 0.02);
    REQUIRE(c.schedule.T == 100);
    REQUIRE(c.schedule.beta_start == 1e-4);
    REQUIRE(c.schedule.beta_end == 0.02);
    REQUIRE(c.schedule.T_coarse == 10);
    REQUIRE(c.schedule.T_fine == 50);
    REQUIRE(c.weights.qual == 1.0);
    REQUIRE(c.weights.sem == 0.5);
    REQUIRE(c.weights.tt == 0.5);
    REQUIRE(c.weights.ti == 0.5);
    REQUIRE(c.weights.spar == 0.1);
    REQUIRE(c.training.iterations == 100);
    REQUIRE(c.training.lr == 1e-2);
    REQUIRE(c.training.refresh_period == 25);
    REQUIRE(c.training.mask_percentile == 30.0);
    REQUIRE(c.training.pipeline == "1step");
    REQUIRE(c.backend.precision == "f32");
    REQUIRE(c.backend.latent_shape == std::array<int, 3>{3, 8, 8});
}

TEST_CASE("unknown keys are rejected with their path") {
    REQUIRE_THROWS_WITH(validate_config(json{{"bogus", 1}}),
                        Catch::Matchers::ContainsSubstring("bogus"));
    REQUIRE_THROWS_WITH(validate_config(json{{"schedule", {{"Tmax", 10}}}}),
                        Catch::Matchers::ContainsSubstring("schedule.Tmax"));
    REQUIRE_THROWS_WITH(validate_config(json{{"training", {{"learning_rate", 0.1}}}}),
                        Catch::Matchers::ContainsSubstring("training.learning_rate"));
    REQUIRE_THROWS_AS(validate_config(json{{"weights", {{"quality", 1.0}}}}), input_error);
}

TEST_CASE("wrong value types name the field") {
    REQUIRE_THROWS_WITH(validate_config(json{{"encoder", {{"d", "many"}}}}),
                        Catch::Matchers::ContainsSubstring("encoder.d"));
    REQUIRE_THROWS_AS(validate_config(json{{"schedule", {{"T", json::array()}}}}), input_error);
}

TEST_CASE("sections must be objects") {
    REQUIRE_THROWS_AS(validate_config(json{{"schedule", 3}}), input_error);
    REQUIRE_THROWS_AS(validate_config(json::array()), input_error);
}

TEST_CASE("dimensional cross-checks") {
    auto with = [](const char* section, json patch) {
        json doc;
        doc[section] = std::move(patch);
        return doc;
    };
    REQUIRE_THROWS_AS(validate_config(with("schedule", {{"T_coarse", 50}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("schedule", {{"T_fine", 101}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("schedule", {{"T", 40}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("schedule", {{"beta_start", 0.0}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("schedule", {{"beta_end", 1.0}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("encoder", {{"max_len", 19}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("encoder", {{"d", 0}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("prompt", {{"n_p", 0}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("backend", {{"precision", "f16"}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("backend", {{"latent_shape", {3, 0, 8}}})),
                      input_error);
    REQUIRE_THROWS_AS(validate_config(with("backend", {{"image_d", 16}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("training", {{"pipeline", "3step"}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("training", {{"lr", 0.0}})), input_error);
    REQUIRE_THROWS_AS(validate_config(with("training", {{"mask_percentile", 101.0}})),
                      input_error);
    REQUIRE_THROWS_AS(validate_config(with("weights", {{"qual", -1.0}})), input_error);
    REQUIRE_THROWS_AS(
        validate_config(with(
            "weights", {{"qual", 0.0}, {"sem", 0.0}, {"tt", 0.0}, {"ti", 0.0}, {"spar", 0.0}})),
        input_error);

    // planted-target fixture forces a static reading (no refresh)
    json doc{{"training", {{"planted_target", true}}}};
    REQUIRE_THROWS_AS(validate_config(doc), input_error);
    doc["training"]["refresh_period"] = 0;
    REQUIRE_NOTHROW(validate_config(doc));
}

TEST_CASE("shrunken max_len only fails when it cannot hold text plus prompt") {
    json doc{{"encoder", {{"n_max", 4}, {"max_len", 6}}}, {"prompt", {{"n_p", 2}}}};
    REQUIRE_NOTHROW(validate_config(doc));
    doc["prompt"]["n_p"] = 3;
    REQUIRE_THROWS_AS(validate_config(doc), input_error);
}

TEST_CASE("to_json round trips every field") {
    json doc{{"backend", {{"precision", "f64"}, {"text_encoder_seed", 9001}}},
             {"schedule", {{"T", 60}, {"T_coarse", 5}, {"T_fine", 30}}},
             {"encoder", {{"d", 16}, {"d_ff", 24}}},
             {"prompt", {{"n_p", 2}, {"init_sigma", 0.5}}},
             {"weights", {{"spar", 0.25}}},
             {"training", {{"iterations", 7}, {"raw_dot_sem", true}, {"refresh_period", 0}}},
             {"io", {{"png_scale", 4}, {"cache_dir", "/tmp/x"}}}};
    RunConfig a = validate_config(doc);
    RunConfig b = validate_config(a.to_json());
    REQUIRE(a.to_json() == b.to_json());
    REQUIRE(b.backend.precision == "f64");
    REQUIRE(b.backend.text_encoder_seed == 9001);
    REQUIRE(b.schedule.T == 60);
    REQUIRE(b.encoder.d_ff == 24);
    REQUIRE(b.prompt.init_sigma == 0.5);
    REQUIRE(b.weights.spar == 0.25);
    REQUIRE(b.training.raw_dot_sem);
    REQUIRE(b.io.cache_dir == "/tmp/x");
}

TEST_CASE("text entry point flags invalid JSON as input error") {
    REQUIRE_THROWS_AS(validate_config_text("{ not json"), input_error);
    REQUIRE_NOTHROW(validate_config_text("{}"));
}
