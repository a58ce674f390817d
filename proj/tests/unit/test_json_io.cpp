#include <doctest.h>

#include "mfrs/json_io.hpp"

#include <cstdio>
#include <filesystem>

using namespace mfrs;

TEST_CASE("base-pattern report json round trip") {
    BasePatternSet set;
    set.primary_periods = {24, 168};
    set.harmonic_freqs.push_back({Rational{1, 12}, 3.5});
    set.harmonic_freqs.push_back({Rational{5, 24}, 0.75});
    set.manual_periods = {720};

    json j = to_json(set);
    CHECK(j.at("primary") == json::array({24, 168}));
    CHECK(j.at("harmonics").size() == 2);
    CHECK(j.at("harmonics")[0].at("num") == 1);
    CHECK(j.at("harmonics")[0].at("den") == 12);
    CHECK(j.at("manual") == json::array({720}));

    BasePatternSet back = base_patterns_from_json(json::parse(j.dump()));
    CHECK(back.primary_periods == set.primary_periods);
    REQUIRE(back.harmonic_freqs.size() == 2);
    CHECK(back.harmonic_freqs[0].frequency == set.harmonic_freqs[0].frequency);
    CHECK(back.harmonic_freqs[1].frequency == set.harmonic_freqs[1].frequency);
    CHECK(back.harmonic_freqs[0].score == set.harmonic_freqs[0].score);
    CHECK(back.manual_periods == set.manual_periods);

    CHECK_THROWS_AS(base_patterns_from_json(json::parse("{\"primary\": []}")), std::invalid_argument);
}

TEST_CASE("reference sidecar json round trip") {
    ReferenceSeriesT<double> rs = generate<double>({Rational{1, 24}, Rational{5, 24}}, 48, Waveform::sawtooth);
    json j = rs_sidecar_json(rs);
    CHECK(j.at("waveform") == "sawtooth");
    CHECK(j.at("length") == 48);
    auto [freqs, wf] = rs_sidecar_from_json(json::parse(j.dump()));
    CHECK(wf == Waveform::sawtooth);
    REQUIRE(freqs.size() == 2);
    CHECK(freqs[0] == Rational{1, 24});
    CHECK(freqs[1] == Rational{5, 24});
}

TEST_CASE("checkpoint json round trip preserves parameters bitwise") {
    ModelConfig cfg;
    cfg.lookback = 10;
    cfg.horizon = 4;
    cfg.hidden = 8;
    cfg.blocks = 2;
    cfg.heads = 2;
    ForecastModel model = init_model(cfg, 12345);

    json j = checkpoint_to_json(model);
    CHECK(j.at("format_version") == kCheckpointFormatVersion);
    // Through text and back: shortest-round-trip float output must be exact.
    ForecastModel loaded = checkpoint_from_json(json::parse(j.dump()));

    CHECK(loaded.config.lookback == cfg.lookback);
    CHECK(loaded.config.hidden == cfg.hidden);
    CHECK(loaded.config.blocks == cfg.blocks);
    auto ra = tensor_refs(model), rb = tensor_refs(loaded);
    REQUIRE(ra.size() == rb.size());
    for (size_t t = 0; t < ra.size(); ++t) {
        REQUIRE(ra[t].size == rb[t].size);
        for (Index i = 0; i < ra[t].size; ++i) CHECK(ra[t].data[i] == rb[t].data[i]);
    }

    // Loaded model must be immediately usable.
    RandomStream rng(1);
    Eigen::MatrixXd X(cfg.S(), 2), R(cfg.P(), 2);
    for (Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-1, 1);
    for (Index i = 0; i < R.size(); ++i) R.data()[i] = rng.uniform(-1, 1);
    Eigen::MatrixXd p1 = forward(model, X, R);
    Eigen::MatrixXd p2 = forward(loaded, X, R);
    for (Index i = 0; i < p1.size(); ++i) CHECK(p1.data()[i] == p2.data()[i]);
}

TEST_CASE("checkpoint validation rejects malformed files") {
    ModelConfig cfg;
    cfg.lookback = 6;
    cfg.horizon = 2;
    cfg.hidden = 4;
    cfg.blocks = 1;
    cfg.heads = 1;
    ForecastModel model = init_model(cfg, 7);
    json good = checkpoint_to_json(model);

    json bad_version = good;
    bad_version["format_version"] = 999;
    CHECK_THROWS_AS(checkpoint_from_json(bad_version), std::invalid_argument);

    json no_version = good;
    no_version.erase("format_version");
    CHECK_THROWS_AS(checkpoint_from_json(no_version), std::invalid_argument);

    json missing_tensor = good;
    missing_tensor["params"].erase("projection.W");
    CHECK_THROWS_AS(checkpoint_from_json(missing_tensor), std::invalid_argument);

    json wrong_shape = good;
    wrong_shape["params"]["projection.W"] = std::vector<double>{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(checkpoint_from_json(wrong_shape), std::invalid_argument);

    json extra_tensor = good;
    extra_tensor["params"]["mystery.W"] = std::vector<double>{1.0};
    CHECK_THROWS_AS(checkpoint_from_json(extra_tensor), std::invalid_argument);

    json nonfinite = good;
    nonfinite["params"]["projection.b"][0] = "not-a-number";
    CHECK_THROWS(checkpoint_from_json(nonfinite));

    // Config mismatch: heads not dividing hidden.
    json bad_config = good;
    bad_config["config"]["heads"] = 3;
    CHECK_THROWS_AS(checkpoint_from_json(bad_config), std::invalid_argument);
}

TEST_CASE("checkpoint file save and load") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "mfrs_ckpt_test.json";
    ModelConfig cfg;
    cfg.lookback = 6;
    cfg.horizon = 3;
    cfg.hidden = 4;
    cfg.blocks = 1;
    cfg.heads = 2;
    ForecastModel model = init_model(cfg, 99);
    save_checkpoint(path.string(), model);
    ForecastModel loaded = load_checkpoint(path.string());
    auto ra = tensor_refs(model), rb = tensor_refs(loaded);
    for (size_t t = 0; t < ra.size(); ++t)
        for (Index i = 0; i < ra[t].size; ++i) CHECK(ra[t].data[i] == rb[t].data[i]);
    fs::remove(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.json"), std::runtime_error);
}
