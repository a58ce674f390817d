#pragma once

// JSON serialization for analysis reports and model checkpoints. Kept out of
// the core headers so the math library does not drag in the JSON dependency.

#include "mfrs/basepatterns.hpp"
#include "mfrs/forecaster.hpp"
#include "mfrs/refseries.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrs {

using json = nlohmann::json;

inline constexpr int kCheckpointFormatVersion = 1;

// ---------------------------------------------------------------------------
// Base-pattern report

inline json to_json(const BasePatternSet& set) {
    json j;
    j["primary"] = set.primary_periods;
    j["harmonics"] = json::array();
    for (const auto& h : set.harmonic_freqs)
        j["harmonics"].push_back({{"num", h.frequency.num}, {"den", h.frequency.den}, {"score", h.score}});
    j["manual"] = set.manual_periods;
    return j;
}

inline BasePatternSet base_patterns_from_json(const json& j) {
    if (!j.is_object() || !j.contains("primary") || !j.contains("harmonics") || !j.contains("manual"))
        throw std::invalid_argument("base-pattern json: need keys primary, harmonics, manual");
    BasePatternSet set;
    for (const auto& v : j.at("primary")) set.primary_periods.push_back(v.get<Index>());
    for (const auto& h : j.at("harmonics")) {
        HarmonicEntry e;
        e.frequency = Rational{h.at("num").get<std::int64_t>(), h.at("den").get<std::int64_t>()};
        e.score = h.at("score").get<double>();
        set.harmonic_freqs.push_back(e);
    }
    for (const auto& v : j.at("manual")) set.manual_periods.push_back(v.get<Index>());
    return set;
}

// ---------------------------------------------------------------------------
// Reference-bank sidecar

inline json rs_sidecar_json(const ReferenceSeriesT<double>& rs) {
    json j;
    j["waveform"] = waveform_name(rs.waveform);
    j["length"] = rs.length();
    j["frequencies"] = json::array();
    for (const auto& f : rs.frequencies) j["frequencies"].push_back({{"num", f.num}, {"den", f.den}});
    return j;
}

inline std::pair<std::vector<Rational>, Waveform> rs_sidecar_from_json(const json& j) {
    if (!j.is_object() || !j.contains("waveform") || !j.contains("frequencies"))
        throw std::invalid_argument("reference sidecar json: need keys waveform, frequencies");
    std::vector<Rational> freqs;
    for (const auto& f : j.at("frequencies"))
        freqs.push_back(Rational{f.at("num").get<std::int64_t>(), f.at("den").get<std::int64_t>()});
    return {freqs, waveform_from_name(j.at("waveform").get<std::string>())};
}

// ---------------------------------------------------------------------------
// Model checkpoints

inline json model_config_to_json(const ModelConfig& c) {
    return json{{"lookback", c.lookback},     {"horizon", c.horizon},
                {"hidden", c.hidden},         {"rs_lookback", c.rs_lookback},
                {"blocks", c.blocks},         {"heads", c.heads},
                {"ffn_mult", c.ffn_mult},     {"shared_embedding", c.shared_embedding},
                {"epsilon_norm", c.epsilon_norm}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.lookback = j.at("lookback").get<Index>();
    c.horizon = j.at("horizon").get<Index>();
    c.hidden = j.at("hidden").get<Index>();
    c.rs_lookback = j.at("rs_lookback").get<Index>();
    c.blocks = j.at("blocks").get<Index>();
    c.heads = j.at("heads").get<Index>();
    c.ffn_mult = j.at("ffn_mult").get<Index>();
    c.shared_embedding = j.at("shared_embedding").get<bool>();
    c.epsilon_norm = j.at("epsilon_norm").get<double>();
    validate_config(c);
    return c;
}

inline json checkpoint_to_json(const ForecastModel& model) {
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["config"] = model_config_to_json(model.config);
    json params = json::object();
    auto& mutable_model = const_cast<ForecastModel&>(model);
    for (const auto& ref : tensor_refs(mutable_model)) {
        params[ref.name] = std::vector<double>(ref.data, ref.data + ref.size);
    }
    j["params"] = params;
    return j;
}

inline ForecastModel checkpoint_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("checkpoint: not a json object");
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw std::invalid_argument("checkpoint: missing or unsupported format_version (expected " +
                                    std::to_string(kCheckpointFormatVersion) + ")");
    if (!j.contains("config") || !j.contains("params"))
        throw std::invalid_argument("checkpoint: need keys config and params");

    const ModelConfig cfg = model_config_from_json(j.at("config"));
    ForecastModel model = init_model(cfg, 0);  // shapes from config; values overwritten below
    const json& params = j.at("params");
    size_t used = 0;
    for (auto& ref : tensor_refs(model)) {
        if (!params.contains(ref.name))
            throw std::invalid_argument("checkpoint: missing parameter tensor '" + ref.name + "'");
        const auto values = params.at(ref.name).get<std::vector<double>>();
        if (static_cast<Index>(values.size()) != ref.size)
            throw std::invalid_argument("checkpoint: tensor '" + ref.name + "' has " +
                                        std::to_string(values.size()) + " values, config implies " +
                                        std::to_string(ref.size));
        std::copy(values.begin(), values.end(), ref.data);
        ++used;
    }
    if (params.size() != used)
        throw std::invalid_argument("checkpoint: file has " + std::to_string(params.size()) +
                                    " tensors, config implies " + std::to_string(used));
    std::string bad;
    if (first_nonfinite(model, &bad))
        throw std::invalid_argument("checkpoint: tensor '" + bad + "' contains non-finite values");
    return model;
}

// ---------------------------------------------------------------------------
// File helpers

inline void write_json_file(const std::string& path, const json& j, int indent = 2) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(indent) << '\n';
    if (!out) throw std::runtime_error("failed writing: " + path);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("invalid json in " + path + ": " + e.what());
    }
    return j;
}

inline void save_checkpoint(const std::string& path, const ForecastModel& model) {
    write_json_file(path, checkpoint_to_json(model), /*indent=*/-1);
}

inline ForecastModel load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

}  // namespace mfrs
