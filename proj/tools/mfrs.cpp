// mfrs command-line tool: period analysis, reference-bank generation,
// synthetic benchmarks, alignment, training, prediction, and evaluation over
// CSV series and JSON artifacts.
//
// Exit codes: 0 success, 1 validation error, 2 runtime/numeric error,
// 64 usage error (unknown flag, missing subcommand).

#include <CLI11.hpp>
#include <json.hpp>

#include <mfrs/alignment.hpp>
#include <mfrs/basepatterns.hpp>
#include <mfrs/csv.hpp>
#include <mfrs/evalharness.hpp>
#include <mfrs/forecaster.hpp>
#include <mfrs/json_io.hpp>
#include <mfrs/rational.hpp>
#include <mfrs/refseries.hpp>
#include <mfrs/series.hpp>
#include <mfrs/synthbench.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mfrs::Index;
using mfrs::json;

namespace {

// ---------------------------------------------------------------------------
// Small helpers

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw std::invalid_argument(what + ": empty path");
    if (!fs::exists(path)) throw std::invalid_argument(what + ": no such file: " + path);
    if (fs::is_directory(path)) throw std::invalid_argument(what + ": is a directory: " + path);
}

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw std::invalid_argument("output directory: empty path");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::invalid_argument("cannot create output directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

mfrs::MultiSeries load_series(const std::string& path, const std::string& what) {
    require_file(path, what);
    return mfrs::read_csv_file(path);
}

std::vector<Index> parse_index_list(const std::string& text, const std::string& what) {
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument(what + ": cannot parse '" + item + "' as an integer");
        }
        if (pos != item.size() || v < 2)
            throw std::invalid_argument(what + ": entries must be integers >= 2, got '" + item + "'");
        out.push_back(static_cast<Index>(v));
    }
    return out;
}

// One JSON scalar in shortest round-trip form (for hand-assembled output).
std::string jnum(double v) { return json(v).dump(); }

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& context) {
    if (!j.is_object()) throw std::invalid_argument(context + ": expected a json object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw std::invalid_argument(context + ": unknown key '" + key + "'");
    }
}

// ---------------------------------------------------------------------------
// JSON views of library structs

json noise_to_json(const mfrs::NoiseSpec& n) {
    if (n.family == mfrs::NoiseFamily::gaussian)
        return json{{"family", "gaussian"}, {"mu", n.mu}, {"sigma", n.sigma}};
    return json{{"family", "poisson"}, {"lambda", n.lambda}};
}

json optimal_to_json(const mfrs::OptimalMetrics& m) {
    json j{{"family", m.family == mfrs::NoiseFamily::gaussian ? "gaussian" : "poisson"},
           {"mse_opt", m.mse_opt},
           {"mae_opt", m.mae_opt},
           {"monte_carlo", m.monte_carlo}};
    if (m.monte_carlo) {
        j["mc_samples"] = m.mc_samples;
        j["mc_tolerance"] = m.mc_tolerance;
    }
    return j;
}

mfrs::OptimalMetrics optimal_from_json(const json& j) {
    mfrs::OptimalMetrics m;
    const std::string family = j.at("family").get<std::string>();
    if (family == "gaussian")
        m.family = mfrs::NoiseFamily::gaussian;
    else if (family == "poisson")
        m.family = mfrs::NoiseFamily::poisson;
    else
        throw std::invalid_argument("optimal metrics: unknown family '" + family + "'");
    m.mse_opt = j.at("mse_opt").get<double>();
    m.mae_opt = j.at("mae_opt").get<double>();
    m.monte_carlo = j.value("monte_carlo", false);
    if (m.monte_carlo) {
        m.mc_samples = j.at("mc_samples").get<long long>();
        m.mc_tolerance = j.at("mc_tolerance").get<double>();
    }
    return m;
}

json report_to_json(const mfrs::EvalReport& r) {
    json j{{"mse", r.mse}, {"mae", r.mae}, {"windows", r.windows}};
    if (!r.per_horizon.empty()) {
        json arr = json::array();
        for (const auto& h : r.per_horizon) arr.push_back({{"step", h.step}, {"mse", h.mse}, {"mae", h.mae}});
        j["per_horizon"] = arr;
    }
    if (r.optimal) j["optimal"] = optimal_to_json(*r.optimal);
    if (r.gap_ratio) j["gap_ratio"] = *r.gap_ratio;
    return j;
}

json baselines_to_json(const mfrs::BaselineReports& b) {
    json j;
    j["repeat_last"] = report_to_json(b.repeat_last);
    j["seasonal"] = b.seasonal ? report_to_json(*b.seasonal) : json(nullptr);
    j["seasonal_lag"] = b.seasonal_lag;
    if (!b.notice.empty()) j["notice"] = b.notice;
    return j;
}

// ---------------------------------------------------------------------------
// Reference-bank IO. The bank is defined by its frequency list and waveform;
// the CSV is a materialization, so loading regenerates the columns (bit-exact)
// at whatever length the caller needs.

mfrs::ReferenceSeries load_bank(const std::string& sidecar_path, Index min_length,
                                const std::string& waveform_override) {
    require_file(sidecar_path, "reference sidecar");
    const json j = mfrs::read_json_file(sidecar_path);
    auto [freqs, waveform] = mfrs::rs_sidecar_from_json(j);
    if (!waveform_override.empty()) waveform = mfrs::waveform_from_name(waveform_override);
    Index length = j.contains("length") ? j.at("length").get<Index>() : 0;
    length = std::max(length, min_length);
    if (length < 2) throw std::invalid_argument("reference sidecar: no usable length");
    return mfrs::generate(freqs, length, waveform);
}

void write_bank(const std::string& out_dir, const mfrs::ReferenceSeries& rs) {
    mfrs::MultiSeries s;
    s.values = rs.values;
    for (const auto& f : rs.frequencies) s.channel_names.push_back(mfrs::rs_column_name(f));
    mfrs::write_csv_file(join_path(out_dir, "rs.csv"), s, /*include_timestamps=*/false);
    mfrs::write_json_file(join_path(out_dir, "rs.json"), mfrs::rs_sidecar_json(rs));
}

// ---------------------------------------------------------------------------
// SVG line plot (static, self-contained)

void write_svg_plot(const std::string& path, const std::vector<double>& target, const std::vector<double>& pred,
                    const std::string& title) {
    if (target.size() != pred.size() || target.empty())
        throw std::invalid_argument("plot: target and prediction must have the same nonzero length");
    const int W = 860, H = 440, ML = 64, MR = 24, MT = 48, MB = 44;
    double lo = target[0], hi = target[0];
    for (double v : target) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : pred) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (hi - lo < 1e-12) { hi += 1.0; lo -= 1.0; }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    const size_t n = target.size();
    auto xmap = [&](size_t i) {
        return ML + (n == 1 ? 0.0 : static_cast<double>(i) * (W - ML - MR) / static_cast<double>(n - 1));
    };
    auto ymap = [&](double v) { return MT + (hi - v) / (hi - lo) * (H - MT - MB); };
    auto polyline = [&](const std::vector<double>& ys, const char* color, const char* dash) {
        std::ostringstream pts;
        for (size_t i = 0; i < n; ++i) pts << xmap(i) << ',' << ymap(ys[i]) << ' ';
        std::ostringstream tag;
        tag << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
        if (dash[0]) tag << " stroke-dasharray=\"" << dash << "\"";
        tag << " points=\"" << pts.str() << "\"/>\n";
        return tag.str();
    };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
        << W << ' ' << H << "\">\n"
        << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
        << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
        << title << "</text>\n"
        << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << (W - ML - MR) << "\" height=\"" << (H - MT - MB)
        << "\" fill=\"none\" stroke=\"#999\"/>\n"
        << "<text x=\"" << ML - 6 << "\" y=\"" << MT + 10 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << jnum(hi) << "</text>\n"
        << "<text x=\"" << ML - 6 << "\" y=\"" << H - MB << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << jnum(lo) << "</text>\n"
        << "<text x=\"" << ML << "\" y=\"" << H - MB + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n"
        << "<text x=\"" << W - MR << "\" y=\"" << H - MB + 16 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << (n - 1) << "</text>\n"
        << polyline(target, "#1f77b4", "")
        << polyline(pred, "#d62728", "5,3")
        << "<line x1=\"" << W - 230 << "\" y1=\"18\" x2=\"" << W - 200 << "\" y2=\"18\" stroke=\"#1f77b4\" "
        << "stroke-width=\"1.5\"/>\n"
        << "<text x=\"" << W - 194 << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"12\">target</text>\n"
        << "<line x1=\"" << W - 130 << "\" y1=\"18\" x2=\"" << W - 100 << "\" y2=\"18\" stroke=\"#d62728\" "
        << "stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>\n"
        << "<text x=\"" << W - 94 << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"12\">prediction</text>\n"
        << "</svg>\n";
    if (!out) throw std::runtime_error("failed writing: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic generation shared by `synth` and `pipeline`

struct SynthRequest {
    int family{1};
    mfrs::NoiseSpec noise;
    Index channels{-1};
    Index length{-1};
    std::uint64_t seed{0};
};

int parse_family(const std::string& name) {
    if (name.size() == 8 && name.rfind("compose", 0) == 0 && name[7] >= '1' && name[7] <= '4') return name[7] - '0';
    throw std::invalid_argument("unknown family '" + name + "' (expected compose1|compose2|compose3|compose4)");
}

struct SynthOutput {
    mfrs::ComposeSpec spec;
    mfrs::ComposeResult data;
    json manifest;
};

SynthOutput run_synth(const SynthRequest& req, const std::string& out_dir, bool no_timestamp) {
    mfrs::ComposeSpec spec = mfrs::compose_preset(req.family, req.noise, req.seed);
    if (req.channels > 0) spec.channels = req.channels;
    if (req.length > 0) spec.length = req.length;

    SynthOutput out;
    out.spec = spec;
    out.data = mfrs::generate_compose(spec);

    ensure_out_dir(out_dir);
    mfrs::write_csv_file(join_path(out_dir, "X.csv"), out.data.x, /*include_timestamps=*/false);
    mfrs::write_csv_file(join_path(out_dir, "Z.csv"), out.data.z, /*include_timestamps=*/false);
    mfrs::write_csv_file(join_path(out_dir, "U.csv"), out.data.u, /*include_timestamps=*/false);

    json m;
    m["family"] = "compose" + std::to_string(req.family);
    m["periods"] = spec.periods;
    m["lcm"] = mfrs::periods_lcm(spec.periods);
    m["length"] = mfrs::resolve_length(spec);
    m["channels"] = spec.channels;
    m["seed"] = spec.seed;
    m["noise"] = noise_to_json(spec.noise);
    m["amplitudes"] = out.data.amplitudes;
    m["optimal"] = optimal_to_json(mfrs::optimal_metrics(spec.noise));
    m["files"] = json{{"x", "X.csv"}, {"z", "Z.csv"}, {"u", "U.csv"}};
    if (req.family == 4)
        m["note"] = "the source table for family 4 lists the noise term twice; it is read as the deterministic "
                    "long-period signal plus poisson noise, completing the 2x2 grid";
    if (!no_timestamp) m["generated_at"] = iso_timestamp();
    mfrs::write_json_file(join_path(out_dir, "manifest.json"), m);
    out.manifest = m;
    return out;
}

// ---------------------------------------------------------------------------
// Training shared by `train` and `pipeline`

struct TrainArtifacts {
    mfrs::ForecastModel model;
    mfrs::TrainResult result;
};

json train_log_json(const mfrs::TrainResult& tr) {
    json hist = json::array();
    for (size_t i = 0; i < tr.history.size(); ++i) {
        const auto& e = tr.history[i];
        hist.push_back({{"epoch", i + 1}, {"train_mse", e.train_loss}, {"val_mse", e.val_loss}, {"lr", e.lr}});
    }
    return json{{"history", hist},
                {"best_epoch", tr.best_epoch + 1},
                {"best_val_mse", tr.best_val_loss},
                {"early_stopped", tr.early_stopped}};
}

void print_train_log(const mfrs::TrainResult& tr, Index epochs_requested) {
    for (size_t i = 0; i < tr.history.size(); ++i) {
        const auto& e = tr.history[i];
        std::cout << "epoch " << (i + 1) << "/" << epochs_requested << " train_mse=" << jnum(e.train_loss)
                  << " val_mse=" << jnum(e.val_loss) << " lr=" << jnum(e.lr) << "\n";
    }
    if (tr.early_stopped)
        std::cout << "early stop after epoch " << tr.history.size() << " (validation mse stopped improving)\n";
    std::cout << "best epoch " << (tr.best_epoch + 1) << " val_mse=" << jnum(tr.best_val_loss)
              << " (parameters restored to best)\n";
}

TrainArtifacts run_training(const mfrs::SplitResult& split, const mfrs::ReferenceSeries& rs,
                            const mfrs::ModelConfig& mc, const mfrs::TrainConfig& tc) {
    TrainArtifacts art{mfrs::init_model(mc, tc.seed), {}};
    const mfrs::TrainingData data = mfrs::make_training_data(split);
    art.result = mfrs::train(art.model, data, rs, tc);
    return art;
}

double mse_of(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mse: shape mismatch");
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Subcommand implementations

struct AnalyzeOpts {
    std::string input, out, manual;
    Index period_cap{-1}, max_harmonics{8}, min_channels{-1};
    double min_score{-1.0};
};

int cmd_analyze(const AnalyzeOpts& o) {
    const mfrs::MultiSeries series = load_series(o.input, "input series");
    mfrs::ExtractionConfig cfg;
    cfg.L_p = o.period_cap;
    cfg.Q = o.max_harmonics;
    cfg.min_channels = o.min_channels;
    cfg.min_harmonic_score = o.min_score;
    const std::vector<Index> manual = o.manual.empty() ? std::vector<Index>{} : parse_index_list(o.manual, "--manual");
    const mfrs::BasePatternSet set = mfrs::analyze_series(series, cfg, manual);
    const json j = mfrs::to_json(set);
    std::cout << j.dump(2) << "\n";
    if (!o.out.empty()) {
        ensure_out_dir(o.out);
        mfrs::write_json_file(join_path(o.out, "patterns.json"), j);
    }
    return 0;
}

struct RsGenOpts {
    std::string patterns, out, waveform{"sine"};
    Index length{0};
};

int cmd_rs_gen(const RsGenOpts& o) {
    require_file(o.patterns, "patterns file");
    const mfrs::BasePatternSet set = mfrs::base_patterns_from_json(mfrs::read_json_file(o.patterns));
    const std::vector<mfrs::Rational> freqs = mfrs::all_frequencies(set);
    if (o.length < 2) throw std::invalid_argument("--length must be >= 2");
    const mfrs::ReferenceSeries rs = mfrs::generate(freqs, o.length, mfrs::waveform_from_name(o.waveform));
    ensure_out_dir(o.out);
    write_bank(o.out, rs);
    std::cout << json{{"columns", rs.count()}, {"length", rs.length()}, {"waveform", mfrs::waveform_name(rs.waveform)}}
                     .dump(2)
              << "\n";
    return 0;
}

struct SynthOpts {
    std::string family, out;
    double sigma{1.0}, mu{0.0}, lambda{1.0};
    Index channels{-1}, length{-1};
    std::uint64_t seed{0};
    bool no_timestamp{false};
    bool sigma_given{false}, mu_given{false}, lambda_given{false};
};

int cmd_synth(const SynthOpts& o) {
    SynthRequest req;
    req.family = parse_family(o.family);
    const bool gaussian = req.family == 1 || req.family == 2;
    if (gaussian) {
        if (o.lambda_given) throw std::invalid_argument(o.family + " uses gaussian noise; --lambda does not apply");
        req.noise = mfrs::NoiseSpec::gaussian(o.mu, o.sigma);
    } else {
        if (o.sigma_given || o.mu_given)
            throw std::invalid_argument(o.family + " uses poisson noise; --sigma/--mu do not apply");
        req.noise = mfrs::NoiseSpec::poisson(o.lambda);
    }
    req.channels = o.channels;
    req.length = o.length;
    req.seed = o.seed;
    const SynthOutput out = run_synth(req, o.out, o.no_timestamp);
    json summary{{"family", o.family},
                 {"length", out.data.x.length()},
                 {"channels", out.data.x.channels()},
                 {"optimal", out.manifest.at("optimal")}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

struct AlignOpts {
    std::string obs, train, patterns;
    Index tmax{-1}, channel{0};
    bool all_channels{false};
};

int cmd_align(const AlignOpts& o) {
    const mfrs::MultiSeries obs = load_series(o.obs, "observation");
    const mfrs::MultiSeries train = load_series(o.train, "training series");
    if (train.channels() != obs.channels())
        throw std::invalid_argument("align: training data has " + std::to_string(train.channels()) +
                                    " channels, observation has " + std::to_string(obs.channels()));
    Index t_max = o.tmax;
    if (t_max < 1) {
        mfrs::BasePatternSet set;
        if (!o.patterns.empty()) {
            require_file(o.patterns, "patterns file");
            set = mfrs::base_patterns_from_json(mfrs::read_json_file(o.patterns));
        } else {
            set = mfrs::analyze_series(train);
        }
        t_max = mfrs::max_period(set);
    }
    const Index S = obs.length();
    if (train.length() < t_max + S)
        throw std::invalid_argument("align: training series too short (need " + std::to_string(t_max + S) +
                                    " rows for max period " + std::to_string(t_max) + " plus span " +
                                    std::to_string(S) + ", have " + std::to_string(train.length()) + ")");
    const Eigen::MatrixXd intercepted = train.values.bottomRows(t_max + S);
    std::vector<Index> channels;
    if (o.all_channels)
        for (Index c = 0; c < obs.channels(); ++c) channels.push_back(c);
    else
        channels.push_back(o.channel);
    const mfrs::AlignmentResult r = mfrs::align(obs.values, intercepted, channels);
    std::cout << "{\"xi\": " << r.xi << ", \"score\": " << jnum(r.score) << "}\n";
    return 0;
}

struct SplitOpts {
    double train_frac{0.7}, val_frac{0.1}, test_frac{0.2};
    mfrs::SplitSpec spec() const { return {train_frac, val_frac, test_frac}; }
};

struct ModelOpts {
    Index lookback{96}, horizon{96}, hidden{64}, rs_lookback{-1}, blocks{2}, heads{1}, ffn_mult{4};
    bool no_shared_embedding{false};

    mfrs::ModelConfig config() const {
        mfrs::ModelConfig mc;
        mc.lookback = lookback;
        mc.horizon = horizon;
        mc.hidden = hidden;
        mc.rs_lookback = rs_lookback;
        mc.blocks = blocks;
        mc.heads = heads;
        mc.ffn_mult = ffn_mult;
        mc.shared_embedding = !no_shared_embedding;
        mfrs::validate_config(mc);
        return mc;
    }
};

mfrs::OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "adam") return mfrs::OptimizerKind::adam;
    if (name == "sgd") return mfrs::OptimizerKind::sgd;
    throw std::invalid_argument("unknown optimizer '" + name + "' (expected adam|sgd)");
}

struct TrainOpts {
    std::string input, rs, out, waveform, optimizer{"adam"};
    ModelOpts model;
    SplitOpts split;
    Index epochs{30}, batch{32}, patience{5};
    double lr{1e-3}, lr_decay{0.98};
    std::uint64_t seed{0};
};

int cmd_train(const TrainOpts& o) {
    const mfrs::MultiSeries series = load_series(o.input, "input series");
    const mfrs::SplitResult split = mfrs::chronological_split(series, o.split.spec());
    const mfrs::ModelConfig mc = o.model.config();
    const Index bank_rows = series.length() + std::max<Index>(0, mc.P() - mc.S());
    const mfrs::ReferenceSeries rs = load_bank(o.rs, bank_rows, o.waveform);

    mfrs::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch = o.batch;
    tc.lr = o.lr;
    tc.lr_decay = o.lr_decay;
    tc.seed = o.seed;
    tc.optimizer = optimizer_from_name(o.optimizer);
    tc.patience = o.patience;

    const TrainArtifacts art = run_training(split, rs, mc, tc);
    print_train_log(art.result, tc.epochs);

    ensure_out_dir(o.out);
    mfrs::save_checkpoint(join_path(o.out, "model.json"), art.model);
    mfrs::write_json_file(join_path(o.out, "train_log.json"), train_log_json(art.result));
    mfrs::write_json_file(join_path(o.out, "rs.json"), mfrs::rs_sidecar_json(rs));
    return 0;
}

struct PredictOpts {
    std::string model, obs, rs, out, waveform;
    Index xi{-1};
};

int cmd_predict(const PredictOpts& o) {
    require_file(o.model, "model checkpoint");
    const mfrs::ForecastModel model = mfrs::load_checkpoint(o.model);
    const mfrs::MultiSeries obs = load_series(o.obs, "observation");
    if (obs.length() != model.config.S())
        throw std::invalid_argument("observation has " + std::to_string(obs.length()) + " rows, model lookback is " +
                                    std::to_string(model.config.S()));
    if (o.xi < 0) throw std::invalid_argument("--xi must be >= 0");
    const mfrs::ReferenceSeries rs = load_bank(o.rs, o.xi + model.config.P(), o.waveform);
    const Eigen::MatrixXd pred = mfrs::predict(model, obs.values, rs, o.xi);

    mfrs::MultiSeries out_series;
    out_series.values = pred;
    out_series.channel_names = obs.channel_names;
    ensure_out_dir(o.out);
    const std::string path = join_path(o.out, "prediction.csv");
    mfrs::write_csv_file(path, out_series, /*include_timestamps=*/false);
    std::cout << json{{"written", path}, {"rows", pred.rows()}, {"channels", pred.cols()}}.dump(2) << "\n";
    return 0;
}

struct EvalOpts {
    std::string model, input, rs, manifest, plot, out, waveform;
    SplitOpts split;
    bool against_optimal{false};
    Index window{0}, channel{0};
};

int cmd_eval(const EvalOpts& o) {
    require_file(o.model, "model checkpoint");
    const mfrs::ForecastModel model = mfrs::load_checkpoint(o.model);
    const mfrs::MultiSeries series = load_series(o.input, "input series");
    const mfrs::SplitResult split = mfrs::chronological_split(series, o.split.spec());
    const mfrs::ModelConfig& mc = model.config;
    const Index bank_rows = series.length() + std::max<Index>(0, mc.P() - mc.S());
    const mfrs::ReferenceSeries rs = load_bank(o.rs, bank_rows, o.waveform);

    mfrs::EvalReport report = mfrs::evaluate(model, split.test, rs, split.test_start, /*per_horizon=*/true);
    if (o.against_optimal) {
        if (o.manifest.empty()) throw std::invalid_argument("--against-optimal needs --manifest");
        require_file(o.manifest, "manifest");
        const json m = mfrs::read_json_file(o.manifest);
        if (!m.contains("optimal")) throw std::invalid_argument("manifest has no 'optimal' entry");
        mfrs::attach_optimal(report, optimal_from_json(m.at("optimal")));
    }

    const json j = report_to_json(report);
    std::cout << j.dump(2) << "\n";
    if (!o.out.empty()) {
        ensure_out_dir(o.out);
        mfrs::write_json_file(join_path(o.out, "eval.json"), j);
    }

    if (!o.plot.empty()) {
        const Index S = mc.S(), T = mc.T();
        const Index last_start = split.test.length() - S - T;
        if (last_start < 0) throw std::invalid_argument("test split too short for a plot window");
        if (o.window < 0 || o.window > last_start)
            throw std::invalid_argument("--window must lie in [0, " + std::to_string(last_start) + "]");
        if (o.channel < 0 || o.channel >= split.test.channels())
            throw std::invalid_argument("--channel must lie in [0, " + std::to_string(split.test.channels()) + ")");
        const Eigen::MatrixXd lookback = split.test.values.middleRows(o.window, S);
        const Eigen::MatrixXd target = split.test.values.middleRows(o.window + S, T);
        const Eigen::MatrixXd pred =
            mfrs::forward(model, lookback, mfrs::slice_rs(rs, split.test_start + o.window, mc.P()));
        std::vector<double> tv(static_cast<size_t>(T)), pv(static_cast<size_t>(T));
        for (Index t = 0; t < T; ++t) {
            tv[static_cast<size_t>(t)] = target(t, o.channel);
            pv[static_cast<size_t>(t)] = pred(t, o.channel);
        }
        write_svg_plot(o.plot, tv, pv,
                       "window " + std::to_string(o.window) + ", channel " + std::to_string(o.channel));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineOpts {
    std::string config, out;
    std::uint64_t seed{0};
    bool seed_given{false}, out_given{false}, no_timestamp{false};
};

mfrs::ModelConfig model_config_from_partial(const json& j) {
    check_keys(j, {"lookback", "horizon", "hidden", "rs_lookback", "blocks", "heads", "ffn_mult", "shared_embedding",
                   "epsilon_norm"},
               "config.model");
    mfrs::ModelConfig mc;
    if (j.contains("lookback")) mc.lookback = j.at("lookback").get<Index>();
    if (j.contains("horizon")) mc.horizon = j.at("horizon").get<Index>();
    if (j.contains("hidden")) mc.hidden = j.at("hidden").get<Index>();
    if (j.contains("rs_lookback")) mc.rs_lookback = j.at("rs_lookback").get<Index>();
    if (j.contains("blocks")) mc.blocks = j.at("blocks").get<Index>();
    if (j.contains("heads")) mc.heads = j.at("heads").get<Index>();
    if (j.contains("ffn_mult")) mc.ffn_mult = j.at("ffn_mult").get<Index>();
    if (j.contains("shared_embedding")) mc.shared_embedding = j.at("shared_embedding").get<bool>();
    if (j.contains("epsilon_norm")) mc.epsilon_norm = j.at("epsilon_norm").get<double>();
    mfrs::validate_config(mc);
    return mc;
}

mfrs::TrainConfig train_config_from_partial(const json& j, std::uint64_t seed) {
    check_keys(j, {"epochs", "batch", "lr", "lr_decay", "patience", "optimizer"}, "config.train");
    mfrs::TrainConfig tc;
    tc.seed = seed;
    if (j.contains("epochs")) tc.epochs = j.at("epochs").get<Index>();
    if (j.contains("batch")) tc.batch = j.at("batch").get<Index>();
    if (j.contains("lr")) tc.lr = j.at("lr").get<double>();
    if (j.contains("lr_decay")) tc.lr_decay = j.at("lr_decay").get<double>();
    if (j.contains("patience")) tc.patience = j.at("patience").get<Index>();
    if (j.contains("optimizer")) tc.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
    return tc;
}

int cmd_pipeline(const PipelineOpts& o) {
    require_file(o.config, "config");
    const json cfg = mfrs::read_json_file(o.config);
    check_keys(cfg, {"version", "seed", "out", "no_timestamp", "data", "waveform", "split", "extraction", "model",
                     "train"},
               "config");
    if (!cfg.contains("version") || !cfg.at("version").is_number_integer() || cfg.at("version").get<int>() != 1)
        throw std::invalid_argument("config: 'version' must be the integer 1");

    const std::uint64_t seed = o.seed_given ? o.seed : cfg.value("seed", std::uint64_t{0});
    const std::string out_dir = o.out_given ? o.out : cfg.value("out", std::string{"mfrs_out"});
    const bool no_timestamp = o.no_timestamp || cfg.value("no_timestamp", false);
    const std::string waveform_name = cfg.value("waveform", std::string{"sine"});
    const mfrs::Waveform waveform = mfrs::waveform_from_name(waveform_name);
    ensure_out_dir(out_dir);
    auto progress = [](const std::string& line) { std::cerr << "[pipeline] " << line << "\n"; };

    // --- data -------------------------------------------------------------
    if (!cfg.contains("data")) throw std::invalid_argument("config: missing 'data'");
    const json& data_cfg = cfg.at("data");
    check_keys(data_cfg, {"synth", "input"}, "config.data");
    if (data_cfg.contains("synth") == data_cfg.contains("input"))
        throw std::invalid_argument("config.data: exactly one of 'synth' or 'input' is required");

    mfrs::MultiSeries series;
    std::optional<mfrs::OptimalMetrics> optimal;
    std::optional<Index> fundamental;
    json data_summary;
    if (data_cfg.contains("synth")) {
        const json& sj = data_cfg.at("synth");
        check_keys(sj, {"family", "sigma", "mu", "lambda", "channels", "length"}, "config.data.synth");
        SynthRequest req;
        req.family = parse_family(sj.at("family").get<std::string>());
        const bool gaussian = req.family == 1 || req.family == 2;
        if (gaussian) {
            if (sj.contains("lambda"))
                throw std::invalid_argument("config.data.synth: 'lambda' does not apply to a gaussian family");
            req.noise = mfrs::NoiseSpec::gaussian(sj.value("mu", 0.0), sj.value("sigma", 1.0));
        } else {
            if (sj.contains("sigma") || sj.contains("mu"))
                throw std::invalid_argument("config.data.synth: 'sigma'/'mu' do not apply to a poisson family");
            req.noise = mfrs::NoiseSpec::poisson(sj.value("lambda", 1.0));
        }
        req.channels = sj.value("channels", Index{-1});
        req.length = sj.value("length", Index{-1});
        req.seed = seed;
        progress("synth: generating " + sj.at("family").get<std::string>());
        SynthOutput synth = run_synth(req, out_dir, no_timestamp);
        series = std::move(synth.data.x);
        optimal = optimal_from_json(synth.manifest.at("optimal"));
        fundamental = mfrs::periods_lcm(synth.spec.periods);
        data_summary = json{{"kind", "synth"}, {"manifest", "manifest.json"}, {"family", synth.manifest.at("family")}};
    } else {
        const std::string path = data_cfg.at("input").get<std::string>();
        progress("ingest: " + path);
        series = load_series(path, "config.data.input");
        data_summary = json{{"kind", "input"}, {"path", path}};
    }

    // --- split ------------------------------------------------------------
    SplitOpts split_opts;
    if (cfg.contains("split")) {
        const json& pj = cfg.at("split");
        check_keys(pj, {"train", "val", "test"}, "config.split");
        split_opts.train_frac = pj.value("train", 0.7);
        split_opts.val_frac = pj.value("val", 0.1);
        split_opts.test_frac = pj.value("test", 0.2);
    }
    const mfrs::SplitResult split = mfrs::chronological_split(series, split_opts.spec());
    progress("split: train=" + std::to_string(split.train.length()) + " val=" + std::to_string(split.val.length()) +
             " test=" + std::to_string(split.test.length()));

    // --- analyze (train split only) ----------------------------------------
    mfrs::ExtractionConfig ex;
    std::vector<Index> manual;
    if (cfg.contains("extraction")) {
        const json& ej = cfg.at("extraction");
        check_keys(ej, {"period_cap", "max_harmonics", "min_channels", "min_score", "manual"}, "config.extraction");
        ex.L_p = ej.value("period_cap", Index{-1});
        ex.Q = ej.value("max_harmonics", Index{8});
        ex.min_channels = ej.value("min_channels", Index{-1});
        ex.min_harmonic_score = ej.value("min_score", -1.0);
        if (ej.contains("manual")) manual = ej.at("manual").get<std::vector<Index>>();
    }
    const mfrs::BasePatternSet patterns = mfrs::analyze_series(split.train, ex, manual);
    const json patterns_json = mfrs::to_json(patterns);
    mfrs::write_json_file(join_path(out_dir, "patterns.json"), patterns_json);
    {
        std::string periods;
        for (Index p : patterns.primary_periods) periods += (periods.empty() ? "" : ",") + std::to_string(p);
        progress("analyze: primary periods {" + periods + "}, " +
                 std::to_string(patterns.harmonic_freqs.size()) + " harmonics");
    }

    // --- model/train configs (needed before the bank length) ---------------
    const mfrs::ModelConfig mc = model_config_from_partial(cfg.value("model", json::object()));
    const mfrs::TrainConfig tc = train_config_from_partial(cfg.value("train", json::object()), seed);

    // --- reference bank -----------------------------------------------------
    const std::vector<mfrs::Rational> freqs = mfrs::all_frequencies(patterns);
    const Index bank_rows = series.length() + std::max<Index>(0, mc.P() - mc.S());
    const mfrs::ReferenceSeries rs = mfrs::generate(freqs, bank_rows, waveform);
    write_bank(out_dir, rs);
    progress("rs-gen: " + std::to_string(rs.count()) + " columns x " + std::to_string(rs.length()) + " rows (" +
             waveform_name + ")");

    // --- train --------------------------------------------------------------
    progress("train: " + std::to_string(tc.epochs) + " epochs");
    const TrainArtifacts art = run_training(split, rs, mc, tc);
    mfrs::save_checkpoint(join_path(out_dir, "model.json"), art.model);
    mfrs::write_json_file(join_path(out_dir, "train_log.json"), train_log_json(art.result));
    progress("train: best epoch " + std::to_string(art.result.best_epoch + 1) + " val_mse=" +
             jnum(art.result.best_val_loss));

    // --- eval ----------------------------------------------------------------
    mfrs::EvalReport report = mfrs::evaluate(art.model, split.test, rs, split.test_start, /*per_horizon=*/true);
    if (optimal) mfrs::attach_optimal(report, *optimal);
    mfrs::write_json_file(join_path(out_dir, "eval.json"), report_to_json(report));
    progress("eval: test mse=" + jnum(report.mse) + " mae=" + jnum(report.mae) + " over " +
             std::to_string(report.windows) + " windows");

    // --- naive baselines ------------------------------------------------------
    json baselines_json;
    {
        Index lag = 0;
        for (Index p : patterns.primary_periods) lag = std::max(lag, p);
        if (lag == 0) lag = mfrs::max_period(patterns);
        const mfrs::BaselineReports baselines =
            mfrs::naive_baselines(split.test.values, mc.S(), mc.T(), lag);
        baselines_json = baselines_to_json(baselines);
    }

    // --- alignment demo -------------------------------------------------------
    json align_json;
    const Index t_m = mfrs::max_period(patterns);
    const Index S = mc.S(), T = mc.T();
    if (split.test.length() < S + T) {
        align_json = json{{"skipped", "test split shorter than lookback + horizon"}};
    } else if (split.train.length() < t_m + S) {
        align_json = json{{"skipped", "train split shorter than max period + lookback"}};
    } else {
        const Eigen::MatrixXd obs = split.test.values.topRows(S);
        const Eigen::MatrixXd intercepted = split.train.values.bottomRows(t_m + S);
        std::vector<Index> channels;
        for (Index c = 0; c < series.channels(); ++c) channels.push_back(c);
        const mfrs::AlignmentResult r = mfrs::align(obs, intercepted, channels);
        const Index xi_abs = split.train.length() - (t_m + S) + r.xi;
        const Eigen::MatrixXd aligned_pred = mfrs::predict(art.model, obs, rs, xi_abs);
        const double aligned_mse = mse_of(aligned_pred, split.test.values.middleRows(S, T));
        align_json = json{{"xi", r.xi},
                          {"score", r.score},
                          {"absolute_phase", xi_abs},
                          {"aligned_mse", aligned_mse}};
        if (fundamental) {
            const Index diff = (xi_abs - split.test_start) % *fundamental;
            align_json["phase_consistent"] = ((diff + *fundamental) % *fundamental) == 0;
        }
        progress("align: xi=" + std::to_string(r.xi) + " score=" + jnum(r.score));
    }

    // --- summary ----------------------------------------------------------------
    json summary;
    summary["version"] = 1;
    summary["seed"] = seed;
    summary["out"] = out_dir;
    summary["data"] = data_summary;
    summary["split"] = json{{"train_rows", split.train.length()},
                            {"val_rows", split.val.length()},
                            {"test_rows", split.test.length()},
                            {"test_start", split.test_start}};
    summary["patterns"] = patterns_json;
    summary["reference"] = json{{"columns", rs.count()}, {"length", rs.length()}, {"waveform", waveform_name}};
    summary["train"] = train_log_json(art.result);
    summary["eval"] = report_to_json(report);
    summary["baselines"] = baselines_json;
    summary["align_demo"] = align_json;
    json files{{"patterns", "patterns.json"}, {"rs_csv", "rs.csv"},   {"rs_sidecar", "rs.json"},
               {"model", "model.json"},       {"train_log", "train_log.json"}, {"eval", "eval.json"},
               {"summary", "pipeline_summary.json"}};
    if (data_cfg.contains("synth")) {
        files["x"] = "X.csv";
        files["z"] = "Z.csv";
        files["u"] = "U.csv";
        files["manifest"] = "manifest.json";
    }
    summary["files"] = files;
    if (!no_timestamp) summary["generated_at"] = iso_timestamp();
    mfrs::write_json_file(join_path(out_dir, "pipeline_summary.json"), summary);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"mfrs: multi-frequency reference series forecasting toolkit"};
    app.require_subcommand(1);

    AnalyzeOpts an;
    CLI::App* analyze = app.add_subcommand("analyze", "detect base patterns in a CSV series");
    analyze->add_option("--input", an.input, "input series CSV")->required();
    analyze->add_option("--out", an.out, "directory to write patterns.json");
    analyze->add_option("--period-cap", an.period_cap, "largest period scanned (-1: min(5000, L/4))");
    analyze->add_option("--max-harmonics", an.max_harmonics, "harmonic budget per primary period");
    analyze->add_option("--min-channels", an.min_channels, "channels scanned for harmonic scores (-1: all)");
    analyze->add_option("--min-score", an.min_score, "harmonic score floor (-1: default)");
    analyze->add_option("--manual", an.manual, "comma-separated manual periods, e.g. 24,168");

    RsGenOpts rg;
    CLI::App* rs_gen = app.add_subcommand("rs-gen", "materialize the reference bank for a pattern set");
    rs_gen->add_option("--patterns", rg.patterns, "patterns.json from analyze")->required();
    rs_gen->add_option("--length", rg.length, "bank length in steps")->required();
    rs_gen->add_option("--waveform", rg.waveform, "sine|sawtooth|rectangle|pulse");
    rs_gen->add_option("--out", rg.out, "output directory (rs.csv, rs.json)")->required();

    SynthOpts sy;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
    synth->add_option("--family", sy.family, "compose1|compose2|compose3|compose4")->required();
    CLI::Option* sy_sigma = synth->add_option("--sigma", sy.sigma, "gaussian noise sd (families 1,2)");
    CLI::Option* sy_mu = synth->add_option("--mu", sy.mu, "gaussian noise mean (families 1,2)");
    CLI::Option* sy_lambda = synth->add_option("--lambda", sy.lambda, "poisson intensity (families 3,4)");
    synth->add_option("--channels", sy.channels, "channel count (default 4)");
    synth->add_option("--length", sy.length, "series length (default min(20*lcm, 100000))");
    synth->add_option("--seed", sy.seed, "generator seed");
    synth->add_option("--out", sy.out, "output directory (X.csv, Z.csv, U.csv, manifest.json)")->required();
    synth->add_flag("--no-timestamp", sy.no_timestamp, "omit generated_at from the manifest");

    AlignOpts al;
    CLI::App* align = app.add_subcommand("align", "phase-align an observation against training data");
    align->add_option("--obs", al.obs, "observation CSV (the lookback window)")->required();
    align->add_option("--train", al.train, "training series CSV")->required();
    align->add_option("--patterns", al.patterns, "patterns.json (default: analyze the training series)");
    align->add_option("--tmax", al.tmax, "override the max base-pattern period");
    align->add_option("--channel", al.channel, "channel used for scoring (default 0)");
    align->add_flag("--all-channels", al.all_channels, "score with every channel");

    TrainOpts tr;
    CLI::App* train = app.add_subcommand("train", "train a forecaster on a CSV series");
    train->add_option("--input", tr.input, "full series CSV (split chronologically)")->required();
    train->add_option("--rs", tr.rs, "reference sidecar rs.json")->required();
    train->add_option("--out", tr.out, "output directory (model.json, train_log.json, rs.json)")->required();
    train->add_option("--lookback", tr.model.lookback, "lookback steps S");
    train->add_option("--horizon", tr.model.horizon, "forecast steps T");
    train->add_option("--hidden", tr.model.hidden, "embedding width D");
    train->add_option("--rs-lookback", tr.model.rs_lookback, "reference lookback (-1: same as S)");
    train->add_option("--blocks", tr.model.blocks, "attention blocks");
    train->add_option("--heads", tr.model.heads, "attention heads");
    train->add_option("--ffn-mult", tr.model.ffn_mult, "feed-forward width multiplier");
    train->add_flag("--no-shared-embedding", tr.model.no_shared_embedding, "separate reference embedding");
    train->add_option("--waveform", tr.waveform, "override the bank waveform");
    train->add_option("--seed", tr.seed, "init/shuffle seed");
    train->add_option("--epochs", tr.epochs, "training epochs");
    train->add_option("--lr", tr.lr, "learning rate");
    train->add_option("--lr-decay", tr.lr_decay, "per-epoch lr decay");
    train->add_option("--batch", tr.batch, "batch size");
    train->add_option("--patience", tr.patience, "early-stop patience");
    train->add_option("--optimizer", tr.optimizer, "adam|sgd");
    train->add_option("--train-frac", tr.split.train_frac, "train fraction");
    train->add_option("--val-frac", tr.split.val_frac, "validation fraction");
    train->add_option("--test-frac", tr.split.test_frac, "test fraction");

    PredictOpts pr;
    CLI::App* predict = app.add_subcommand("predict", "forecast from an observation window");
    predict->add_option("--model", pr.model, "model.json checkpoint")->required();
    predict->add_option("--obs", pr.obs, "observation CSV with exactly S rows")->required();
    predict->add_option("--rs", pr.rs, "reference sidecar rs.json")->required();
    predict->add_option("--xi", pr.xi, "alignment offset into the bank")->required();
    predict->add_option("--waveform", pr.waveform, "override the bank waveform");
    predict->add_option("--out", pr.out, "output directory (prediction.csv)")->required();

    EvalOpts ev;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a model on the test split of a series");
    eval->add_option("--model", ev.model, "model.json checkpoint")->required();
    eval->add_option("--input", ev.input, "full series CSV (split chronologically)")->required();
    eval->add_option("--rs", ev.rs, "reference sidecar rs.json")->required();
    eval->add_option("--manifest", ev.manifest, "synthetic manifest.json (for --against-optimal)");
    eval->add_flag("--against-optimal", ev.against_optimal, "attach closed-form optimal metrics");
    eval->add_option("--plot", ev.plot, "write a static SVG line plot to this path");
    eval->add_option("--window", ev.window, "test window for --plot (default 0)");
    eval->add_option("--channel", ev.channel, "channel for --plot (default 0)");
    eval->add_option("--waveform", ev.waveform, "override the bank waveform");
    eval->add_option("--out", ev.out, "directory to write eval.json");
    eval->add_option("--train-frac", ev.split.train_frac, "train fraction");
    eval->add_option("--val-frac", ev.split.val_frac, "validation fraction");
    eval->add_option("--test-frac", ev.split.test_frac, "test fraction");

    PipelineOpts pl;
    CLI::App* pipeline = app.add_subcommand("pipeline", "synth/ingest, analyze, train, and evaluate end to end");
    pipeline->add_option("--config", pl.config, "pipeline config JSON")->required();
    CLI::Option* pl_seed = pipeline->add_option("--seed", pl.seed, "override the config seed");
    CLI::Option* pl_out = pipeline->add_option("--out", pl.out, "override the config output directory");
    pipeline->add_flag("--no-timestamp", pl.no_timestamp, "omit generated_at fields");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run 'mfrs --help' or 'mfrs <subcommand> --help' for usage\n";
        return 64;
    }

    sy.sigma_given = sy_sigma->count() > 0;
    sy.mu_given = sy_mu->count() > 0;
    sy.lambda_given = sy_lambda->count() > 0;
    pl.seed_given = pl_seed->count() > 0;
    pl.out_given = pl_out->count() > 0;

    try {
        if (app.got_subcommand(analyze)) return cmd_analyze(an);
        if (app.got_subcommand(rs_gen)) return cmd_rs_gen(rg);
        if (app.got_subcommand(synth)) return cmd_synth(sy);
        if (app.got_subcommand(align)) return cmd_align(al);
        if (app.got_subcommand(train)) return cmd_train(tr);
        if (app.got_subcommand(predict)) return cmd_predict(pr);
        if (app.got_subcommand(eval)) return cmd_eval(ev);
        if (app.got_subcommand(pipeline)) return cmd_pipeline(pl);
        std::cerr << "usage error: no subcommand selected\n";
        return 64;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
