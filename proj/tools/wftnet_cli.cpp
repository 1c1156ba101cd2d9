// Command-line surface for the forecaster.
//
//   wftnet <train|evaluate|forecast|analyze> --config PATH [--key value ...]
//
// The config file is a flat JSON object; every --key value pair overrides
// one config key ('-' in key names maps to '_'). Precedence: CLI > file >
// defaults. Unknown keys are rejected. Exit codes: 0 success, 2 usage/
// config/data error, 3 runtime/divergence error. Errors print one
// machine-parsable line to stderr.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wftnet/wftnet.hpp"

namespace {

using namespace wftnet;

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class KeyType { str, u64, f64, boolean };

struct KeySpec {
    const char* name;
    KeyType type;
};

constexpr KeySpec kKeys[] = {
    {"data", KeyType::str},          {"out", KeyType::str},
    {"checkpoint", KeyType::str},    {"seed", KeyType::u64},
    {"mode", KeyType::str},          {"seq_len", KeyType::u64},
    {"pred_len", KeyType::u64},      {"embed_dim", KeyType::u64},
    {"num_blocks", KeyType::u64},    {"top_k", KeyType::u64},
    {"pwc_exponent", KeyType::f64},  {"pwc_bins", KeyType::u64},
    {"omega0", KeyType::f64},        {"dropout", KeyType::f64},
    {"lr", KeyType::f64},            {"batch_size", KeyType::u64},
    {"max_epochs", KeyType::u64},    {"patience", KeyType::u64},
    {"train_frac", KeyType::f64},    {"val_frac", KeyType::f64},
    {"test_frac", KeyType::f64},     {"resume", KeyType::boolean},
    {"at", KeyType::u64},            {"eval_split", KeyType::str},
    {"analyze_windows", KeyType::u64},
};

const KeySpec* find_key(const std::string& name) {
    for (const KeySpec& k : kKeys)
        if (name == k.name) return &k;
    return nullptr;
}

struct RunConfig {
    std::map<std::string, std::string> strs;
    std::map<std::string, std::uint64_t> u64s;
    std::map<std::string, double> f64s;
    std::map<std::string, bool> bools;
    std::set<std::string> explicit_keys; // set via file or CLI, not defaulted

    static RunConfig defaults() {
        RunConfig rc;
        rc.strs = {{"data", ""},        {"out", "."},           {"checkpoint", ""},
                   {"mode", "fused"},   {"eval_split", "test"}};
        rc.u64s = {{"seed", 42},       {"seq_len", 96},   {"pred_len", 24}, {"embed_dim", 32},
                   {"num_blocks", 2},  {"top_k", 3},      {"pwc_bins", 0},  {"batch_size", 16},
                   {"max_epochs", 30}, {"patience", 3},   {"at", 0},        {"analyze_windows", 64}};
        rc.f64s = {{"pwc_exponent", 1.0}, {"omega0", 6.0},    {"dropout", 0.1}, {"lr", 1e-3},
                   {"train_frac", 0.7},   {"val_frac", 0.1},  {"test_frac", 0.2}};
        rc.bools = {{"resume", false}};
        return rc;
    }

    const std::string& str(const std::string& k) const { return strs.at(k); }
    std::uint64_t u64(const std::string& k) const { return u64s.at(k); }
    double f64(const std::string& k) const { return f64s.at(k); }
    bool boolean(const std::string& k) const { return bools.at(k); }
    bool was_set(const std::string& k) const { return explicit_keys.count(k) > 0; }

    void set_from_json(const std::string& key, const nlohmann::json& v) {
        const KeySpec* spec = find_key(key);
        if (!spec) throw ConfigError("config: unknown key '" + key + "'");
        switch (spec->type) {
            case KeyType::str:
                if (!v.is_string()) throw ConfigError("config: key '" + key + "' must be a string");
                strs[key] = v.get<std::string>();
                break;
            case KeyType::u64:
                if (!v.is_number_unsigned())
                    throw ConfigError("config: key '" + key + "' must be an unsigned integer");
                u64s[key] = v.get<std::uint64_t>();
                break;
            case KeyType::f64:
                if (!v.is_number())
                    throw ConfigError("config: key '" + key + "' must be a number");
                f64s[key] = v.get<double>();
                break;
            case KeyType::boolean:
                if (!v.is_boolean())
                    throw ConfigError("config: key '" + key + "' must be a boolean");
                bools[key] = v.get<bool>();
                break;
        }
        explicit_keys.insert(key);
    }

    void set_from_cli(const std::string& key, const std::string& value) {
        const KeySpec* spec = find_key(key);
        if (!spec) throw ConfigError("usage: unknown option '--" + key + "'");
        switch (spec->type) {
            case KeyType::str:
                strs[key] = value;
                break;
            case KeyType::u64: {
                std::uint64_t v = 0;
                auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
                if (ec != std::errc() || p != value.data() + value.size())
                    throw ConfigError("usage: '--" + key + "' needs an unsigned integer, got '" +
                                      value + "'");
                u64s[key] = v;
                break;
            }
            case KeyType::f64: {
                double v = 0.0;
                auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
                if (ec != std::errc() || p != value.data() + value.size())
                    throw ConfigError("usage: '--" + key + "' needs a number, got '" + value + "'");
                f64s[key] = v;
                break;
            }
            case KeyType::boolean:
                if (value == "true")
                    bools[key] = true;
                else if (value == "false")
                    bools[key] = false;
                else
                    throw ConfigError("usage: '--" + key + "' needs true or false, got '" + value +
                                      "'");
                break;
        }
        explicit_keys.insert(key);
    }
};

Mode parse_mode(const std::string& s) {
    if (s == "fused") return Mode::fused;
    if (s == "fourier-only") return Mode::fourier_only;
    if (s == "wavelet-only") return Mode::wavelet_only;
    throw ConfigError("config: mode must be fused, fourier-only, or wavelet-only, got '" + s + "'");
}

std::size_t resolved_pwc_bins(const RunConfig& rc) {
    const std::size_t m = rc.u64("pwc_bins");
    return m == 0 ? ModelConfig::default_pwc_bins(rc.u64("seq_len")) : m;
}

// Everything checkable without the data file. channels is filled in later.
ModelConfig model_config_from(const RunConfig& rc, std::size_t channels) {
    ModelConfig mc;
    mc.seq_len = rc.u64("seq_len");
    mc.pred_len = rc.u64("pred_len");
    mc.channels = channels;
    mc.embed_dim = rc.u64("embed_dim");
    mc.num_blocks = rc.u64("num_blocks");
    mc.top_k = rc.u64("top_k");
    mc.pwc_exponent = rc.f64("pwc_exponent");
    mc.pwc_bins = resolved_pwc_bins(rc);
    mc.omega0 = rc.f64("omega0");
    mc.dropout = rc.f64("dropout");
    mc.mode = parse_mode(rc.str("mode"));
    return mc;
}

void validate_common(const RunConfig& rc, bool needs_model) {
    if (rc.str("data").empty()) throw ConfigError("config: 'data' path is required");
    if (needs_model) {
        // Validate with a placeholder channel count; data-dependent checks rerun later.
        ModelConfig probe = model_config_from(rc, 1);
        probe.validate();
    }
    if (!(rc.f64("lr") > 0.0)) throw ConfigError("config: lr must be positive");
    if (rc.u64("batch_size") < 1) throw ConfigError("config: batch_size must be >= 1");
    if (rc.u64("max_epochs") < 1) throw ConfigError("config: max_epochs must be >= 1");
    SplitSpec spec{rc.f64("train_frac"), rc.f64("val_frac"), rc.f64("test_frac")};
    spec.validate();
    const std::string& es = rc.str("eval_split");
    if (es != "train" && es != "val" && es != "test")
        throw ConfigError("config: eval_split must be train, val, or test, got '" + es + "'");
}

std::string checkpoint_path(const RunConfig& rc) {
    if (!rc.str("checkpoint").empty()) return rc.str("checkpoint");
    return rc.str("out") + "/checkpoint.wft";
}

// ---------------------------------------------------------------------------
// Small output helpers
// ---------------------------------------------------------------------------

std::string fmt(double v, const char* spec = "%.12g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

StandardizeStats stats_from_params(const ModelParams& p) {
    StandardizeStats s;
    s.mean = p.standardize_mean.data;
    s.stdev = p.standardize_std.data;
    return s;
}

void split_window(const Tensor& window, const ModelConfig& mc, Tensor& input, Tensor& target) {
    input = Tensor(Shape{mc.seq_len, mc.channels});
    target = Tensor(Shape{mc.pred_len, mc.channels});
    const std::size_t cut = mc.seq_len * mc.channels;
    std::copy(window.data.begin(), window.data.begin() + static_cast<std::ptrdiff_t>(cut),
              input.data.begin());
    std::copy(window.data.begin() + static_cast<std::ptrdiff_t>(cut), window.data.end(),
              target.data.begin());
}

// Structural keys that must agree with a loaded checkpoint when given
// explicitly. mode is deliberately absent: it may be overridden at
// evaluation time for ablation runs.
void check_checkpoint_conflicts(const RunConfig& rc, const ModelConfig& ck) {
    const std::vector<std::pair<const char*, std::uint64_t>> u64_keys = {
        {"seq_len", ck.seq_len},       {"pred_len", ck.pred_len},
        {"embed_dim", ck.embed_dim},   {"num_blocks", ck.num_blocks},
        {"top_k", ck.top_k},
    };
    for (const auto& [key, expect] : u64_keys)
        if (rc.was_set(key) && rc.u64(key) != expect)
            throw ValidationError(std::string("config: --") + key + " " + std::to_string(rc.u64(key)) +
                                  " conflicts with checkpoint value " + std::to_string(expect));
    if (rc.was_set("pwc_bins") && resolved_pwc_bins(rc) != ck.pwc_bins)
        throw ValidationError("config: --pwc_bins " + std::to_string(resolved_pwc_bins(rc)) +
                              " conflicts with checkpoint value " + std::to_string(ck.pwc_bins));
    const std::vector<std::pair<const char*, double>> f64_keys = {
        {"pwc_exponent", ck.pwc_exponent}, {"omega0", ck.omega0}, {"dropout", ck.dropout}};
    for (const auto& [key, expect] : f64_keys)
        if (rc.was_set(key) && rc.f64(key) != expect)
            throw ValidationError(std::string("config: --") + key + " " + fmt(rc.f64(key)) +
                                  " conflicts with checkpoint value " + fmt(expect));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& rc) {
    validate_common(rc, true);
    const SeriesTable raw = load_csv(rc.str("data"));
    ModelConfig mc = model_config_from(rc, raw.channels());
    mc.validate();
    const std::size_t Te = mc.total_len();
    const SplitSpec spec{rc.f64("train_frac"), rc.f64("val_frac"), rc.f64("test_frac")};
    const Splits splits = split(raw, spec, Te);

    ModelParams params;
    SeriesTable table;
    if (rc.boolean("resume")) {
        auto [loaded, ck_cfg] = load_checkpoint(checkpoint_path(rc));
        check_checkpoint_conflicts(rc, ck_cfg);
        if (ck_cfg.seq_len != mc.seq_len || ck_cfg.pred_len != mc.pred_len ||
            ck_cfg.channels != mc.channels || ck_cfg.embed_dim != mc.embed_dim ||
            ck_cfg.num_blocks != mc.num_blocks || ck_cfg.top_k != mc.top_k ||
            ck_cfg.pwc_bins != mc.pwc_bins || ck_cfg.pwc_exponent != mc.pwc_exponent ||
            ck_cfg.omega0 != mc.omega0)
            throw ValidationError("config: effective config conflicts with resumed checkpoint");
        mc.mode = parse_mode(rc.str("mode"));
        params = std::move(loaded);
        table = standardize_with(raw, stats_from_params(params));
    } else {
        auto [std_table, stats] = standardize(raw, splits.train);
        table = std::move(std_table);
        RngState init_rng{rc.u64("seed"), 0};
        params = init_model(mc, init_rng);
        params.standardize_mean.data = stats.mean;
        params.standardize_std.data = stats.stdev;
    }

    TrainConfig tc;
    tc.adam.lr = rc.f64("lr");
    tc.batch_size = rc.u64("batch_size");
    tc.max_epochs = rc.u64("max_epochs");
    tc.patience = rc.u64("patience");
    tc.seed = rc.u64("seed");
    const TrainResult result = train(std::move(params), mc, table, splits.train, splits.val, tc);

    save_checkpoint(result.params, mc, checkpoint_path(rc));
    std::string log = "epoch,train_mse,val_mse,val_mae,alpha_mean\n";
    for (const EpochLogRow& row : result.log) {
        log += std::to_string(row.epoch) + ',' + fmt(row.train_mse) + ',' + fmt(row.val_mse) + ',' +
               fmt(row.val_mae) + ',' + fmt(row.alpha_mean) + '\n';
    }
    const std::string metrics_path = rc.str("out") + "/metrics.csv";
    write_file_atomic(metrics_path, log);

    std::printf("trained epochs=%zu best_epoch=%zu best_val_mse=%s\n", result.epochs_run,
                result.best_epoch, fmt(result.best_val_mse, "%.6f").c_str());
    std::printf("checkpoint=%s\n", checkpoint_path(rc).c_str());
    std::printf("metrics=%s\n", metrics_path.c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& rc) {
    validate_common(rc, false);
    auto [params, mc] = load_checkpoint(checkpoint_path(rc));
    check_checkpoint_conflicts(rc, mc);
    if (rc.was_set("mode")) mc.mode = parse_mode(rc.str("mode"));

    const SeriesTable raw = load_csv(rc.str("data"));
    if (raw.channels() != mc.channels)
        throw ValidationError("evaluate: data has " + std::to_string(raw.channels()) +
                              " channels, checkpoint expects " + std::to_string(mc.channels));
    const SeriesTable table = standardize_with(raw, stats_from_params(params));
    const std::size_t Te = mc.total_len();
    const SplitSpec spec{rc.f64("train_frac"), rc.f64("val_frac"), rc.f64("test_frac")};
    const Splits splits = split(table, spec, Te);
    const RowRange range = rc.str("eval_split") == "train"  ? splits.train
                           : rc.str("eval_split") == "val" ? splits.val
                                                           : splits.test;
    const WindowSampler sampler(range, Te);

    RngState rng{rc.u64("seed"), 0};
    double mse_sum = 0.0, mae_sum = 0.0, raw_mse_sum = 0.0, raw_mae_sum = 0.0;
    std::string pred_csv = "window_index,step,channel,prediction,target\n";
    const StandardizeStats stats = stats_from_params(params);
    for (std::size_t w = 0; w < sampler.count(); ++w) {
        const Tensor window = window_rows(table, sampler.start(w), Te);
        Tensor input, target;
        split_window(window, mc, input, target);
        const Tensor pred = forward(input, params, mc, rng, false);
        mse_sum += mse(pred, target);
        mae_sum += mae(pred, target);
        Tensor pred_raw(pred.shape), target_raw(target.shape);
        for (std::size_t t = 0; t < mc.pred_len; ++t)
            for (std::size_t c = 0; c < mc.channels; ++c) {
                pred_raw.at(t, c) = pred.at(t, c) * stats.stdev[c] + stats.mean[c];
                target_raw.at(t, c) = target.at(t, c) * stats.stdev[c] + stats.mean[c];
            }
        raw_mse_sum += mse(pred_raw, target_raw);
        raw_mae_sum += mae(pred_raw, target_raw);
        for (std::size_t t = 0; t < mc.pred_len; ++t)
            for (std::size_t c = 0; c < mc.channels; ++c)
                pred_csv += std::to_string(w) + ',' + std::to_string(t) + ',' + std::to_string(c) +
                            ',' + fmt(pred.at(t, c)) + ',' + fmt(target.at(t, c)) + '\n';
    }
    const double n = static_cast<double>(sampler.count());
    std::printf("mse=%.6f mae=%.6f\n", mse_sum / n, mae_sum / n);
    std::printf("raw_mse=%.6f raw_mae=%.6f split=%s windows=%zu mode=%s\n", raw_mse_sum / n,
                raw_mae_sum / n, rc.str("eval_split").c_str(), sampler.count(),
                branch_mode_name(mc.mode));
    const std::string pred_path = rc.str("out") + "/predictions.csv";
    write_file_atomic(pred_path, pred_csv);
    std::printf("predictions=%s\n", pred_path.c_str());
    return 0;
}

int cmd_forecast(const RunConfig& rc) {
    validate_common(rc, false);
    if (!rc.was_set("at")) throw ConfigError("config: forecast requires --at ROW");
    auto [params, mc] = load_checkpoint(checkpoint_path(rc));
    check_checkpoint_conflicts(rc, mc);
    if (rc.was_set("mode")) mc.mode = parse_mode(rc.str("mode"));

    const SeriesTable raw = load_csv(rc.str("data"));
    if (raw.channels() != mc.channels)
        throw ValidationError("forecast: data has " + std::to_string(raw.channels()) +
                              " channels, checkpoint expects " + std::to_string(mc.channels));
    const std::size_t at = rc.u64("at");
    if (at < mc.seq_len)
        throw ConfigError("forecast: --at " + std::to_string(at) + " leaves less than seq_len=" +
                          std::to_string(mc.seq_len) + " rows of history");
    if (at > raw.rows())
        throw ConfigError("forecast: --at " + std::to_string(at) + " is beyond the data (" +
                          std::to_string(raw.rows()) + " rows)");
    const SeriesTable table = standardize_with(raw, stats_from_params(params));
    const Tensor input = window_rows(table, at - mc.seq_len, mc.seq_len);

    RngState rng{rc.u64("seed"), 0};
    const Tensor pred = forward(input, params, mc, rng, false);
    const StandardizeStats stats = stats_from_params(params);

    std::string csv = "step";
    for (const std::string& name : raw.channel_names) csv += ',' + name;
    csv += '\n';
    for (std::size_t t = 0; t < mc.pred_len; ++t) {
        csv += std::to_string(t + 1);
        for (std::size_t c = 0; c < mc.channels; ++c)
            csv += ',' + fmt(pred.at(t, c) * stats.stdev[c] + stats.mean[c]);
        csv += '\n';
    }
    const std::string path = rc.str("out") + "/forecast.csv";
    write_file_atomic(path, csv);
    std::printf("forecast=%s rows=%zu at=%zu\n", path.c_str(), mc.pred_len, at);
    return 0;
}

int cmd_analyze(const RunConfig& rc) {
    if (rc.str("data").empty()) throw ConfigError("config: 'data' path is required");
    const std::size_t Ts = rc.u64("seq_len");
    if (Ts < 8) throw ConfigError("config: analyze needs seq_len >= 8");
    const std::size_t k = rc.u64("top_k");
    if (k < 1 || k > Ts / 2)
        throw ConfigError("config: top_k must lie in [1, " + std::to_string(Ts / 2) + "] for analyze");
    const std::size_t m = resolved_pwc_bins(rc);
    if (m < 2 || m > Ts / 2)
        throw ConfigError("config: pwc_bins must lie in [2, " + std::to_string(Ts / 2) +
                          "] for analyze");
    const std::size_t max_windows = rc.u64("analyze_windows");
    if (max_windows < 1) throw ConfigError("config: analyze_windows must be >= 1");
    if (!(rc.f64("omega0") > 0.0)) throw ConfigError("config: omega0 must be positive");

    const SeriesTable table = load_csv(rc.str("data"));
    const std::size_t N = table.rows(), C = table.channels();
    if (N < Ts)
        throw ConfigError("analyze: data has " + std::to_string(N) + " rows, need at least " +
                          std::to_string(Ts));

    // Evenly spaced window starts across the data.
    const std::size_t span = N - Ts;
    const std::size_t W = std::min(max_windows, span + 1);
    std::vector<std::size_t> starts(W);
    for (std::size_t i = 0; i < W; ++i)
        starts[i] = (W == 1) ? 0 : (span * i) / (W - 1);

    std::vector<double> mean_amps(Ts, 0.0);
    double alpha_sum = 0.0, alpha_min = 1.0, alpha_max = 0.0;
    std::size_t degenerate = 0;
    for (std::size_t start : starts) {
        const Tensor window = window_rows(table, start, Ts);
        const AmplitudeSpectrum amps = amplitude_spectrum(window);
        for (std::size_t i = 0; i < Ts; ++i) mean_amps[i] += amps.amps[i] / static_cast<double>(W);
        const double alpha = pwc(window, m);
        alpha_sum += alpha;
        alpha_min = std::min(alpha_min, alpha);
        alpha_max = std::max(alpha_max, alpha);
        // Degenerate when every channel is below the pwc energy threshold.
        bool any_energy = false;
        std::vector<double> col(Ts);
        for (std::size_t c = 0; c < C && !any_energy; ++c) {
            for (std::size_t t = 0; t < Ts; ++t) col[t] = window.data[t * C + c];
            const ComplexSpectrum sp = fft(col);
            double e = 0.0;
            for (std::size_t i = 1; i <= m; ++i) e += std::norm(sp.coeffs[i]);
            any_energy = e >= 1e-12;
        }
        if (!any_energy) ++degenerate;
    }

    AmplitudeSpectrum avg;
    avg.amps = mean_amps;
    const PeriodSet periods = topk_periods(avg, k, Ts);

    std::printf("windows=%zu seq_len=%zu channels=%zu\n", W, Ts, C);
    for (std::size_t i = 0; i < periods.entries.size(); ++i) {
        const PeriodEntry& e = periods.entries[i];
        std::printf("top%zu index=%zu period=%zu amplitude=%s\n", i + 1, e.freq_index, e.period,
                    fmt(e.amplitude, "%.6f").c_str());
    }
    std::printf("alpha mean=%s min=%s max=%s m=%zu\n", fmt(alpha_sum / W, "%.6f").c_str(),
                fmt(alpha_min, "%.6f").c_str(), fmt(alpha_max, "%.6f").c_str(), m);
    if (degenerate == W)
        std::printf("warning: degenerate input (no spectral energy in bins 1..%zu); alpha fixed at "
                    "fallback 1/m\n", m);
    else if (periods.warning)
        std::printf("warning: degenerate spectrum (fewer than k distinct periods or zero peak)\n");

    // Scalogram of the first window, channel 0, for external plotting.
    std::vector<double> col(Ts);
    const Tensor first = window_rows(table, starts[0], Ts);
    for (std::size_t t = 0; t < Ts; ++t) col[t] = first.data[t * C];
    const ScaleSet scales = default_scales(Ts, rc.f64("omega0"));
    const Scalogram sg = cwt(col, scales);
    std::string csv = "tau,scale,modulus\n";
    for (std::size_t tau = 0; tau < sg.num_shifts; ++tau)
        for (std::size_t j = 0; j < sg.num_scales; ++j)
            csv += std::to_string(tau) + ',' + fmt(scales.scales[j]) + ',' +
                   fmt(std::abs(sg.at(tau, j))) + '\n';
    const std::string path = rc.str("out") + "/scalogram.csv";
    write_file_atomic(path, csv);
    std::printf("scalogram=%s\n", path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

constexpr const char* kUsage =
    "usage: wftnet <train|evaluate|forecast|analyze> --config PATH [--key value ...]";

RunConfig parse_args(int argc, char** argv) {
    RunConfig rc = RunConfig::defaults();
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> cli_pairs;
    for (int i = 2; i < argc; ++i) {
        std::string token = argv[i];
        if (token.rfind("--", 0) != 0)
            throw ConfigError("usage: expected --key, got '" + token + "'");
        std::string key = token.substr(2);
        std::replace(key.begin(), key.end(), '-', '_');
        if (i + 1 >= argc) throw ConfigError("usage: option '--" + key + "' needs a value");
        std::string value = argv[++i];
        if (key == "config")
            config_path = value;
        else
            cli_pairs.emplace_back(std::move(key), std::move(value));
    }
    if (config_path.empty()) throw ConfigError(std::string("usage: --config PATH is required. ") + kUsage);

    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + config_path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: " + config_path + " must hold a JSON object");
    for (const auto& [key, value] : j.items()) rc.set_from_json(key, value);

    for (const auto& [key, value] : cli_pairs) rc.set_from_cli(key, value);
    return rc;
}

int dispatch(int argc, char** argv) {
    if (argc < 2) throw ConfigError(std::string("usage: missing subcommand. ") + kUsage);
    const std::string cmd = argv[1];
    const RunConfig rc = parse_args(argc, argv);
    if (cmd == "train") return cmd_train(rc);
    if (cmd == "evaluate") return cmd_evaluate(rc);
    if (cmd == "forecast") return cmd_forecast(rc);
    if (cmd == "analyze") return cmd_analyze(rc);
    throw ConfigError("usage: unknown subcommand '" + cmd + "'. " + kUsage);
}

int fail(const char* category, const std::string& what, int code) {
    std::string msg = what;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "wftnet: error: %s: %s\n", category, msg.c_str());
    return code;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const DataError& e) {
        return fail("data", e.what(), 2);
    } catch (const FormatError& e) {
        return fail("format", e.what(), 2);
    } catch (const ValidationError& e) {
        return fail("validation", e.what(), 2);
    } catch (const DimensionError& e) {
        return fail("dimension", e.what(), 2);
    } catch (const IoError& e) {
        return fail("io", e.what(), 2);
    } catch (const TrainingError& e) {
        return fail("training", e.what(), 3);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), 3);
    }
}
