#pragma once

// End-to-end forecaster: instance normalization, value + positional
// embedding with a learned temporal projection T_s -> T_e, a stack of
// residual WFTBlocks sharing one window-level alpha, a pointwise head back
// to channel space, horizon slice, and de-normalization.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "spectral.hpp"
#include "tensor.hpp"
#include "wftblock.hpp"

namespace wftnet {

using Mode = BranchMode;

struct ModelConfig {
    std::size_t seq_len = 96;   // T_s
    std::size_t pred_len = 24;  // T_p
    std::size_t channels = 1;   // C
    std::size_t embed_dim = 32; // D
    std::size_t num_blocks = 2; // L
    std::size_t top_k = 3;
    double pwc_exponent = 1.0;
    std::size_t pwc_bins = 32; // m, counted from bin 1 (DC excluded)
    double omega0 = 6.0;
    double dropout = 0.1;
    Mode mode = Mode::fused;

    std::size_t total_len() const { return seq_len + pred_len; }

    static std::size_t default_pwc_bins(std::size_t seq_len) {
        return std::min<std::size_t>(32, seq_len / 2);
    }

    void validate() const {
        if (seq_len < 4) throw ConfigError("config: seq_len must be >= 4");
        if (pred_len < 1) throw ConfigError("config: pred_len must be >= 1");
        if (channels < 1) throw ConfigError("config: channels must be >= 1");
        if (embed_dim < 1) throw ConfigError("config: embed_dim must be >= 1");
        if (num_blocks < 1) throw ConfigError("config: num_blocks must be >= 1");
        if (total_len() < 8)
            throw ConfigError("config: seq_len + pred_len must be >= 8 for the wavelet scales");
        if (top_k < 1 || top_k > total_len() / 2)
            throw ConfigError("config: top_k must lie in [1, " + std::to_string(total_len() / 2) +
                              "], got " + std::to_string(top_k));
        if (pwc_bins < 2 || pwc_bins > seq_len / 2)
            throw ConfigError("config: pwc_bins must lie in [2, " + std::to_string(seq_len / 2) +
                              "], got " + std::to_string(pwc_bins));
        if (!(pwc_exponent >= 1.0)) throw ConfigError("config: pwc_exponent must be >= 1");
        if (!(omega0 > 0.0)) throw ConfigError("config: omega0 must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("config: dropout must lie in [0, 1)");
    }
};

// Per-window instance statistics.
struct NormStats {
    std::vector<double> mean;  // [C]
    std::vector<double> stdev; // [C], floored at 1e-5
};

inline constexpr double kStdFloor = 1e-5;

inline std::pair<Tensor, NormStats> normalize(const Tensor& x) {
    if (x.rank() != 2)
        throw DimensionError("normalize: need rank-2 input, got " + shape_str(x.shape));
    const std::size_t T = x.shape[0], C = x.shape[1];
    if (T < 2) throw DimensionError("normalize: need at least 2 rows");
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
            if (!std::isfinite(x.data[t * C + c]))
                throw DataError("normalize: non-finite value at row " + std::to_string(t) +
                                ", column " + std::to_string(c));
    NormStats stats;
    stats.mean.assign(C, 0.0);
    stats.stdev.assign(C, 0.0);
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t c = 0; c < C; ++c) {
        double mu = 0.0;
        for (std::size_t t = 0; t < T; ++t) mu += x.data[t * C + c];
        mu *= inv_t;
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = x.data[t * C + c] - mu;
            var += d * d;
        }
        var *= inv_t; // population variance
        stats.mean[c] = mu;
        stats.stdev[c] = std::max(std::sqrt(var), kStdFloor);
    }
    Tensor out(x.shape);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
            out.data[t * C + c] = (x.data[t * C + c] - stats.mean[c]) / stats.stdev[c];
    return {std::move(out), std::move(stats)};
}

inline Tensor denormalize(const Tensor& y, const NormStats& stats) {
    if (y.rank() != 2)
        throw DimensionError("denormalize: need rank-2 input, got " + shape_str(y.shape));
    const std::size_t C = y.shape[1];
    if (stats.mean.size() != C || stats.stdev.size() != C)
        throw DimensionError("denormalize: stats for " + std::to_string(stats.mean.size()) +
                             " channels, input has " + std::to_string(C));
    Tensor out(y.shape);
    for (std::size_t t = 0; t < y.shape[0]; ++t)
        for (std::size_t c = 0; c < C; ++c)
            out.data[t * C + c] = y.data[t * C + c] * stats.stdev[c] + stats.mean[c];
    return out;
}

// Standard 10000-base sinusoidal table: even columns sine, odd columns
// cosine, frequency halving every column pair.
inline Tensor sinusoidal_positional(std::size_t T, std::size_t D) {
    Tensor p(Shape{T, D});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < D; ++i) {
            const double pair_idx = static_cast<double>(i / 2);
            const double freq = std::exp(-std::log(10000.0) * 2.0 * pair_idx / static_cast<double>(D));
            const double angle = static_cast<double>(t) * freq;
            p.data[t * D + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return p;
}

struct ModelParams {
    Tensor value_embed_w; // [C, D]
    Tensor value_embed_b; // [D]
    Tensor positional;    // [T_e, D], fixed sinusoidal, not trained
    Tensor temporal_w;    // [T_s, T_e]
    Tensor temporal_b;    // [T_e]
    std::vector<WFTBlockParams> blocks;
    Tensor head_w; // [D, C]
    Tensor head_b; // [C]
    // Dataset-level standardization stats, stored so a checkpoint carries
    // everything needed to reproduce raw-unit forecasts. Identity until
    // training fits them.
    Tensor standardize_mean; // [C]
    Tensor standardize_std;  // [C]
};

inline ModelParams init_model(const ModelConfig& cfg, RngState& rng) {
    cfg.validate();
    const std::size_t C = cfg.channels, D = cfg.embed_dim;
    const std::size_t Ts = cfg.seq_len, Te = cfg.total_len();
    ModelParams p;
    p.value_embed_w = init_params({C, D}, C, rng);
    p.value_embed_b = init_params({D}, C, rng);
    p.positional = sinusoidal_positional(Te, D);
    p.temporal_w = init_params({Ts, Te}, Ts, rng);
    p.temporal_b = init_params({Te}, Ts, rng);
    const ScaleSet scales = default_scales(Te, cfg.omega0);
    p.blocks.reserve(cfg.num_blocks);
    for (std::size_t l = 0; l < cfg.num_blocks; ++l)
        p.blocks.push_back(init_wftblock(D, scales, cfg.top_k, cfg.pwc_exponent, rng));
    p.head_w = init_params({D, C}, D, rng);
    p.head_b = init_params({C}, D, rng);
    p.standardize_mean = Tensor::zeros({C});
    p.standardize_std = Tensor::full({C}, 1.0);
    return p;
}

// Parameter skeleton with the right shapes and all learnables zeroed; the
// positional table keeps its fixed sinusoidal values. Used by checkpoint
// loading and by structural identity tests.
inline ModelParams zero_model_params(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t C = cfg.channels, D = cfg.embed_dim;
    const std::size_t Ts = cfg.seq_len, Te = cfg.total_len();
    ModelParams p;
    p.value_embed_w = Tensor::zeros({C, D});
    p.value_embed_b = Tensor::zeros({D});
    p.positional = sinusoidal_positional(Te, D);
    p.temporal_w = Tensor::zeros({Ts, Te});
    p.temporal_b = Tensor::zeros({Te});
    const ScaleSet scales = default_scales(Te, cfg.omega0);
    const std::size_t S = scales.size();
    p.blocks.resize(cfg.num_blocks);
    for (WFTBlockParams& b : p.blocks) {
        for (InceptionParams* ip : {&b.fourier_inception, &b.wavelet_inception}) {
            ip->k1 = Tensor::zeros({D, D, 1, 1});
            ip->b1 = Tensor::zeros({D});
            ip->k3 = Tensor::zeros({D, D, 3, 3});
            ip->b3 = Tensor::zeros({D});
            ip->k5 = Tensor::zeros({D, D, 5, 5});
            ip->b5 = Tensor::zeros({D});
        }
        b.strip_w = Tensor::zeros({D, D, 1, S});
        b.strip_b = Tensor::zeros({D});
        b.top_k = cfg.top_k;
        b.pwc_exponent = cfg.pwc_exponent;
        b.scales = scales;
    }
    p.head_w = Tensor::zeros({D, C});
    p.head_b = Tensor::zeros({C});
    p.standardize_mean = Tensor::zeros({C});
    p.standardize_std = Tensor::full({C}, 1.0);
    return p;
}

// Canonical parameter walk. Everything the checkpoint stores, in order;
// `learnable` distinguishes trained tensors from fixed/bookkeeping ones.
template <typename Params, typename F>
inline void for_each_param(Params& p, F&& fn) {
    fn("value_embed.weight", p.value_embed_w, true);
    fn("value_embed.bias", p.value_embed_b, true);
    fn("positional", p.positional, false);
    fn("temporal_proj.weight", p.temporal_w, true);
    fn("temporal_proj.bias", p.temporal_b, true);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        auto& b = p.blocks[l];
        const std::string base = "block" + std::to_string(l);
        fn(base + ".fourier.conv1.weight", b.fourier_inception.k1, true);
        fn(base + ".fourier.conv1.bias", b.fourier_inception.b1, true);
        fn(base + ".fourier.conv3.weight", b.fourier_inception.k3, true);
        fn(base + ".fourier.conv3.bias", b.fourier_inception.b3, true);
        fn(base + ".fourier.conv5.weight", b.fourier_inception.k5, true);
        fn(base + ".fourier.conv5.bias", b.fourier_inception.b5, true);
        fn(base + ".wavelet.conv1.weight", b.wavelet_inception.k1, true);
        fn(base + ".wavelet.conv1.bias", b.wavelet_inception.b1, true);
        fn(base + ".wavelet.conv3.weight", b.wavelet_inception.k3, true);
        fn(base + ".wavelet.conv3.bias", b.wavelet_inception.b3, true);
        fn(base + ".wavelet.conv5.weight", b.wavelet_inception.k5, true);
        fn(base + ".wavelet.conv5.bias", b.wavelet_inception.b5, true);
        fn(base + ".strip.weight", b.strip_w, true);
        fn(base + ".strip.bias", b.strip_b, true);
    }
    fn("head.weight", p.head_w, true);
    fn("head.bias", p.head_b, true);
    fn("standardize.mean", p.standardize_mean, false);
    fn("standardize.std", p.standardize_std, false);
}

// ----- tape assembly ---------------------------------------------------------

struct ModelVars {
    Var value_embed_w, value_embed_b;
    Var temporal_w, temporal_b;
    std::vector<WFTBlockVars> blocks;
    Var head_w, head_b;
    const ModelParams* params = nullptr; // positional table and stats
};

inline ModelVars register_model(Tape& tape, const ModelParams& p, bool with_grads) {
    ModelVars v;
    v.value_embed_w = tape.leaf(p.value_embed_w, with_grads);
    v.value_embed_b = tape.leaf(p.value_embed_b, with_grads);
    v.temporal_w = tape.leaf(p.temporal_w, with_grads);
    v.temporal_b = tape.leaf(p.temporal_b, with_grads);
    v.blocks.reserve(p.blocks.size());
    for (const WFTBlockParams& b : p.blocks) v.blocks.push_back(register_block(tape, b, with_grads));
    v.head_w = tape.leaf(p.head_w, with_grads);
    v.head_b = tape.leaf(p.head_b, with_grads);
    v.params = &p;
    return v;
}

// Value projection, positional rows 0..T_s-1 (the encoding is added once,
// before the temporal projection), projection to T_e steps, then dropout.
inline Var embed(Tape& tape, Var x_norm, const ModelVars& mv, const ModelConfig& cfg,
                 RngState& rng, bool training) {
    const Tensor& x = tape.value(x_norm);
    if (x.rank() != 2 || x.shape[0] != cfg.seq_len || x.shape[1] != cfg.channels)
        throw DimensionError("embed: input " + shape_str(x.shape) + " does not match config [" +
                             std::to_string(cfg.seq_len) + ", " + std::to_string(cfg.channels) + "]");
    const std::size_t Ts = cfg.seq_len, D = cfg.embed_dim;
    Var v = tape.linear(x_norm, mv.value_embed_w, mv.value_embed_b); // [T_s, D]
    Tensor pos_slice(Shape{Ts, D});
    std::copy(mv.params->positional.data.begin(),
              mv.params->positional.data.begin() + static_cast<std::ptrdiff_t>(Ts * D),
              pos_slice.data.begin());
    v = tape.add_const(v, pos_slice);
    Var vt = tape.transpose2d(v);                                // [D, T_s]
    Var pt = tape.linear(vt, mv.temporal_w, mv.temporal_b);      // [D, T_e]
    Var e = tape.transpose2d(pt);                                // [T_e, D]
    return tape.dropout(e, cfg.dropout, rng, training);
}

// Full forward on an existing tape. Returns the de-normalized [T_p, C]
// prediction var; alpha and the window stats are reported through the out
// parameters. alpha and the instance stats are window constants: gradients
// do not flow through them (stop-gradient, matching the training contract).
inline Var forward_on_tape(Tape& tape, const Tensor& window, const ModelVars& mv,
                           const ModelConfig& cfg, RngState& rng, bool training,
                           double* alpha_out = nullptr, NormStats* stats_out = nullptr) {
    if (window.rank() != 2 || window.shape[0] != cfg.seq_len || window.shape[1] != cfg.channels)
        throw DimensionError("forward: input " + shape_str(window.shape) +
                             " does not match config [" + std::to_string(cfg.seq_len) + ", " +
                             std::to_string(cfg.channels) + "]");
    auto [x_norm, stats] = normalize(window);
    const double alpha = pwc(x_norm, cfg.pwc_bins);
    if (alpha_out) *alpha_out = alpha;
    if (stats_out) *stats_out = stats;
    Var x_leaf = tape.leaf(x_norm, false);
    Var h = embed(tape, x_leaf, mv, cfg, rng, training);
    for (const WFTBlockVars& b : mv.blocks) h = wftblock_forward(tape, h, b, alpha, cfg.mode);
    Var y = tape.linear(h, mv.head_w, mv.head_b);          // [T_e, C]
    Var horizon = tape.slice_rows(y, cfg.seq_len, cfg.pred_len);
    return tape.colwise_affine(horizon, stats.stdev, stats.mean);
}

// Convenience inference entry point: builds a throwaway tape.
inline Tensor forward(const Tensor& window, const ModelParams& params, const ModelConfig& cfg,
                      RngState& rng, bool training = false, double* alpha_out = nullptr) {
    Tape tape;
    ModelVars mv = register_model(tape, params, false);
    Var out = forward_on_tape(tape, window, mv, cfg, rng, training, alpha_out);
    return tape.value(out);
}

} // namespace wftnet
