#pragma once

// Residual block combining a Fourier branch (fold the sequence at its top-k
// global periods, run an inception stack, unfold, softmax-weight by bin
// amplitude) with a wavelet branch (Morlet scalogram modulus, inception,
// strip convolution over the scale axis). The two are mixed by alpha^n where
// alpha is the periodicity weighting coefficient of the whole window.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "folding.hpp"
#include "spectral.hpp"
#include "tensor.hpp"

namespace wftnet {

enum class BranchMode { fused, fourier_only, wavelet_only };

inline const char* branch_mode_name(BranchMode m) {
    switch (m) {
        case BranchMode::fused: return "fused";
        case BranchMode::fourier_only: return "fourier-only";
        case BranchMode::wavelet_only: return "wavelet-only";
    }
    return "?";
}

struct InceptionParams {
    Tensor k1, b1; // [D, D, 1, 1], [D]
    Tensor k3, b3; // [D, D, 3, 3], [D]
    Tensor k5, b5; // [D, D, 5, 5], [D]
};

inline InceptionParams init_inception(std::size_t D, RngState& rng) {
    InceptionParams p;
    p.k1 = init_params({D, D, 1, 1}, D * 1 * 1, rng);
    p.b1 = init_params({D}, D * 1 * 1, rng);
    p.k3 = init_params({D, D, 3, 3}, D * 3 * 3, rng);
    p.b3 = init_params({D}, D * 3 * 3, rng);
    p.k5 = init_params({D, D, 5, 5}, D * 5 * 5, rng);
    p.b5 = init_params({D}, D * 5 * 5, rng);
    return p;
}

struct WFTBlockParams {
    InceptionParams fourier_inception;
    InceptionParams wavelet_inception;
    Tensor strip_w; // [D, D, 1, S]
    Tensor strip_b; // [D]
    std::size_t top_k = 1;
    double pwc_exponent = 1.0;
    ScaleSet scales;
};

inline WFTBlockParams init_wftblock(std::size_t D, const ScaleSet& scales, std::size_t top_k,
                                    double pwc_exponent, RngState& rng) {
    scales.validate();
    if (top_k < 1) throw ConfigError("init_wftblock: top_k must be >= 1");
    if (!(pwc_exponent >= 1.0))
        throw ConfigError("init_wftblock: pwc exponent must be >= 1, got " + std::to_string(pwc_exponent));
    WFTBlockParams p;
    p.fourier_inception = init_inception(D, rng);
    p.wavelet_inception = init_inception(D, rng);
    const std::size_t S = scales.size();
    p.strip_w = init_params({D, D, 1, S}, D * S, rng);
    p.strip_b = init_params({D}, D * S, rng);
    p.top_k = top_k;
    p.pwc_exponent = pwc_exponent;
    p.scales = scales;
    return p;
}

// ----- tape registration -----------------------------------------------------

struct InceptionVars {
    Var k1, b1, k3, b3, k5, b5;
};

struct WFTBlockVars {
    InceptionVars fourier_inception;
    InceptionVars wavelet_inception;
    Var strip_w, strip_b;
    std::size_t top_k = 1;
    double pwc_exponent = 1.0;
    ScaleSet scales;
};

inline InceptionVars register_inception(Tape& tape, const InceptionParams& p, bool with_grads) {
    InceptionVars v;
    v.k1 = tape.leaf(p.k1, with_grads);
    v.b1 = tape.leaf(p.b1, with_grads);
    v.k3 = tape.leaf(p.k3, with_grads);
    v.b3 = tape.leaf(p.b3, with_grads);
    v.k5 = tape.leaf(p.k5, with_grads);
    v.b5 = tape.leaf(p.b5, with_grads);
    return v;
}

inline WFTBlockVars register_block(Tape& tape, const WFTBlockParams& p, bool with_grads) {
    WFTBlockVars v;
    v.fourier_inception = register_inception(tape, p.fourier_inception, with_grads);
    v.wavelet_inception = register_inception(tape, p.wavelet_inception, with_grads);
    v.strip_w = tape.leaf(p.strip_w, with_grads);
    v.strip_b = tape.leaf(p.strip_b, with_grads);
    v.top_k = p.top_k;
    v.pwc_exponent = p.pwc_exponent;
    v.scales = p.scales;
    return v;
}

// ----- forward pieces --------------------------------------------------------

// Mean of three same-padded convs (1x1, 3x3, 5x5) followed by GELU.
inline Var inception_forward(Tape& tape, Var map3d, const InceptionVars& p) {
    const Tensor& m = tape.value(map3d);
    if (m.rank() != 3)
        throw DimensionError("inception_forward: need rank-3 input, got " + shape_str(m.shape));
    Var y1 = tape.conv2d_same(map3d, p.k1, p.b1);
    Var y3 = tape.conv2d_same(map3d, p.k3, p.b3);
    Var y5 = tape.conv2d_same(map3d, p.k5, p.b5);
    Var mean = tape.scale(tape.add(tape.add(y1, y3), y5), 1.0 / 3.0);
    return tape.gelu(mean);
}

// Fold at each selected period, process, unfold, and blend with softmax
// weights over the (differentiable) bin amplitudes. Period selection itself
// uses the detached spectrum of the current values.
inline Var fourier_branch(Tape& tape, Var x, const WFTBlockVars& p, PeriodSet* selected = nullptr) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 2)
        throw DimensionError("fourier_branch: need rank-2 input, got " + shape_str(xv.shape));
    const std::size_t T_e = xv.shape[0];
    const AmplitudeSpectrum amps = amplitude_spectrum(xv);
    const PeriodSet periods = topk_periods(amps, p.top_k, T_e);
    if (selected) *selected = periods;
    std::vector<std::size_t> indices;
    indices.reserve(periods.entries.size());
    for (const PeriodEntry& e : periods.entries) indices.push_back(e.freq_index);
    Var amp_vars = selected_amplitudes(tape, x, indices);
    Var weights = tape.softmax(amp_vars);
    Var out{};
    for (std::size_t i = 0; i < periods.entries.size(); ++i) {
        Var m = fold_var(tape, x, periods.entries[i].period);
        Var h = inception_forward(tape, m, p.fourier_inception);
        Var y = unfold_var(tape, h, T_e);
        Var term = tape.scale_by_entry(y, weights, i);
        out = out.valid() ? tape.add(out, term) : term;
    }
    return out;
}

// Scalogram modulus -> inception -> strip conv collapsing the scale axis,
// transposed back to [T_e, D].
inline Var wavelet_branch(Tape& tape, Var x, const WFTBlockVars& p) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 2)
        throw DimensionError("wavelet_branch: need rank-2 input, got " + shape_str(xv.shape));
    Var sc = cwt_modulus(tape, x, p.scales); // [D, T_e, S]
    Var h = inception_forward(tape, sc, p.wavelet_inception);
    Var y = tape.strip_conv(h, p.strip_w, p.strip_b); // [D, T_e]
    return tape.transpose2d(y);
}

// Convex mix alpha^n * xf + (1 - alpha^n) * xw. The endpoints return the
// corresponding branch var unchanged so they are exact by construction.
inline Var fuse(Tape& tape, Var xf, Var xw, double alpha, double n) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ContractViolation("fuse: alpha must lie in [0, 1], got " + std::to_string(alpha));
    if (!(n >= 1.0)) throw ConfigError("fuse: exponent must be >= 1, got " + std::to_string(n));
    const Tensor& a = tape.value(xf);
    const Tensor& b = tape.value(xw);
    if (!a.same_shape(b))
        throw DimensionError("fuse: branch shapes differ, " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    const double w = std::pow(alpha, n);
    if (w == 1.0) return xf;
    if (w == 0.0) return xw;
    return tape.add(tape.scale(xf, w), tape.scale(xw, 1.0 - w));
}

// Residual update X + mix(branches). alpha is computed once per window by
// the caller and shared across blocks.
inline Var wftblock_forward(Tape& tape, Var x, const WFTBlockVars& p, double alpha,
                            BranchMode mode = BranchMode::fused) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 2)
        throw DimensionError("wftblock_forward: need rank-2 input, got " + shape_str(xv.shape));
    switch (mode) {
        case BranchMode::fourier_only:
            return tape.add(x, fourier_branch(tape, x, p));
        case BranchMode::wavelet_only:
            return tape.add(x, wavelet_branch(tape, x, p));
        case BranchMode::fused:
        default: {
            Var xf = fourier_branch(tape, x, p);
            Var xw = wavelet_branch(tape, x, p);
            return tape.add(x, fuse(tape, xf, xw, alpha, p.pwc_exponent));
        }
    }
}

} // namespace wftnet
