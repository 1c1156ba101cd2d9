#include <cmath>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "testutil.hpp"
#include "wftnet/wftblock.hpp"

using namespace wftnet;
using testutil::random_tensor;

namespace {

InceptionParams dirac_inception(std::size_t D) {
    InceptionParams p;
    p.k1 = Tensor::zeros({D, D, 1, 1});
    p.b1 = Tensor::zeros({D});
    p.k3 = Tensor::zeros({D, D, 3, 3});
    p.b3 = Tensor::zeros({D});
    p.k5 = Tensor::zeros({D, D, 5, 5});
    p.b5 = Tensor::zeros({D});
    for (std::size_t o = 0; o < D; ++o) {
        p.k1.at(o, o, 0, 0) = 1.0;
        p.k3.at(o, o, 1, 1) = 1.0;
        p.k5.at(o, o, 2, 2) = 1.0;
    }
    return p;
}

InceptionParams zero_inception(std::size_t D) {
    InceptionParams p;
    p.k1 = Tensor::zeros({D, D, 1, 1});
    p.b1 = Tensor::zeros({D});
    p.k3 = Tensor::zeros({D, D, 3, 3});
    p.b3 = Tensor::zeros({D});
    p.k5 = Tensor::zeros({D, D, 5, 5});
    p.b5 = Tensor::zeros({D});
    return p;
}

WFTBlockParams zero_block(std::size_t D, const ScaleSet& scales, std::size_t top_k) {
    WFTBlockParams p;
    p.fourier_inception = zero_inception(D);
    p.wavelet_inception = zero_inception(D);
    p.strip_w = Tensor::zeros({D, D, 1, scales.size()});
    p.strip_b = Tensor::zeros({D});
    p.top_k = top_k;
    p.pwc_exponent = 1.0;
    p.scales = scales;
    return p;
}

} // namespace

// ---------------------------------------------------------------------------
// Inception stack
// ---------------------------------------------------------------------------

TEST(Inception, DiracKernelsReduceToGelu) {
    const std::size_t D = 2;
    const Tensor x0 = random_tensor({D, 3, 5}, 201);
    Tape tape;
    InceptionVars v = register_inception(tape, dirac_inception(D), false);
    Var x = tape.leaf(x0);
    const Tensor out = tape.value(inception_forward(tape, x, v));
    const Tensor ref = tape.value(tape.gelu(tape.leaf(x0)));
    ASSERT_EQ(out.shape, x0.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out.data[i], ref.data[i], 1e-12);
}

TEST(Inception, ZeroParamsGiveExactZero) {
    const std::size_t D = 3;
    Tape tape;
    InceptionVars v = register_inception(tape, zero_inception(D), false);
    const Tensor& out =
        tape.value(inception_forward(tape, tape.leaf(random_tensor({D, 4, 6}, 202)), v));
    for (double val : out.data) EXPECT_EQ(val, 0.0);
}

TEST(Inception, GradientMatchesFiniteDifferences) {
    const std::size_t D = 2;
    RngState rng{11, 0};
    const InceptionParams params = init_inception(D, rng);
    const Tensor x0 = random_tensor({D, 4, 4}, 203);
    const Tensor tgt = random_tensor({D, 4, 4}, 204);
    auto loss = [&](Tape& t, Var x) {
        InceptionVars v = register_inception(t, params, false);
        return t.mse_against(inception_forward(t, x, v), tgt);
    };
    EXPECT_LT(testutil::check_input_gradient(x0, loss).max_rel_err, 1e-4);
}

TEST(Inception, RejectsRankTwoInput) {
    const std::size_t D = 2;
    Tape tape;
    InceptionVars v = register_inception(tape, zero_inception(D), false);
    EXPECT_THROW(inception_forward(tape, tape.leaf(Tensor::zeros({4, 4})), v), DimensionError);
}

// ---------------------------------------------------------------------------
// Fourier branch
// ---------------------------------------------------------------------------

TEST(FourierBranch, TopOnePeriodEqualsManualPipeline) {
    const std::size_t T_e = 12, D = 2;
    RngState rng{21, 0};
    const ScaleSet scales = default_scales(T_e);
    const WFTBlockParams params = init_wftblock(D, scales, 1, 1.0, rng);
    const Tensor x0 = random_tensor({T_e, D}, 205);

    const PeriodSet expect = topk_periods(amplitude_spectrum(x0), 1, T_e);
    ASSERT_EQ(expect.entries.size(), 1u);

    Tape tape;
    WFTBlockVars v = register_block(tape, params, false);
    Var x = tape.leaf(x0);
    PeriodSet selected;
    const Tensor out = tape.value(fourier_branch(tape, x, v, &selected));
    ASSERT_EQ(out.shape, (Shape{T_e, D}));
    ASSERT_EQ(selected.entries.size(), 1u);
    EXPECT_EQ(selected.entries[0].freq_index, expect.entries[0].freq_index);
    EXPECT_EQ(selected.entries[0].period, expect.entries[0].period);

    // With a single period the softmax weight is exactly 1, so the branch is
    // the bare fold -> inception -> unfold pipeline, bitwise.
    Var m = fold_var(tape, x, expect.entries[0].period);
    Var h = inception_forward(tape, m, v.fourier_inception);
    const Tensor manual = tape.value(unfold_var(tape, h, T_e));
    EXPECT_EQ(0, std::memcmp(out.data.data(), manual.data.data(), out.numel() * sizeof(double)));
}

TEST(FourierBranch, ImpulseInputWeighsPathsEqually) {
    const std::size_t T_e = 12;
    RngState rng{22, 0};
    const WFTBlockParams params = init_wftblock(1, default_scales(T_e), 2, 1.0, rng);
    Tensor x0 = Tensor::zeros({T_e, 1});
    x0.data[0] = 1.0; // flat spectrum: every bin has amplitude exactly 1

    Tape tape;
    WFTBlockVars v = register_block(tape, params, false);
    Var x = tape.leaf(x0);
    PeriodSet selected;
    const Tensor out = tape.value(fourier_branch(tape, x, v, &selected));
    ASSERT_EQ(selected.entries.size(), 2u);
    EXPECT_EQ(selected.entries[0].freq_index, 1u);
    EXPECT_EQ(selected.entries[0].period, 12u);
    EXPECT_EQ(selected.entries[1].freq_index, 2u);
    EXPECT_EQ(selected.entries[1].period, 6u);

    Var m1 = fold_var(tape, x, 12);
    const Tensor u1 = tape.value(unfold_var(tape, inception_forward(tape, m1, v.fourier_inception), T_e));
    Var m2 = fold_var(tape, x, 6);
    const Tensor u2 = tape.value(unfold_var(tape, inception_forward(tape, m2, v.fourier_inception), T_e));
    for (std::size_t i = 0; i < out.numel(); ++i)
        EXPECT_DOUBLE_EQ(out.data[i], 0.5 * u1.data[i] + 0.5 * u2.data[i]);
}

// ---------------------------------------------------------------------------
// Wavelet branch
// ---------------------------------------------------------------------------

TEST(WaveletBranch, ZeroInputProducesBiasConstant) {
    const std::size_t T_e = 16, D = 2;
    RngState rng{23, 0};
    const ScaleSet scales = default_scales(T_e);
    const WFTBlockParams params = init_wftblock(D, scales, 1, 1.0, rng);
    const std::size_t S = scales.size();

    Tape tape;
    WFTBlockVars v = register_block(tape, params, false);
    const Tensor out = tape.value(wavelet_branch(tape, tape.leaf(Tensor::zeros({T_e, D})), v));
    ASSERT_EQ(out.shape, (Shape{T_e, D}));

    // Scalogram of zero input is zero, so inception yields a per-channel
    // constant gelu((b1+b3+b5)/3) which the strip conv mixes with its bias.
    std::vector<double> g(D);
    for (std::size_t c = 0; c < D; ++c) {
        const double mean_bias = (params.wavelet_inception.b1.data[c] +
                                  params.wavelet_inception.b3.data[c] +
                                  params.wavelet_inception.b5.data[c]) / 3.0;
        g[c] = 0.5 * mean_bias * (1.0 + std::erf(mean_bias / std::sqrt(2.0)));
    }
    for (std::size_t o = 0; o < D; ++o) {
        double expect = params.strip_b.data[o];
        for (std::size_t c = 0; c < D; ++c)
            for (std::size_t s = 0; s < S; ++s)
                expect += g[c] * params.strip_w.at(o, c, 0, s);
        for (std::size_t t = 0; t < T_e; ++t) EXPECT_NEAR(out.at(t, o), expect, 1e-12);
    }
}

TEST(WaveletBranch, StripWeightGradientMatchesFiniteDifferences) {
    const std::size_t T_e = 12, D = 2;
    ScaleSet scales;
    scales.scales = {2.0, 2.8284271247461903};
    scales.omega0 = 6.0;
    RngState rng{24, 0};
    const WFTBlockParams params = init_wftblock(D, scales, 1, 1.0, rng);
    const Tensor x0 = random_tensor({T_e, D}, 206);
    const Tensor tgt = random_tensor({T_e, D}, 207);

    auto loss = [&](Tape& t, Var w) {
        WFTBlockVars v;
        v.wavelet_inception = register_inception(t, params.wavelet_inception, false);
        v.strip_w = w;
        v.strip_b = t.leaf(params.strip_b);
        v.scales = scales;
        return t.mse_against(wavelet_branch(t, t.leaf(x0), v), tgt);
    };
    EXPECT_LT(testutil::check_input_gradient(params.strip_w, loss).max_rel_err, 1e-4);
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

TEST(Fuse, EndpointsReturnBranchUnchanged) {
    Tape tape;
    Var xf = tape.leaf(random_tensor({4, 2}, 208));
    Var xw = tape.leaf(random_tensor({4, 2}, 209));
    EXPECT_EQ(fuse(tape, xf, xw, 1.0, 1.0).id, xf.id);
    EXPECT_EQ(fuse(tape, xf, xw, 0.0, 1.0).id, xw.id);
    EXPECT_EQ(fuse(tape, xf, xw, 0.0, 2.5).id, xw.id);
    EXPECT_EQ(fuse(tape, xf, xw, 1.0, 3.0).id, xf.id);
}

TEST(Fuse, ConvexMixValues) {
    Tape tape;
    Var xf = tape.leaf(Tensor::full({2, 2}, 2.0));
    Var xw = tape.leaf(Tensor::full({2, 2}, 4.0));
    const Tensor half = tape.value(fuse(tape, xf, xw, 0.5, 1.0));
    for (double v : half.data) EXPECT_DOUBLE_EQ(v, 3.0);
    // alpha^2 = 0.25 -> 0.25*2 + 0.75*4 = 3.5
    const Tensor squared = tape.value(fuse(tape, xf, xw, 0.5, 2.0));
    for (double v : squared.data) EXPECT_DOUBLE_EQ(v, 3.5);
}

TEST(Fuse, StaysInsideBranchEnvelope) {
    Tape tape;
    const Tensor a = random_tensor({5, 3}, 210);
    const Tensor b = random_tensor({5, 3}, 211);
    Var xf = tape.leaf(a);
    Var xw = tape.leaf(b);
    for (double alpha : {0.1, 0.37, 0.9}) {
        const Tensor out = tape.value(fuse(tape, xf, xw, alpha, 1.0));
        for (std::size_t i = 0; i < out.numel(); ++i) {
            EXPECT_GE(out.data[i], std::min(a.data[i], b.data[i]) - 1e-15);
            EXPECT_LE(out.data[i], std::max(a.data[i], b.data[i]) + 1e-15);
        }
    }
}

TEST(Fuse, ArgumentValidation) {
    Tape tape;
    Var xf = tape.leaf(Tensor::zeros({2, 2}));
    Var xw = tape.leaf(Tensor::zeros({2, 2}));
    EXPECT_THROW(fuse(tape, xf, xw, -0.1, 1.0), ContractViolation);
    EXPECT_THROW(fuse(tape, xf, xw, 1.1, 1.0), ContractViolation);
    EXPECT_THROW(fuse(tape, xf, xw, std::nan(""), 1.0), ContractViolation);
    EXPECT_THROW(fuse(tape, xf, xw, 0.5, 0.5), ConfigError);
    Var bad = tape.leaf(Tensor::zeros({3, 2}));
    EXPECT_THROW(fuse(tape, xf, bad, 0.5, 1.0), DimensionError);
}

// ---------------------------------------------------------------------------
// Whole block
// ---------------------------------------------------------------------------

TEST(WftBlock, ZeroParamsAreBitwiseIdentityInEveryMode) {
    const std::size_t T_e = 24, D = 3;
    const ScaleSet scales = default_scales(T_e);
    const WFTBlockParams params = zero_block(D, scales, 2);
    const Tensor x0 = random_tensor({T_e, D}, 212);

    for (BranchMode mode :
         {BranchMode::fused, BranchMode::fourier_only, BranchMode::wavelet_only}) {
        Tape tape;
        WFTBlockVars v = register_block(tape, params, false);
        const Tensor out = tape.value(wftblock_forward(tape, tape.leaf(x0), v, 0.6, mode));
        ASSERT_EQ(out.shape, x0.shape);
        EXPECT_EQ(0, std::memcmp(out.data.data(), x0.data.data(), x0.numel() * sizeof(double)))
            << branch_mode_name(mode);
    }
}

TEST(WftBlock, FusedGradientMatchesFiniteDifferences) {
    const std::size_t T_e = 16, D = 2;
    ScaleSet scales;
    scales.scales = {2.0, 2.8284271247461903};
    scales.omega0 = 6.0;
    RngState rng{25, 0};
    const WFTBlockParams params = init_wftblock(D, scales, 2, 1.0, rng);
    const Tensor x0 = random_tensor({T_e, D}, 213);
    const Tensor tgt = random_tensor({T_e, D}, 214);

    auto loss = [&](Tape& t, Var x) {
        WFTBlockVars v = register_block(t, params, false);
        return t.mse_against(wftblock_forward(t, x, v, 0.6, BranchMode::fused), tgt);
    };
    EXPECT_LT(testutil::check_input_gradient(x0, loss).max_rel_err, 1e-4);
}

TEST(WftBlock, RejectsRankOneInput) {
    RngState rng{26, 0};
    const WFTBlockParams params = init_wftblock(1, default_scales(16), 1, 1.0, rng);
    Tape tape;
    WFTBlockVars v = register_block(tape, params, false);
    EXPECT_THROW(wftblock_forward(tape, tape.leaf(Tensor::zeros({16})), v, 0.5), DimensionError);
}

TEST(WftBlock, InitValidation) {
    RngState rng{27, 0};
    const ScaleSet scales = default_scales(16);
    EXPECT_THROW(init_wftblock(2, scales, 0, 1.0, rng), ConfigError);
    EXPECT_THROW(init_wftblock(2, scales, 1, 0.5, rng), ConfigError);
    ScaleSet bad;
    EXPECT_THROW(init_wftblock(2, bad, 1, 1.0, rng), ConfigError);
}

TEST(BranchModeNames, StableStrings) {
    EXPECT_STREQ(branch_mode_name(BranchMode::fused), "fused");
    EXPECT_STREQ(branch_mode_name(BranchMode::fourier_only), "fourier-only");
    EXPECT_STREQ(branch_mode_name(BranchMode::wavelet_only), "wavelet-only");
}
