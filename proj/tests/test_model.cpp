#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "testutil.hpp"
#include "wftnet/checkpoint.hpp"
#include "wftnet/model.hpp"

using namespace wftnet;
using testutil::random_tensor;
using testutil::TempDir;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.seq_len = 16;
    cfg.pred_len = 8;
    cfg.channels = 2;
    cfg.embed_dim = 4;
    cfg.num_blocks = 1;
    cfg.top_k = 2;
    cfg.pwc_bins = 8;
    cfg.dropout = 0.0;
    cfg.mode = Mode::fused;
    return cfg;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(static_cast<bool>(in)) << path;
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

// ---------------------------------------------------------------------------
// Instance normalization
// ---------------------------------------------------------------------------

TEST(Normalize, ConstantWindowHitsStdFloor) {
    const auto [norm, stats] = normalize(Tensor::full({8, 1}, 5.0));
    for (double v : norm.data) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(stats.mean[0], 5.0);
    EXPECT_EQ(stats.stdev[0], kStdFloor);
}

TEST(Normalize, SymmetricPairIsExact) {
    const auto [norm, stats] = normalize(Tensor::of({2, 1}, {-1.0, 1.0}));
    EXPECT_EQ(stats.mean[0], 0.0);
    EXPECT_EQ(stats.stdev[0], 1.0);
    EXPECT_EQ(norm.data[0], -1.0);
    EXPECT_EQ(norm.data[1], 1.0);
}

TEST(Normalize, DenormalizeRoundTrips) {
    const Tensor x = random_tensor({24, 3}, 301, 4.0);
    const auto [norm, stats] = normalize(x);
    // Normalized columns have zero mean and unit population variance.
    for (std::size_t c = 0; c < 3; ++c) {
        double mu = 0.0, var = 0.0;
        for (std::size_t t = 0; t < 24; ++t) mu += norm.at(t, c);
        mu /= 24.0;
        for (std::size_t t = 0; t < 24; ++t) {
            const double d = norm.at(t, c) - mu;
            var += d * d;
        }
        var /= 24.0;
        EXPECT_NEAR(mu, 0.0, 1e-12);
        EXPECT_NEAR(var, 1.0, 1e-12);
    }
    const Tensor back = denormalize(norm, stats);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(back.data[i], x.data[i], 1e-9);
}

TEST(Normalize, ReportsNonFiniteCell) {
    Tensor x = random_tensor({6, 3}, 302);
    x.at(2, 1) = std::nan("");
    try {
        normalize(x);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column 1"), std::string::npos) << msg;
    }
    EXPECT_THROW(normalize(Tensor::zeros({5})), DimensionError);
    EXPECT_THROW(normalize(Tensor::zeros({1, 2})), DimensionError);
}

// ---------------------------------------------------------------------------
// Positional table and config validation
// ---------------------------------------------------------------------------

TEST(Positional, SinCosLayout) {
    const Tensor p = sinusoidal_positional(6, 4);
    ASSERT_EQ(p.shape, (Shape{6, 4}));
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(p.at(0, i), (i % 2 == 0) ? 0.0 : 1.0);
    EXPECT_NEAR(p.at(1, 0), std::sin(1.0), 1e-15);
    EXPECT_NEAR(p.at(1, 1), std::cos(1.0), 1e-15);
    // Second column pair runs at frequency 10000^(-2/4) = 0.01.
    EXPECT_NEAR(p.at(5, 2), std::sin(0.05), 1e-15);
    EXPECT_NEAR(p.at(5, 3), std::cos(0.05), 1e-15);
}

TEST(ModelConfigValidation, CatchesBadFields) {
    EXPECT_NO_THROW(small_config().validate());
    auto expect_bad = [](auto&& mutate) {
        ModelConfig cfg = small_config();
        mutate(cfg);
        EXPECT_THROW(cfg.validate(), ConfigError);
    };
    expect_bad([](ModelConfig& c) { c.seq_len = 3; });
    expect_bad([](ModelConfig& c) { c.pred_len = 0; });
    expect_bad([](ModelConfig& c) { c.channels = 0; });
    expect_bad([](ModelConfig& c) { c.embed_dim = 0; });
    expect_bad([](ModelConfig& c) { c.num_blocks = 0; });
    expect_bad([](ModelConfig& c) { c.top_k = 13; }); // > total_len/2
    expect_bad([](ModelConfig& c) { c.pwc_bins = 1; });
    expect_bad([](ModelConfig& c) { c.pwc_bins = 9; }); // > seq_len/2
    expect_bad([](ModelConfig& c) { c.pwc_exponent = 0.5; });
    expect_bad([](ModelConfig& c) { c.omega0 = 0.0; });
    expect_bad([](ModelConfig& c) { c.dropout = 1.0; });
    expect_bad([](ModelConfig& c) {
        c.seq_len = 4;
        c.pred_len = 1; // total 5 < 8
        c.pwc_bins = 2;
        c.top_k = 2;
    });
    EXPECT_EQ(ModelConfig::default_pwc_bins(96), 32u);
    EXPECT_EQ(ModelConfig::default_pwc_bins(20), 10u);
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

TEST(Embed, IsAffineInEvalMode) {
    const ModelConfig cfg = small_config();
    RngState init{5, 0};
    const ModelParams params = init_model(cfg, init);
    const Tensor a = random_tensor({16, 2}, 303);
    const Tensor b = random_tensor({16, 2}, 304);
    Tensor ab(Shape{16, 2});
    for (std::size_t i = 0; i < ab.numel(); ++i) ab.data[i] = a.data[i] + b.data[i];

    Tape tape;
    ModelVars mv = register_model(tape, params, false);
    RngState rng{1, 0};
    auto run = [&](const Tensor& x) {
        return tape.value(embed(tape, tape.leaf(x), mv, cfg, rng, false));
    };
    const Tensor ea = run(a), eb = run(b), eab = run(ab), e0 = run(Tensor::zeros({16, 2}));
    ASSERT_EQ(ea.shape, (Shape{24, 4}));
    for (std::size_t i = 0; i < ea.numel(); ++i)
        EXPECT_NEAR(eab.data[i] + e0.data[i], ea.data[i] + eb.data[i], 1e-9);
}

TEST(Embed, GradientMatchesFiniteDifferences) {
    const ModelConfig cfg = small_config();
    RngState init{6, 0};
    const ModelParams params = init_model(cfg, init);
    const Tensor x0 = random_tensor({16, 2}, 305);
    const Tensor tgt = random_tensor({24, 4}, 306);
    auto loss = [&](Tape& t, Var x) {
        ModelVars mv = register_model(t, params, false);
        RngState rng{1, 0};
        return t.mse_against(embed(t, x, mv, cfg, rng, false), tgt);
    };
    EXPECT_LT(testutil::check_input_gradient(x0, loss).max_rel_err, 1e-4);
}

TEST(Embed, RejectsWrongShape) {
    const ModelConfig cfg = small_config();
    RngState init{7, 0};
    const ModelParams params = init_model(cfg, init);
    Tape tape;
    ModelVars mv = register_model(tape, params, false);
    RngState rng{1, 0};
    EXPECT_THROW(embed(tape, tape.leaf(Tensor::zeros({15, 2})), mv, cfg, rng, false),
                 DimensionError);
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

TEST(Forward, ZeroParamsPredictWindowMeanExactly) {
    const ModelConfig cfg = small_config();
    const ModelParams params = zero_model_params(cfg);
    const Tensor window = random_tensor({16, 2}, 307, 3.0);
    RngState rng{1, 0};
    double alpha = -1.0;
    const Tensor pred = forward(window, params, cfg, rng, false, &alpha);
    ASSERT_EQ(pred.shape, (Shape{8, 2}));

    const double inv_t = 1.0 / 16.0;
    for (std::size_t c = 0; c < 2; ++c) {
        double mu = 0.0;
        for (std::size_t t = 0; t < 16; ++t) mu += window.at(t, c);
        mu *= inv_t;
        for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(pred.at(t, c), mu);
    }

    const double expect_alpha = pwc(normalize(window).first, cfg.pwc_bins);
    EXPECT_EQ(alpha, expect_alpha);
    EXPECT_GE(alpha, 1.0 / static_cast<double>(cfg.pwc_bins) - 1e-12);
    EXPECT_LE(alpha, 1.0 + 1e-12);
}

TEST(Forward, AffineEquivariantThroughInstanceNorm) {
    const ModelConfig cfg = small_config();
    RngState init{8, 0};
    const ModelParams params = init_model(cfg, init);
    const Tensor window = random_tensor({16, 2}, 308);
    Tensor scaled(Shape{16, 2});
    for (std::size_t i = 0; i < window.numel(); ++i) scaled.data[i] = 2.0 * window.data[i] + 3.0;

    RngState rng{1, 0};
    const Tensor base = forward(window, params, cfg, rng);
    const Tensor moved = forward(scaled, params, cfg, rng);
    for (std::size_t i = 0; i < base.numel(); ++i)
        EXPECT_NEAR(moved.data[i], 2.0 * base.data[i] + 3.0, 1e-9);
}

TEST(Forward, FourierOnlyIgnoresWaveletConfig) {
    ModelConfig a = small_config();
    a.mode = Mode::fourier_only;
    ModelConfig b = a;
    b.omega0 = 3.0; // only the wavelet branch consumes omega0
    RngState ra{11, 0}, rb{11, 0};
    const ModelParams pa = init_model(a, ra);
    const ModelParams pb = init_model(b, rb);
    const Tensor window = random_tensor({16, 2}, 309);
    RngState r1{1, 0}, r2{1, 0};
    const Tensor ya = forward(window, pa, a, r1);
    const Tensor yb = forward(window, pb, b, r2);
    EXPECT_EQ(0, std::memcmp(ya.data.data(), yb.data.data(), ya.numel() * sizeof(double)));
}

TEST(Forward, WaveletOnlyIgnoresPeriodCount) {
    ModelConfig a = small_config();
    a.mode = Mode::wavelet_only;
    a.top_k = 1;
    ModelConfig b = a;
    b.top_k = 3; // only the Fourier branch consumes top_k
    RngState ra{12, 0}, rb{12, 0};
    const ModelParams pa = init_model(a, ra);
    const ModelParams pb = init_model(b, rb);
    const Tensor window = random_tensor({16, 2}, 310);
    RngState r1{1, 0}, r2{1, 0};
    const Tensor ya = forward(window, pa, a, r1);
    const Tensor yb = forward(window, pb, b, r2);
    EXPECT_EQ(0, std::memcmp(ya.data.data(), yb.data.data(), ya.numel() * sizeof(double)));
}

TEST(Forward, TrainingModeIsSeedDeterministic) {
    ModelConfig cfg = small_config();
    cfg.dropout = 0.5;
    RngState init{13, 0};
    const ModelParams params = init_model(cfg, init);
    const Tensor window = random_tensor({16, 2}, 311);
    RngState r1{21, 0}, r2{21, 0};
    const Tensor y1 = forward(window, params, cfg, r1, true);
    const Tensor y2 = forward(window, params, cfg, r2, true);
    EXPECT_EQ(0, std::memcmp(y1.data.data(), y2.data.data(), y1.numel() * sizeof(double)));
    EXPECT_EQ(r1.counter, r2.counter);
    EXPECT_GT(r1.counter, 0u);
}

TEST(Forward, RejectsWrongWindowShape) {
    const ModelConfig cfg = small_config();
    const ModelParams params = zero_model_params(cfg);
    RngState rng{1, 0};
    EXPECT_THROW(forward(Tensor::zeros({16, 3}), params, cfg, rng), DimensionError);
    EXPECT_THROW(forward(Tensor::zeros({12, 2}), params, cfg, rng), DimensionError);
}

TEST(Forward, ParameterGradientsMatchFiniteDifferences) {
    ModelConfig cfg = small_config();
    cfg.channels = 1;
    RngState init{14, 0};
    const ModelParams params = init_model(cfg, init);
    const Tensor window = random_tensor({16, 1}, 312);
    const Tensor target = random_tensor({8, 1}, 313);
    const testutil::GradCheck gc =
        testutil::check_model_param_gradients(params, cfg, window, target, 3);
    EXPECT_GT(gc.checked, 0u);
    EXPECT_LT(gc.max_rel_err, 1e-4) << "worst rel err " << gc.max_rel_err;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitwiseAndCanonical) {
    TempDir dir;
    const std::string path = dir.file("model.wft");
    ModelConfig cfg = small_config();
    cfg.mode = Mode::wavelet_only;
    cfg.dropout = 0.25;
    RngState init{15, 0};
    ModelParams params = init_model(cfg, init);
    params.standardize_mean.data[0] = 1.5;
    params.standardize_std.data[1] = 2.75;
    save_checkpoint(params, cfg, path);

    auto [loaded, loaded_cfg] = load_checkpoint(path);
    EXPECT_EQ(loaded_cfg.seq_len, cfg.seq_len);
    EXPECT_EQ(loaded_cfg.pred_len, cfg.pred_len);
    EXPECT_EQ(loaded_cfg.channels, cfg.channels);
    EXPECT_EQ(loaded_cfg.embed_dim, cfg.embed_dim);
    EXPECT_EQ(loaded_cfg.num_blocks, cfg.num_blocks);
    EXPECT_EQ(loaded_cfg.top_k, cfg.top_k);
    EXPECT_EQ(loaded_cfg.pwc_exponent, cfg.pwc_exponent);
    EXPECT_EQ(loaded_cfg.pwc_bins, cfg.pwc_bins);
    EXPECT_EQ(loaded_cfg.omega0, cfg.omega0);
    EXPECT_EQ(loaded_cfg.dropout, cfg.dropout);
    EXPECT_EQ(loaded_cfg.mode, cfg.mode);

    std::vector<std::pair<std::string, const Tensor*>> orig, back;
    for_each_param(params, [&](const std::string& n, const Tensor& t, bool) {
        orig.emplace_back(n, &t);
    });
    for_each_param(loaded, [&](const std::string& n, const Tensor& t, bool) {
        back.emplace_back(n, &t);
    });
    ASSERT_EQ(orig.size(), back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        EXPECT_EQ(orig[i].first, back[i].first);
        ASSERT_EQ(orig[i].second->shape, back[i].second->shape) << orig[i].first;
        EXPECT_EQ(0, std::memcmp(orig[i].second->data.data(), back[i].second->data.data(),
                                 orig[i].second->numel() * sizeof(double)))
            << orig[i].first;
    }

    // Serialization is canonical: re-saving the loaded model reproduces the
    // file byte for byte.
    const std::string path2 = dir.file("model2.wft");
    save_checkpoint(loaded, loaded_cfg, path2);
    EXPECT_EQ(read_bytes(path), read_bytes(path2));
}

TEST(Checkpoint, DetectsCorruption) {
    TempDir dir;
    const std::string path = dir.file("model.wft");
    const ModelConfig cfg = small_config();
    RngState init{16, 0};
    save_checkpoint(init_model(cfg, init), cfg, path);
    const std::string good = read_bytes(path);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    write_bytes(dir.file("bad_magic.wft"), bad_magic);
    EXPECT_THROW(load_checkpoint(dir.file("bad_magic.wft")), FormatError);

    write_bytes(dir.file("truncated.wft"), good.substr(0, good.size() - 100));
    EXPECT_THROW(load_checkpoint(dir.file("truncated.wft")), FormatError);

    write_bytes(dir.file("trailing.wft"), good + "x");
    EXPECT_THROW(load_checkpoint(dir.file("trailing.wft")), FormatError);

    std::string bad_name = good;
    const std::size_t name_pos = bad_name.find("value_embed.weight");
    ASSERT_NE(name_pos, std::string::npos);
    bad_name[name_pos] = 'V';
    write_bytes(dir.file("bad_name.wft"), bad_name);
    EXPECT_THROW(load_checkpoint(dir.file("bad_name.wft")), ValidationError);

    // First dim of the first tensor lives right after magic, config block,
    // name, and rank; bumping it must trip the shape check.
    std::uint64_t json_len = 0;
    for (int i = 0; i < 8; ++i)
        json_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(good[8 + i])) << (8 * i);
    const std::size_t dim_pos = 8 + 8 + json_len + 8 + std::string("value_embed.weight").size() + 8;
    std::string bad_dim = good;
    bad_dim[dim_pos] = static_cast<char>(static_cast<unsigned char>(bad_dim[dim_pos]) + 1);
    write_bytes(dir.file("bad_dim.wft"), bad_dim);
    EXPECT_THROW(load_checkpoint(dir.file("bad_dim.wft")), ValidationError);

    // Unknown config keys are rejected before any tensor is read.
    nlohmann::json j = nlohmann::json::parse(good.substr(16, json_len));
    j["zzz"] = 1;
    const std::string patched_json = j.dump();
    std::string bad_key;
    bad_key.append(good.data(), 8);
    detail::put_u64(bad_key, patched_json.size());
    bad_key.append(patched_json);
    bad_key.append(good.substr(16 + json_len));
    write_bytes(dir.file("bad_key.wft"), bad_key);
    EXPECT_THROW(load_checkpoint(dir.file("bad_key.wft")), ValidationError);

    EXPECT_THROW(load_checkpoint(dir.file("missing.wft")), IoError);
}

TEST(Checkpoint, RejectsStoredInvalidConfig) {
    TempDir dir;
    const std::string path = dir.file("invalid_cfg.wft");
    const ModelConfig good_cfg = small_config();
    RngState init{17, 0};
    const ModelParams params = init_model(good_cfg, init);
    ModelConfig bad_cfg = good_cfg;
    bad_cfg.seq_len = 2; // fails validate() on load
    save_checkpoint(params, bad_cfg, path);
    EXPECT_THROW(load_checkpoint(path), ValidationError);
}
