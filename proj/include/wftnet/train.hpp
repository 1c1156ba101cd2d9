#pragma once

// Adam optimization and the training loop: shuffled stride-1 windows, MSE
// loss, per-epoch validation with patience-based early stopping, and a
// metric log. Everything is bitwise reproducible given (seed, data, config):
// windows are accumulated sequentially in shuffled order and the shuffle
// stream depends only on the run seed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "tensor.hpp"

namespace wftnet {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m; // first moments, canonical learnable order
    std::vector<Tensor> v; // second moments
    std::size_t step = 0;
};

inline AdamState init_adam(const ModelParams& params) {
    AdamState s;
    for_each_param(params, [&s](const std::string&, const Tensor& t, bool learnable) {
        if (!learnable) return;
        s.m.push_back(Tensor::zeros(t.shape));
        s.v.push_back(Tensor::zeros(t.shape));
    });
    return s;
}

// Standard bias-corrected Adam over every learnable tensor, consuming the
// gradients staged in Tensor::grad.
inline void adam_step(ModelParams& params, AdamState& st, const AdamConfig& cfg) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    std::size_t i = 0;
    for_each_param(params, [&](const std::string& name, Tensor& t, bool learnable) {
        if (!learnable) return;
        if (i >= st.m.size() || !st.m[i].same_shape(t))
            throw TrainingError("adam_step: state does not match parameter '" + name + "'");
        if (t.grad.size() != t.data.size())
            throw TrainingError("adam_step: missing gradient for '" + name + "'");
        Tensor& m = st.m[i];
        Tensor& v = st.v[i];
        for (std::size_t j = 0; j < t.data.size(); ++j) {
            const double g = t.grad[j];
            if (!std::isfinite(g))
                throw TrainingError("adam_step: non-finite gradient for '" + name + "'");
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g;
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m.data[j] / bc1;
            const double v_hat = v.data[j] / bc2;
            t.data[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        ++i;
    });
}

// Tape handles of the learnable tensors in the same order init_adam and
// adam_step walk them.
inline std::vector<Var> learnable_vars(const ModelVars& mv) {
    std::vector<Var> vs{mv.value_embed_w, mv.value_embed_b, mv.temporal_w, mv.temporal_b};
    for (const WFTBlockVars& b : mv.blocks) {
        for (const InceptionVars* iv : {&b.fourier_inception, &b.wavelet_inception}) {
            vs.push_back(iv->k1);
            vs.push_back(iv->b1);
            vs.push_back(iv->k3);
            vs.push_back(iv->b3);
            vs.push_back(iv->k5);
            vs.push_back(iv->b5);
        }
        vs.push_back(b.strip_w);
        vs.push_back(b.strip_b);
    }
    vs.push_back(mv.head_w);
    vs.push_back(mv.head_b);
    return vs;
}

struct TrainConfig {
    AdamConfig adam{};
    std::size_t batch_size = 16;
    std::size_t max_epochs = 30;
    std::size_t patience = 3;
    std::uint64_t seed = 42;
    double stop_train_mse = 0.0; // > 0 stops once the epoch train MSE drops below
};

struct EpochLogRow {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double val_mae = 0.0;
    double alpha_mean = 0.0;
};

struct TrainResult {
    ModelParams params; // best-validation parameters
    std::vector<EpochLogRow> log;
    double best_val_mse = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::size_t steps_run = 0;
};

// Trains on `data` (already dataset-standardized; metrics are on that
// scale). The test range is deliberately not an argument: nothing here can
// touch it.
inline TrainResult train(ModelParams params, const ModelConfig& cfg, const SeriesTable& data,
                         RowRange train_range, RowRange val_range, const TrainConfig& tc) {
    cfg.validate();
    if (tc.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (tc.max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (data.channels() != cfg.channels)
        throw DimensionError("train: data has " + std::to_string(data.channels()) +
                             " channels, config expects " + std::to_string(cfg.channels));
    const std::size_t Te = cfg.total_len();
    const WindowSampler train_windows(train_range, Te);
    const WindowSampler val_windows(val_range, Te);
    const std::size_t n_train = train_windows.count();

    RngState rng{tc.seed, 0};
    AdamState adam = init_adam(params);
    TrainResult result;
    result.params = params;

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    std::size_t bad_epochs = 0;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        // Fisher-Yates with the run RNG.
        for (std::size_t i = n_train; i > 1; --i) {
            const std::size_t j = rng.next_below(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        double alpha_sum = 0.0;
        for (std::size_t pos = 0; pos < n_train;) {
            const std::size_t chunk = std::min(tc.batch_size, n_train - pos);
            Tape tape;
            const ModelVars mv = register_model(tape, params, true);
            Var total{};
            for (std::size_t b = 0; b < chunk; ++b) {
                const std::size_t start = train_windows.start(order[pos + b]);
                const Tensor window = window_rows(data, start, Te);
                Tensor input(Shape{cfg.seq_len, cfg.channels});
                Tensor target(Shape{cfg.pred_len, cfg.channels});
                std::copy(window.data.begin(),
                          window.data.begin() + static_cast<std::ptrdiff_t>(cfg.seq_len * cfg.channels),
                          input.data.begin());
                std::copy(window.data.begin() + static_cast<std::ptrdiff_t>(cfg.seq_len * cfg.channels),
                          window.data.end(), target.data.begin());
                double alpha = 0.0;
                Var pred = forward_on_tape(tape, input, mv, cfg, rng, true, &alpha);
                alpha_sum += alpha;
                Var loss = tape.mse_against(pred, target);
                total = total.valid() ? tape.add(total, loss) : loss;
            }
            Var batch_loss = tape.scale(total, 1.0 / static_cast<double>(chunk));
            const double loss_value = tape.value(batch_loss).data[0];
            if (!std::isfinite(loss_value))
                throw TrainingError("train: loss diverged at epoch " + std::to_string(epoch) +
                                    " (batch starting at window " + std::to_string(pos) + ")");
            tape.backward(batch_loss);
            const std::vector<Var> vars = learnable_vars(mv);
            std::size_t vi = 0;
            for_each_param(params, [&](const std::string&, Tensor& t, bool learnable) {
                if (!learnable) return;
                t.grad = tape.grad_data(vars[vi]);
                ++vi;
            });
            adam_step(params, adam, tc.adam);
            ++result.steps_run;
            epoch_loss += loss_value * static_cast<double>(chunk);
            pos += chunk;
        }
        const double train_mse = epoch_loss / static_cast<double>(n_train);

        double val_mse_sum = 0.0, val_mae_sum = 0.0;
        for (std::size_t i = 0; i < val_windows.count(); ++i) {
            const Tensor window = window_rows(data, val_windows.start(i), Te);
            Tensor input(Shape{cfg.seq_len, cfg.channels});
            Tensor target(Shape{cfg.pred_len, cfg.channels});
            std::copy(window.data.begin(),
                      window.data.begin() + static_cast<std::ptrdiff_t>(cfg.seq_len * cfg.channels),
                      input.data.begin());
            std::copy(window.data.begin() + static_cast<std::ptrdiff_t>(cfg.seq_len * cfg.channels),
                      window.data.end(), target.data.begin());
            const Tensor pred = forward(input, params, cfg, rng, false);
            val_mse_sum += mse(pred, target);
            val_mae_sum += mae(pred, target);
        }
        const double val_mse = val_mse_sum / static_cast<double>(val_windows.count());
        const double val_mae = val_mae_sum / static_cast<double>(val_windows.count());
        if (!std::isfinite(val_mse))
            throw TrainingError("train: validation loss diverged at epoch " + std::to_string(epoch));

        result.log.push_back(
            {epoch, train_mse, val_mse, val_mae, alpha_sum / static_cast<double>(n_train)});

        if (val_mse < result.best_val_mse) {
            result.best_val_mse = val_mse;
            result.best_epoch = epoch;
            result.params = params;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
        result.epochs_run = epoch;
        if (bad_epochs >= tc.patience) break;
        if (tc.stop_train_mse > 0.0 && train_mse < tc.stop_train_mse) break;
    }
    return result;
}

} // namespace wftnet
