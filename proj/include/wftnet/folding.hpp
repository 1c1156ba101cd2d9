#pragma once

// Period folding: a [T, D] sequence becomes a [D, p, ceil(T/p)] map whose
// rows index the position within one period and whose columns index
// successive periods. The tail column is zero-padded; unfold drops the pad.

#include <cstddef>

#include "autodiff.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace wftnet {

struct PeriodMap2D {
    Tensor data; // [D, period, num_cols]
    std::size_t period = 0;
    std::size_t original_len = 0;
    std::size_t pad_count = 0;

    std::size_t num_cols() const { return data.shape[2]; }
};

inline void check_fold_args(std::size_t T, std::size_t p, const char* who) {
    if (p < 1 || p > T)
        throw ConfigError(std::string(who) + ": period " + std::to_string(p) +
                          " must lie in [1, " + std::to_string(T) + "]");
}

inline PeriodMap2D fold(const Tensor& x, std::size_t p) {
    if (x.rank() != 2)
        throw DimensionError("fold: need rank-2 input, got " + shape_str(x.shape));
    const std::size_t T = x.shape[0], D = x.shape[1];
    check_fold_args(T, p, "fold");
    const std::size_t cols = (T + p - 1) / p;
    PeriodMap2D out;
    out.period = p;
    out.original_len = T;
    out.pad_count = cols * p - T;
    out.data = Tensor(Shape{D, p, cols});
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = t % p, c = t / p;
        for (std::size_t d = 0; d < D; ++d)
            out.data.data[(d * p + r) * cols + c] = x.data[t * D + d];
    }
    return out;
}

inline Tensor unfold(const PeriodMap2D& m) {
    if (m.data.rank() != 3)
        throw DimensionError("unfold: need rank-3 map, got " + shape_str(m.data.shape));
    const std::size_t D = m.data.shape[0], p = m.data.shape[1], cols = m.data.shape[2];
    if (p != m.period || m.original_len == 0 || m.original_len > p * cols ||
        m.pad_count != p * cols - m.original_len)
        throw ValidationError("unfold: inconsistent period map metadata");
    Tensor out(Shape{m.original_len, D});
    for (std::size_t t = 0; t < m.original_len; ++t) {
        const std::size_t r = t % p, c = t / p;
        for (std::size_t d = 0; d < D; ++d)
            out.data[t * D + d] = m.data.data[(d * p + r) * cols + c];
    }
    return out;
}

// ----- tape variants -------------------------------------------------------

// [T, D] -> [D, p, ceil(T/p)]; gradients of pad cells are discarded.
inline Var fold_var(Tape& tape, Var xv, std::size_t p) {
    const Tensor& x = tape.value(xv);
    if (x.rank() != 2)
        throw DimensionError("fold_var: need rank-2 input, got " + shape_str(x.shape));
    const std::size_t T = x.shape[0], D = x.shape[1];
    check_fold_args(T, p, "fold_var");
    const std::size_t cols = (T + p - 1) / p;
    Tensor out(Shape{D, p, cols});
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = t % p, c = t / p;
        for (std::size_t d = 0; d < D; ++d)
            out.data[(d * p + r) * cols + c] = x.data[t * D + d];
    }
    Var v = tape.custom_node(std::move(out), tape.needs_grad(xv));
    tape.set_backward(v, [xv, v, T, D, p, cols](Tape& t) {
        const auto& g = t.grad_buf(v);
        auto& gx = t.grad_buf(xv);
        for (std::size_t time = 0; time < T; ++time) {
            const std::size_t r = time % p, c = time / p;
            for (std::size_t d = 0; d < D; ++d)
                gx[time * D + d] += g[(d * p + r) * cols + c];
        }
    });
    return v;
}

// [D, p, cols] -> [T, D] for T <= p*cols; pad cells receive zero gradient.
inline Var unfold_var(Tape& tape, Var mv, std::size_t T) {
    const Tensor& m = tape.value(mv);
    if (m.rank() != 3)
        throw DimensionError("unfold_var: need rank-3 input, got " + shape_str(m.shape));
    const std::size_t D = m.shape[0], p = m.shape[1], cols = m.shape[2];
    if (T == 0 || T > p * cols || (T + p - 1) / p != cols)
        throw DimensionError("unfold_var: length " + std::to_string(T) +
                             " inconsistent with map " + shape_str(m.shape));
    Tensor out(Shape{T, D});
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = t % p, c = t / p;
        for (std::size_t d = 0; d < D; ++d)
            out.data[t * D + d] = m.data[(d * p + r) * cols + c];
    }
    Var v = tape.custom_node(std::move(out), tape.needs_grad(mv));
    tape.set_backward(v, [mv, v, T, D, p, cols](Tape& t) {
        const auto& g = t.grad_buf(v);
        auto& gm = t.grad_buf(mv);
        for (std::size_t time = 0; time < T; ++time) {
            const std::size_t r = time % p, c = time / p;
            for (std::size_t d = 0; d < D; ++d)
                gm[(d * p + r) * cols + c] += g[time * D + d];
        }
    });
    return v;
}

} // namespace wftnet
