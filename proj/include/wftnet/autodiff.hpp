#pragma once

// Minimal reverse-mode autodiff. A Tape records one forward pass as a flat
// node list; backward() sweeps it once in reverse creation order, so the
// accumulation order is fixed and results are bitwise reproducible.
//
// Var is a plain index into the tape. Ops validate shapes eagerly and throw
// DimensionError/ConfigError before touching any data.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace wftnet {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    // ----- node access -------------------------------------------------

    Var leaf(const Tensor& t, bool requires_grad = false) {
        check_shape_valid(t.shape, "Tape::leaf");
        return push(Tensor(t.shape, t.data), requires_grad, {});
    }

    const Tensor& value(Var v) const { return node(v).val; }

    // Gradient of the last backward() w.r.t. node v, zeros if untouched.
    Tensor grad_tensor(Var v) const {
        const Node& n = node(v);
        Tensor g(n.val.shape);
        if (!n.grad.empty()) g.data = n.grad;
        return g;
    }

    const std::vector<double>& grad_data(Var v) const {
        const Node& n = node(v);
        if (n.grad.empty()) const_cast<Node&>(n).grad.assign(n.val.numel(), 0.0);
        return n.grad;
    }

    bool needs_grad(Var v) const { return node(v).needs; }
    std::size_t size() const { return nodes_.size(); }

    // ----- extension hooks for composite ops (spectral, folding) -------

    Var custom_node(Tensor value, bool needs) {
        check_shape_valid(value.shape, "Tape::custom_node");
        return push(std::move(value), needs, {});
    }

    void set_backward(Var v, std::function<void(Tape&)> fn) {
        node_mut(v).backward = std::move(fn);
    }

    std::vector<double>& grad_buf(Var v) {
        Node& n = node_mut(v);
        if (n.grad.empty()) n.grad.assign(n.val.numel(), 0.0);
        return n.grad;
    }

    // ----- elementwise and structural ops -------------------------------

    Var add(Var a, Var b) {
        const Tensor& x = value(a);
        const Tensor& y = value(b);
        require_same(x, y, "add");
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.data[i] + y.data[i];
        Var v = push(std::move(out), needs_grad(a) || needs_grad(b), {});
        set_backward(v, [a, b, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            auto& gb = t.grad_buf(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
        });
        return v;
    }

    Var sub(Var a, Var b) {
        const Tensor& x = value(a);
        const Tensor& y = value(b);
        require_same(x, y, "sub");
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.data[i] - y.data[i];
        Var v = push(std::move(out), needs_grad(a) || needs_grad(b), {});
        set_backward(v, [a, b, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            auto& gb = t.grad_buf(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
        });
        return v;
    }

    Var mul(Var a, Var b) {
        const Tensor& x = value(a);
        const Tensor& y = value(b);
        require_same(x, y, "mul");
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.data[i] * y.data[i];
        Var v = push(std::move(out), needs_grad(a) || needs_grad(b), {});
        set_backward(v, [a, b, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& x = t.value(a).data;
            const auto& y = t.value(b).data;
            auto& ga = t.grad_buf(a);
            auto& gb = t.grad_buf(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * y[i];
                gb[i] += g[i] * x[i];
            }
        });
        return v;
    }

    Var scale(Var a, double c) {
        const Tensor& x = value(a);
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.data[i] * c;
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, c, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
        return v;
    }

    // out = x + c, no gradient into c.
    Var add_const(Var a, const Tensor& c) {
        const Tensor& x = value(a);
        require_same(x, c, "add_const");
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.data[i] + c.data[i];
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
        return v;
    }

    // Per-column affine with constant coefficients: out[r,c] = x[r,c]*s[c] + t[c].
    Var colwise_affine(Var a, const std::vector<double>& s, const std::vector<double>& t_shift) {
        const Tensor& x = value(a);
        if (x.rank() != 2)
            throw DimensionError("colwise_affine: need rank-2 input, got " + shape_str(x.shape));
        const std::size_t R = x.shape[0], C = x.shape[1];
        if (s.size() != C || t_shift.size() != C)
            throw DimensionError("colwise_affine: coefficient length mismatch for " + shape_str(x.shape));
        Tensor out(x.shape);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
                out.data[r * C + c] = x.data[r * C + c] * s[c] + t_shift[c];
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v, s, R, C](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c)
                    ga[r * C + c] += g[r * C + c] * s[c];
        });
        return v;
    }

    // out = y * w[idx] where w is a rank-1 var of weights.
    Var scale_by_entry(Var y, Var w, std::size_t idx) {
        const Tensor& yv = value(y);
        const Tensor& wv = value(w);
        if (wv.rank() != 1 || idx >= wv.numel())
            throw DimensionError("scale_by_entry: weight index " + std::to_string(idx) +
                                 " out of range for " + shape_str(wv.shape));
        const double c = wv.data[idx];
        Tensor out(yv.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = yv.data[i] * c;
        Var v = push(std::move(out), needs_grad(y) || needs_grad(w), {});
        set_backward(v, [y, w, idx, c, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& yd = t.value(y).data;
            auto& gy = t.grad_buf(y);
            auto& gw = t.grad_buf(w);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gy[i] += g[i] * c;
                acc += g[i] * yd[i];
            }
            gw[idx] += acc;
        });
        return v;
    }

    Var transpose2d(Var a) {
        const Tensor& x = value(a);
        if (x.rank() != 2)
            throw DimensionError("transpose2d: need rank-2 input, got " + shape_str(x.shape));
        const std::size_t R = x.shape[0], C = x.shape[1];
        Tensor out(Shape{C, R});
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
                out.data[c * R + r] = x.data[r * C + c];
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v, R, C](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c)
                    ga[r * C + c] += g[c * R + r];
        });
        return v;
    }

    // Rows [row0, row0+nrows) of a rank-2 tensor.
    Var slice_rows(Var a, std::size_t row0, std::size_t nrows) {
        const Tensor& x = value(a);
        if (x.rank() != 2)
            throw DimensionError("slice_rows: need rank-2 input, got " + shape_str(x.shape));
        const std::size_t R = x.shape[0], C = x.shape[1];
        if (nrows == 0 || row0 + nrows > R)
            throw DimensionError("slice_rows: rows [" + std::to_string(row0) + ", " +
                                 std::to_string(row0 + nrows) + ") out of range for " + shape_str(x.shape));
        Tensor out(Shape{nrows, C});
        std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(row0 * C),
                  x.data.begin() + static_cast<std::ptrdiff_t>((row0 + nrows) * C), out.data.begin());
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v, row0, C](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[row0 * C + i] += g[i];
        });
        return v;
    }

    // ----- dense layers --------------------------------------------------

    // x[..., in] . w[in, out] + b[out]; x may be rank 1 or 2.
    Var linear(Var xv, Var wv, Var bv) {
        const Tensor& x = value(xv);
        const Tensor& w = value(wv);
        const Tensor& b = value(bv);
        if (w.rank() != 2)
            throw DimensionError("linear: weight must be rank 2, got " + shape_str(w.shape));
        if (x.rank() < 1 || x.rank() > 2)
            throw DimensionError("linear: input must be rank 1 or 2, got " + shape_str(x.shape));
        const std::size_t in = w.shape[0], out_dim = w.shape[1];
        if (x.shape.back() != in)
            throw DimensionError("linear: input " + shape_str(x.shape) +
                                 " does not match weight " + shape_str(w.shape));
        if (b.rank() != 1 || b.shape[0] != out_dim)
            throw DimensionError("linear: bias " + shape_str(b.shape) +
                                 " does not match weight " + shape_str(w.shape));
        const std::size_t rows = x.numel() / in;
        Shape out_shape = x.shape;
        out_shape.back() = out_dim;
        Tensor out(out_shape);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = x.data.data() + r * in;
            double* yr = out.data.data() + r * out_dim;
            for (std::size_t j = 0; j < out_dim; ++j) yr[j] = b.data[j];
            for (std::size_t i = 0; i < in; ++i) {
                const double xi = xr[i];
                const double* wr = w.data.data() + i * out_dim;
                for (std::size_t j = 0; j < out_dim; ++j) yr[j] += xi * wr[j];
            }
        }
        Var v = push(std::move(out), needs_grad(xv) || needs_grad(wv) || needs_grad(bv), {});
        set_backward(v, [xv, wv, bv, v, rows, in, out_dim](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& x = t.value(xv).data;
            const auto& w = t.value(wv).data;
            auto& gx = t.grad_buf(xv);
            auto& gw = t.grad_buf(wv);
            auto& gb = t.grad_buf(bv);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * out_dim;
                const double* xr = x.data() + r * in;
                double* gxr = gx.data() + r * in;
                for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gr[j];
                for (std::size_t i = 0; i < in; ++i) {
                    const double* wr = w.data() + i * out_dim;
                    double* gwr = gw.data() + i * out_dim;
                    double acc = 0.0;
                    const double xi = xr[i];
                    for (std::size_t j = 0; j < out_dim; ++j) {
                        acc += gr[j] * wr[j];
                        gwr[j] += xi * gr[j];
                    }
                    gxr[i] += acc;
                }
            }
        });
        return v;
    }

    // ----- convolutions --------------------------------------------------

    // Same-padded 2-D cross-correlation: x[Cin,H,W], k[Cout,Cin,kh,kw] with
    // odd kh,kw, bias[Cout] -> y[Cout,H,W].
    Var conv2d_same(Var xv, Var kv, Var bv) {
        const Tensor& x = value(xv);
        const Tensor& k = value(kv);
        const Tensor& b = value(bv);
        if (x.rank() != 3)
            throw DimensionError("conv2d_same: input must be rank 3, got " + shape_str(x.shape));
        if (k.rank() != 4)
            throw DimensionError("conv2d_same: kernel must be rank 4, got " + shape_str(k.shape));
        const std::size_t Cin = x.shape[0], H = x.shape[1], W = x.shape[2];
        const std::size_t Cout = k.shape[0], kh = k.shape[2], kw = k.shape[3];
        if (k.shape[1] != Cin)
            throw DimensionError("conv2d_same: kernel " + shape_str(k.shape) +
                                 " does not match input " + shape_str(x.shape));
        if (kh % 2 == 0 || kw % 2 == 0)
            throw ConfigError("conv2d_same: kernel sides must be odd, got " + shape_str(k.shape));
        if (b.rank() != 1 || b.shape[0] != Cout)
            throw DimensionError("conv2d_same: bias " + shape_str(b.shape) +
                                 " does not match kernel " + shape_str(k.shape));
        const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
        const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
        Tensor out(Shape{Cout, H, W});
        for (std::size_t o = 0; o < Cout; ++o) {
            double* yc = out.data.data() + o * H * W;
            const double bo = b.data[o];
            for (std::size_t i = 0; i < H * W; ++i) yc[i] = bo;
            for (std::size_t c = 0; c < Cin; ++c) {
                const double* xc = x.data.data() + c * H * W;
                for (std::size_t p = 0; p < kh; ++p) {
                    const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(p) - ph;
                    for (std::size_t q = 0; q < kw; ++q) {
                        const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(q) - pw;
                        const double kval = k.at(o, c, p, q);
                        if (kval == 0.0) continue;
                        conv_accum(yc, xc, H, W, di, dj, kval);
                    }
                }
            }
        }
        Var v = push(std::move(out), needs_grad(xv) || needs_grad(kv) || needs_grad(bv), {});
        set_backward(v, [xv, kv, bv, v, Cin, H, W, Cout, kh, kw, ph, pw](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& x = t.value(xv).data;
            const auto& k = t.value(kv).data;
            auto& gx = t.grad_buf(xv);
            auto& gk = t.grad_buf(kv);
            auto& gb = t.grad_buf(bv);
            for (std::size_t o = 0; o < Cout; ++o) {
                const double* gc = g.data() + o * H * W;
                double acc = 0.0;
                for (std::size_t i = 0; i < H * W; ++i) acc += gc[i];
                gb[o] += acc;
                for (std::size_t c = 0; c < Cin; ++c) {
                    const double* xc = x.data() + c * H * W;
                    double* gxc = gx.data() + c * H * W;
                    for (std::size_t p = 0; p < kh; ++p) {
                        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(p) - ph;
                        for (std::size_t q = 0; q < kw; ++q) {
                            const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(q) - pw;
                            const std::size_t kidx = ((o * Cin + c) * kh + p) * kw + q;
                            const double kval = k[kidx];
                            // dL/dx scatter and dL/dk reduction share bounds.
                            const auto [i0, i1] = clip_range(H, di);
                            const auto [j0, j1] = clip_range(W, dj);
                            double kacc = 0.0;
                            for (std::size_t i = i0; i < i1; ++i) {
                                const double* grow = gc + i * W;
                                const std::size_t xi = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + di);
                                const double* xr = xc + xi * W;
                                double* gxr = gxc + xi * W;
                                for (std::size_t j = j0; j < j1; ++j) {
                                    const std::size_t xj = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) + dj);
                                    const double gv = grow[j];
                                    gxr[xj] += gv * kval;
                                    kacc += gv * xr[xj];
                                }
                            }
                            gk[kidx] += kacc;
                        }
                    }
                }
            }
        });
        return v;
    }

    // Valid-width strip convolution collapsing a trailing axis:
    // x[Din,H,S], k[Dout,Din,1,S], b[Dout] -> y[Dout,H].
    Var strip_conv(Var xv, Var kv, Var bv) {
        const Tensor& x = value(xv);
        const Tensor& k = value(kv);
        const Tensor& b = value(bv);
        if (x.rank() != 3)
            throw DimensionError("strip_conv: input must be rank 3, got " + shape_str(x.shape));
        if (k.rank() != 4 || k.shape[2] != 1)
            throw DimensionError("strip_conv: kernel must be [out,in,1,S], got " + shape_str(k.shape));
        const std::size_t Din = x.shape[0], H = x.shape[1], S = x.shape[2];
        const std::size_t Dout = k.shape[0];
        if (k.shape[1] != Din || k.shape[3] != S)
            throw DimensionError("strip_conv: kernel " + shape_str(k.shape) +
                                 " does not match input " + shape_str(x.shape));
        if (b.rank() != 1 || b.shape[0] != Dout)
            throw DimensionError("strip_conv: bias " + shape_str(b.shape) +
                                 " does not match kernel " + shape_str(k.shape));
        Tensor out(Shape{Dout, H});
        for (std::size_t o = 0; o < Dout; ++o) {
            double* yr = out.data.data() + o * H;
            for (std::size_t h = 0; h < H; ++h) yr[h] = b.data[o];
            for (std::size_t c = 0; c < Din; ++c) {
                const double* kr = k.data.data() + (o * Din + c) * S;
                const double* xc = x.data.data() + c * H * S;
                for (std::size_t h = 0; h < H; ++h) {
                    const double* xrow = xc + h * S;
                    double acc = 0.0;
                    for (std::size_t s = 0; s < S; ++s) acc += xrow[s] * kr[s];
                    yr[h] += acc;
                }
            }
        }
        Var v = push(std::move(out), needs_grad(xv) || needs_grad(kv) || needs_grad(bv), {});
        set_backward(v, [xv, kv, bv, v, Din, H, S, Dout](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& x = t.value(xv).data;
            const auto& k = t.value(kv).data;
            auto& gx = t.grad_buf(xv);
            auto& gk = t.grad_buf(kv);
            auto& gb = t.grad_buf(bv);
            for (std::size_t o = 0; o < Dout; ++o) {
                const double* gr = g.data() + o * H;
                for (std::size_t h = 0; h < H; ++h) gb[o] += gr[h];
                for (std::size_t c = 0; c < Din; ++c) {
                    const double* kr = k.data() + (o * Din + c) * S;
                    double* gkr = gk.data() + (o * Din + c) * S;
                    const double* xc = x.data() + c * H * S;
                    double* gxc = gx.data() + c * H * S;
                    for (std::size_t h = 0; h < H; ++h) {
                        const double gv = gr[h];
                        if (gv == 0.0) continue;
                        const double* xrow = xc + h * S;
                        double* gxrow = gxc + h * S;
                        for (std::size_t s = 0; s < S; ++s) {
                            gxrow[s] += gv * kr[s];
                            gkr[s] += gv * xrow[s];
                        }
                    }
                }
            }
        });
        return v;
    }

    // ----- nonlinearities and regularization -----------------------------

    // Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
    Var gelu(Var a) {
        const Tensor& x = value(a);
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double xi = x.data[i];
            out.data[i] = 0.5 * xi * (1.0 + std::erf(xi * 0.7071067811865475244));
        }
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& x = t.value(a).data;
            auto& ga = t.grad_buf(a);
            constexpr double inv_sqrt2 = 0.7071067811865475244;
            constexpr double inv_sqrt2pi = 0.3989422804014326779;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double xi = x[i];
                const double cdf = 0.5 * (1.0 + std::erf(xi * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
                ga[i] += g[i] * (cdf + xi * pdf);
            }
        });
        return v;
    }

    // Inverted dropout: kept entries scaled by 1/(1-p). Identity when not
    // training or p == 0 (returns the input var unchanged).
    Var dropout(Var a, double p, RngState& rng, bool training) {
        if (!(p >= 0.0 && p < 1.0))
            throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
        if (!training || p == 0.0) return a;
        const Tensor& x = value(a);
        const double keep_scale = 1.0 / (1.0 - p);
        std::vector<double> mask(x.numel());
        for (double& m : mask) m = (rng.next_uniform() >= p) ? keep_scale : 0.0;
        Tensor out(x.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.data[i] * mask[i];
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v, mask = std::move(mask)](Tape& t) {
            const auto& g = t.grad_buf(v);
            auto& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
        });
        return v;
    }

    // Numerically safe softmax over a rank-1 var.
    Var softmax(Var a) {
        const Tensor& x = value(a);
        if (x.rank() != 1 || x.numel() == 0)
            throw DimensionError("softmax: need a non-empty rank-1 input, got " + shape_str(x.shape));
        const double mx = *std::max_element(x.data.begin(), x.data.end());
        Tensor out(x.shape);
        double denom = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            out.data[i] = std::exp(x.data[i] - mx);
            denom += out.data[i];
        }
        for (double& o : out.data) o /= denom;
        Var v = push(std::move(out), needs_grad(a), {});
        set_backward(v, [a, v](Tape& t) {
            const auto& g = t.grad_buf(v);
            const auto& s = t.value(v).data;
            auto& ga = t.grad_buf(a);
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * s[i];
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s[i] * (g[i] - dot);
        });
        return v;
    }

    // ----- reductions -----------------------------------------------------

    Var sum(Var a) {
        const Tensor& x = value(a);
        double acc = 0.0;
        for (double xi : x.data) acc += xi;
        Var v = push(Tensor(Shape{1}, {acc}), needs_grad(a), {});
        set_backward(v, [a, v](Tape& t) {
            const double g = t.grad_buf(v)[0];
            auto& ga = t.grad_buf(a);
            for (double& gi : ga) gi += g;
        });
        return v;
    }

    Var mean_all(Var a) { return scale(sum(a), 1.0 / static_cast<double>(value(a).numel())); }

    // Mean squared error against a constant target.
    Var mse_against(Var a, const Tensor& target) {
        const Tensor& x = value(a);
        require_same(x, target, "mse_against");
        const double inv_n = 1.0 / static_cast<double>(x.numel());
        double acc = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double d = x.data[i] - target.data[i];
            acc += d * d;
        }
        Var v = push(Tensor(Shape{1}, {acc * inv_n}), needs_grad(a), {});
        set_backward(v, [a, v, target, inv_n](Tape& t) {
            const double g = t.grad_buf(v)[0];
            const auto& x = t.value(a).data;
            auto& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga[i] += g * 2.0 * inv_n * (x[i] - target.data[i]);
        });
        return v;
    }

    // ----- backward -------------------------------------------------------

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. A tape
    // is consumed by this call; a second backward throws.
    void backward(Var loss) {
        if (consumed_)
            throw ContractViolation("Tape::backward: tape already consumed");
        const Tensor& l = value(loss);
        if (l.numel() != 1)
            throw ContractViolation("Tape::backward: loss must be scalar, got " + shape_str(l.shape));
        consumed_ = true;
        grad_buf(loss)[0] = 1.0;
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.backward && n.needs && !n.grad.empty()) n.backward(*this);
        }
    }

    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor val;
        std::vector<double> grad;
        std::function<void(Tape&)> backward;
        bool needs = false;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    const Node& node(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractViolation("Tape: invalid var id " + std::to_string(v.id));
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    Node& node_mut(Var v) { return const_cast<Node&>(node(v)); }

    Var push(Tensor val, bool needs, std::function<void(Tape&)> bw) {
        Node n;
        n.val = std::move(val);
        n.backward = std::move(bw);
        n.needs = needs;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    static void require_same(const Tensor& a, const Tensor& b, const char* who) {
        if (!a.same_shape(b))
            throw DimensionError(std::string(who) + ": shape mismatch " + shape_str(a.shape) +
                                 " vs " + shape_str(b.shape));
    }

    // Overlap [lo, hi) of positions i in [0, n) whose shifted partner i + d
    // also lies in [0, n). Empty when |d| >= n, which happens whenever a
    // kernel is wider than the (possibly single-column) map it slides over.
    static std::pair<std::size_t, std::size_t> clip_range(std::size_t n, std::ptrdiff_t d) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -d);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n),
                                                           static_cast<std::ptrdiff_t>(n) - d);
        if (hi <= lo) return {0, 0};
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }

    static void conv_accum(double* y, const double* x, std::size_t H, std::size_t W,
                           std::ptrdiff_t di, std::ptrdiff_t dj, double kval) {
        const auto [i0, i1] = clip_range(H, di);
        const auto [j0, j1] = clip_range(W, dj);
        for (std::size_t i = i0; i < i1; ++i) {
            double* yr = y + i * W;
            const double* xr = x + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + di) * W + dj;
            for (std::size_t j = j0; j < j1; ++j) yr[j] += kval * xr[j];
        }
    }
};

} // namespace wftnet
