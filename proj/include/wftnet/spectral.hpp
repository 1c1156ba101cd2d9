#pragma once

// Frequency-domain analysis: DFT/FFT, amplitude spectra, dominant-period
// extraction, the periodicity weighting coefficient, and the Morlet
// continuous wavelet transform (direct form plus an FFT fast path).
//
// Conventions: C_t = sum_n x_n exp(-j 2 pi t n / T) for 0 <= t < T, and
// CWT(s, tau) = sum_t x_t (1/sqrt(s)) conj(Psi((t - tau) / s)) with
// Psi(t) = pi^(-1/4) exp(j w0 t) exp(-t^2 / 2), support cut at |arg| > 4.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace wftnet {

using ComplexPair = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

struct ComplexSpectrum {
    std::vector<ComplexPair> coeffs;
    std::size_t size() const { return coeffs.size(); }
};

struct AmplitudeSpectrum {
    std::vector<double> amps; // length T, channel-mean |C_i|
    std::size_t size() const { return amps.size(); }
};

// ---------------------------------------------------------------------------
// DFT / FFT
// ---------------------------------------------------------------------------

// Naive transform, kept as the reference the FFT is checked against.
// Angles use (t*n) mod T so the sin/cos arguments stay small and exact.
inline ComplexSpectrum dft(const std::vector<double>& x) {
    const std::size_t T = x.size();
    if (T == 0) throw DimensionError("dft: empty input");
    ComplexSpectrum out;
    out.coeffs.resize(T);
    const double base = -2.0 * kPi / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
        double re = 0.0, im = 0.0;
        for (std::size_t n = 0; n < T; ++n) {
            const double ang = base * static_cast<double>((t * n) % T);
            re += x[n] * std::cos(ang);
            im += x[n] * std::sin(ang);
        }
        out.coeffs[t] = {re, im};
    }
    return out;
}

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 transform; length must be a power of two.
inline void fft_pow2_inplace(std::vector<ComplexPair>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(n)) throw DimensionError("fft_pow2_inplace: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    if (n < 2) return;
    const double sgn = inverse ? 2.0 * kPi : -2.0 * kPi;
    std::vector<ComplexPair> tw(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k)
        tw[k] = std::polar(1.0, sgn * static_cast<double>(k) / static_cast<double>(n));
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const ComplexPair u = a[i + k];
                const ComplexPair v = a[i + k + half] * tw[k * step];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (ComplexPair& z : a) z *= inv_n;
    }
}

// Power-of-two lengths run the radix-2 kernel; anything else falls back to
// the naive transform (desk-scale inputs make that acceptable).
inline ComplexSpectrum fft(const std::vector<double>& x) {
    const std::size_t T = x.size();
    if (T == 0) throw DimensionError("fft: empty input");
    if (!is_pow2(T)) return dft(x);
    std::vector<ComplexPair> a(T);
    for (std::size_t i = 0; i < T; ++i) a[i] = {x[i], 0.0};
    fft_pow2_inplace(a, false);
    ComplexSpectrum out;
    out.coeffs = std::move(a);
    return out;
}

// ---------------------------------------------------------------------------
// Amplitude spectrum and period selection
// ---------------------------------------------------------------------------

// Channel-mean amplitudes of a [T, C] window.
inline AmplitudeSpectrum amplitude_spectrum(const Tensor& x) {
    if (x.rank() != 2)
        throw DimensionError("amplitude_spectrum: need rank-2 input, got " + shape_str(x.shape));
    const std::size_t T = x.shape[0], C = x.shape[1];
    if (T < 2) throw DimensionError("amplitude_spectrum: need at least 2 rows");
    AmplitudeSpectrum out;
    out.amps.assign(T, 0.0);
    std::vector<double> col(T);
    const double inv_c = 1.0 / static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < T; ++t) col[t] = x.data[t * C + c];
        const ComplexSpectrum sp = fft(col);
        for (std::size_t i = 0; i < T; ++i) out.amps[i] += std::abs(sp.coeffs[i]) * inv_c;
    }
    return out;
}

struct PeriodEntry {
    std::size_t freq_index = 0; // DFT bin, never 0 (DC is excluded)
    std::size_t period = 0;     // ceil(T_e / freq_index)
    double amplitude = 0.0;
};

struct PeriodSet {
    std::vector<PeriodEntry> entries; // descending amplitude, distinct periods
    bool warning = false;             // fewer than k periods found, or flat/zero spectrum
};

// Top-k dominant periods from bins 1..floor(T_e/2). Ties break toward the
// lower bin; bins whose period collides with an already-chosen one are
// skipped so the selection extends to the next distinct period.
inline PeriodSet topk_periods(const AmplitudeSpectrum& spectrum, std::size_t k, std::size_t T_e) {
    if (T_e < 2) throw ConfigError("topk_periods: need T_e >= 2");
    if (spectrum.amps.size() != T_e)
        throw DimensionError("topk_periods: spectrum length " + std::to_string(spectrum.amps.size()) +
                             " does not match T_e " + std::to_string(T_e));
    const std::size_t half = T_e / 2;
    if (k < 1 || k > half)
        throw ConfigError("topk_periods: k must lie in [1, " + std::to_string(half) + "], got " +
                          std::to_string(k));
    std::vector<std::size_t> order(half);
    std::iota(order.begin(), order.end(), static_cast<std::size_t>(1));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (spectrum.amps[a] != spectrum.amps[b]) return spectrum.amps[a] > spectrum.amps[b];
        return a < b;
    });
    PeriodSet out;
    for (std::size_t idx : order) {
        const std::size_t period = (T_e + idx - 1) / idx;
        bool taken = false;
        for (const PeriodEntry& e : out.entries)
            if (e.period == period) { taken = true; break; }
        if (taken) continue;
        out.entries.push_back({idx, period, spectrum.amps[idx]});
        if (out.entries.size() == k) break;
    }
    out.warning = out.entries.size() < k ||
                  (!out.entries.empty() && out.entries.front().amplitude <= 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Periodicity weighting coefficient
// ---------------------------------------------------------------------------

// alpha = mean over channels of max(a_i^2) / sum(a_i^2) for bins i = 1..m.
// A channel with energy below 1e-12 in those bins contributes 1/m.
inline double pwc(const Tensor& x, std::size_t m) {
    if (x.rank() != 2)
        throw DimensionError("pwc: need rank-2 input, got " + shape_str(x.shape));
    const std::size_t T = x.shape[0], C = x.shape[1];
    if (m < 2 || m > T / 2)
        throw ConfigError("pwc: m must lie in [2, " + std::to_string(T / 2) + "], got " +
                          std::to_string(m));
    std::vector<double> col(T);
    double alpha = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < T; ++t) col[t] = x.data[t * C + c];
        const ComplexSpectrum sp = fft(col);
        double max_e = 0.0, sum_e = 0.0;
        for (std::size_t i = 1; i <= m; ++i) {
            const double a = std::abs(sp.coeffs[i]);
            const double e = a * a;
            sum_e += e;
            if (e > max_e) max_e = e;
        }
        alpha += (sum_e < 1e-12) ? 1.0 / static_cast<double>(m) : max_e / sum_e;
    }
    return alpha / static_cast<double>(C);
}

// ---------------------------------------------------------------------------
// Morlet wavelet and CWT
// ---------------------------------------------------------------------------

inline ComplexPair morlet(double t, double omega0 = 6.0) {
    const double envelope = 0.7511255444649425 * std::exp(-0.5 * t * t); // pi^(-1/4)
    return {envelope * std::cos(omega0 * t), envelope * std::sin(omega0 * t)};
}

struct ScaleSet {
    std::vector<double> scales; // strictly ascending, positive
    double omega0 = 6.0;

    std::size_t size() const { return scales.size(); }

    void validate() const {
        if (scales.empty()) throw ConfigError("ScaleSet: no scales");
        if (!(omega0 > 0.0)) throw ConfigError("ScaleSet: omega0 must be positive");
        double prev = 0.0;
        for (double s : scales) {
            if (!(s > prev))
                throw ConfigError("ScaleSet: scales must be strictly ascending and positive");
            prev = s;
        }
    }
};

// Dyadic ladder s_j = 2 * 2^(j/2), largest scale kept <= T/2.
inline ScaleSet default_scales(std::size_t T, double omega0 = 6.0) {
    if (T < 8) throw ConfigError("default_scales: need T >= 8, got " + std::to_string(T));
    const std::size_t S =
        static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(T) / 4.0) / 0.5)) + 1;
    ScaleSet out;
    out.omega0 = omega0;
    out.scales.reserve(S);
    for (std::size_t j = 0; j < S; ++j)
        out.scales.push_back(2.0 * std::pow(2.0, 0.5 * static_cast<double>(j)));
    out.validate();
    return out;
}

// Sampled correlation taps (1/sqrt(s)) conj(Psi(u/s)) for u in [-R, R],
// R = floor(4 s). Shared by the direct CWT, the FFT path, and the
// differentiable modulus op so all three agree to the last few ulps.
struct MorletKernel {
    std::ptrdiff_t radius = 0;
    std::vector<ComplexPair> taps; // taps[u + radius]
};

inline MorletKernel morlet_kernel(double scale, double omega0) {
    if (!(scale > 0.0)) throw ConfigError("morlet_kernel: scale must be positive");
    MorletKernel k;
    k.radius = static_cast<std::ptrdiff_t>(std::floor(4.0 * scale));
    k.taps.resize(static_cast<std::size_t>(2 * k.radius + 1));
    const double inv_sqrt_s = 1.0 / std::sqrt(scale);
    for (std::ptrdiff_t u = -k.radius; u <= k.radius; ++u) {
        const ComplexPair psi = morlet(static_cast<double>(u) / scale, omega0);
        k.taps[static_cast<std::size_t>(u + k.radius)] = inv_sqrt_s * std::conj(psi);
    }
    return k;
}

struct Scalogram {
    std::size_t num_shifts = 0; // tau axis (signal length)
    std::size_t num_scales = 0;
    std::vector<ComplexPair> values; // row-major [num_shifts, num_scales]

    ComplexPair& at(std::size_t tau, std::size_t j) { return values[tau * num_scales + j]; }
    ComplexPair at(std::size_t tau, std::size_t j) const { return values[tau * num_scales + j]; }
};

// Direct-summation CWT. This is the defining implementation.
inline Scalogram cwt(const std::vector<double>& x, const ScaleSet& scales) {
    scales.validate();
    const std::size_t T = x.size();
    if (T == 0) throw DimensionError("cwt: empty input");
    Scalogram out;
    out.num_shifts = T;
    out.num_scales = scales.size();
    out.values.assign(T * scales.size(), {0.0, 0.0});
    for (std::size_t j = 0; j < scales.size(); ++j) {
        const MorletKernel k = morlet_kernel(scales.scales[j], scales.omega0);
        for (std::size_t tau = 0; tau < T; ++tau) {
            const std::ptrdiff_t u0 = std::max<std::ptrdiff_t>(-k.radius, -static_cast<std::ptrdiff_t>(tau));
            const std::ptrdiff_t u1 = std::min<std::ptrdiff_t>(k.radius,
                static_cast<std::ptrdiff_t>(T - 1) - static_cast<std::ptrdiff_t>(tau));
            double re = 0.0, im = 0.0;
            for (std::ptrdiff_t u = u0; u <= u1; ++u) {
                const double xv = x[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(tau) + u)];
                const ComplexPair tap = k.taps[static_cast<std::size_t>(u + k.radius)];
                re += xv * tap.real();
                im += xv * tap.imag();
            }
            out.at(tau, j) = {re, im};
        }
    }
    return out;
}

// FFT-convolution fast path; matches cwt() within 1e-9 absolute.
inline Scalogram cwt_fft(const std::vector<double>& x, const ScaleSet& scales) {
    scales.validate();
    const std::size_t T = x.size();
    if (T == 0) throw DimensionError("cwt_fft: empty input");
    Scalogram out;
    out.num_shifts = T;
    out.num_scales = scales.size();
    out.values.assign(T * scales.size(), {0.0, 0.0});
    std::map<std::size_t, std::vector<ComplexPair>> fx_cache; // padded-length -> FFT(x)
    for (std::size_t j = 0; j < scales.size(); ++j) {
        const MorletKernel k = morlet_kernel(scales.scales[j], scales.omega0);
        const std::size_t R = static_cast<std::size_t>(k.radius);
        const std::size_t P = next_pow2(T + 2 * R);
        auto it = fx_cache.find(P);
        if (it == fx_cache.end()) {
            std::vector<ComplexPair> fx(P, ComplexPair{0.0, 0.0});
            for (std::size_t t = 0; t < T; ++t) fx[t] = {x[t], 0.0};
            fft_pow2_inplace(fx, false);
            it = fx_cache.emplace(P, std::move(fx)).first;
        }
        // Correlation as convolution with the index-reversed kernel.
        std::vector<ComplexPair> h(P, ComplexPair{0.0, 0.0});
        for (std::ptrdiff_t n = -k.radius; n <= k.radius; ++n) {
            const std::size_t slot = static_cast<std::size_t>((n + static_cast<std::ptrdiff_t>(P)) %
                                                              static_cast<std::ptrdiff_t>(P));
            h[slot] = k.taps[static_cast<std::size_t>(-n + k.radius)];
        }
        fft_pow2_inplace(h, false);
        const std::vector<ComplexPair>& fx = it->second;
        for (std::size_t i = 0; i < P; ++i) h[i] *= fx[i];
        fft_pow2_inplace(h, true);
        for (std::size_t tau = 0; tau < T; ++tau) out.at(tau, j) = h[tau];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable composites
// ---------------------------------------------------------------------------

// Scalogram modulus of each channel of a [T, D] var, stacked to [D, T, S].
// Backward is the exact adjoint of the truncated correlation with
// d|z|/dx = Re(conj(z)/|z| * tap); entries with |z| = 0 get subgradient 0.
inline Var cwt_modulus(Tape& tape, Var xv, const ScaleSet& scales) {
    scales.validate();
    const Tensor& x = tape.value(xv);
    if (x.rank() != 2)
        throw DimensionError("cwt_modulus: need rank-2 input, got " + shape_str(x.shape));
    const std::size_t T = x.shape[0], D = x.shape[1], S = scales.size();
    std::vector<MorletKernel> kernels(S);
    for (std::size_t j = 0; j < S; ++j) kernels[j] = morlet_kernel(scales.scales[j], scales.omega0);
    Tensor out(Shape{D, T, S});
    auto zs = std::make_shared<std::vector<ComplexPair>>(D * T * S);
    for (std::size_t j = 0; j < S; ++j) {
        const MorletKernel& k = kernels[j];
        for (std::size_t d = 0; d < D; ++d) {
            for (std::size_t tau = 0; tau < T; ++tau) {
                const std::ptrdiff_t u0 = std::max<std::ptrdiff_t>(-k.radius, -static_cast<std::ptrdiff_t>(tau));
                const std::ptrdiff_t u1 = std::min<std::ptrdiff_t>(k.radius,
                    static_cast<std::ptrdiff_t>(T - 1) - static_cast<std::ptrdiff_t>(tau));
                double re = 0.0, im = 0.0;
                for (std::ptrdiff_t u = u0; u <= u1; ++u) {
                    const double xval = x.data[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(tau) + u) * D + d];
                    const ComplexPair tap = k.taps[static_cast<std::size_t>(u + k.radius)];
                    re += xval * tap.real();
                    im += xval * tap.imag();
                }
                (*zs)[(d * T + tau) * S + j] = {re, im};
                out.data[(d * T + tau) * S + j] = std::hypot(re, im);
            }
        }
    }
    Var v = tape.custom_node(std::move(out), tape.needs_grad(xv));
    tape.set_backward(v, [xv, v, T, D, S, kernels = std::move(kernels), zs](Tape& t) {
        const auto& g = t.grad_buf(v);
        auto& gx = t.grad_buf(xv);
        for (std::size_t j = 0; j < S; ++j) {
            const MorletKernel& k = kernels[j];
            for (std::size_t d = 0; d < D; ++d) {
                for (std::size_t tau = 0; tau < T; ++tau) {
                    const double gv = g[(d * T + tau) * S + j];
                    if (gv == 0.0) continue;
                    const ComplexPair z = (*zs)[(d * T + tau) * S + j];
                    const double mag = std::hypot(z.real(), z.imag());
                    if (mag == 0.0) continue;
                    const double w = gv / mag;
                    const std::ptrdiff_t u0 = std::max<std::ptrdiff_t>(-k.radius, -static_cast<std::ptrdiff_t>(tau));
                    const std::ptrdiff_t u1 = std::min<std::ptrdiff_t>(k.radius,
                        static_cast<std::ptrdiff_t>(T - 1) - static_cast<std::ptrdiff_t>(tau));
                    for (std::ptrdiff_t u = u0; u <= u1; ++u) {
                        const ComplexPair tap = k.taps[static_cast<std::size_t>(u + k.radius)];
                        const double contrib = z.real() * tap.real() + z.imag() * tap.imag();
                        gx[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(tau) + u) * D + d] += w * contrib;
                    }
                }
            }
        }
    });
    return v;
}

// Channel-mean DFT amplitudes of a [T, D] var at fixed bins, as a rank-1
// var of length k. The bin choice itself is not differentiated; gradients
// flow through the coefficient magnitudes via d|C|/dx_t = Re(conj(C) e_t)/|C|.
inline Var selected_amplitudes(Tape& tape, Var xv, const std::vector<std::size_t>& indices) {
    const Tensor& x = tape.value(xv);
    if (x.rank() != 2)
        throw DimensionError("selected_amplitudes: need rank-2 input, got " + shape_str(x.shape));
    if (indices.empty()) throw ConfigError("selected_amplitudes: no indices");
    const std::size_t T = x.shape[0], D = x.shape[1];
    for (std::size_t idx : indices)
        if (idx >= T)
            throw ConfigError("selected_amplitudes: bin " + std::to_string(idx) +
                              " out of range for T = " + std::to_string(T));
    const std::size_t K = indices.size();
    auto coeffs = std::make_shared<std::vector<ComplexPair>>(K * D);
    Tensor out(Shape{K});
    const double base = -2.0 * kPi / static_cast<double>(T);
    const double inv_d = 1.0 / static_cast<double>(D);
    for (std::size_t i = 0; i < K; ++i) {
        const std::size_t idx = indices[i];
        double amp_sum = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            double re = 0.0, im = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double ang = base * static_cast<double>((idx * t) % T);
                const double xval = x.data[t * D + d];
                re += xval * std::cos(ang);
                im += xval * std::sin(ang);
            }
            (*coeffs)[i * D + d] = {re, im};
            amp_sum += std::hypot(re, im);
        }
        out.data[i] = amp_sum * inv_d;
    }
    Var v = tape.custom_node(std::move(out), tape.needs_grad(xv));
    tape.set_backward(v, [xv, v, T, D, indices, coeffs, base, inv_d](Tape& t) {
        const auto& g = t.grad_buf(v);
        auto& gx = t.grad_buf(xv);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (g[i] == 0.0) continue;
            const std::size_t idx = indices[i];
            for (std::size_t d = 0; d < D; ++d) {
                const ComplexPair c = (*coeffs)[i * D + d];
                const double mag = std::hypot(c.real(), c.imag());
                if (mag == 0.0) continue;
                const double f = g[i] * inv_d / mag;
                for (std::size_t t = 0; t < T; ++t) {
                    const double ang = base * static_cast<double>((idx * t) % T);
                    gx[t * D + d] += f * (c.real() * std::cos(ang) + c.imag() * std::sin(ang));
                }
            }
        }
    });
    return v;
}

} // namespace wftnet
