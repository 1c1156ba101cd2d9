#pragma once

// Dense row-major tensor over 64-bit floats, plus the counter-based RNG
// used for every stochastic choice in the library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace wftnet {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline void check_shape_valid(const Shape& s, const char* who) {
    if (s.empty())
        throw DimensionError(std::string(who) + ": shape must have at least one dimension");
    for (std::size_t d : s)
        if (d == 0)
            throw DimensionError(std::string(who) + ": zero-sized dimension in " + shape_str(s));
}

struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty until ensure_grad() or a training step fills it

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)) {
        check_shape_valid(shape, "Tensor");
        data.assign(shape_numel(shape), 0.0);
    }

    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        check_shape_valid(shape, "Tensor");
        if (data.size() != shape_numel(shape))
            throw DimensionError("Tensor: " + std::to_string(data.size()) +
                                 " values for shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, double v) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = v;
        return t;
    }

    static Tensor of(Shape s, std::initializer_list<double> values) {
        return Tensor(std::move(s), std::vector<double>(values));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Row-major accessors for the ranks the model actually uses.
    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() { grad.assign(data.size(), 0.0); }
};

// ---------------------------------------------------------------------------
// RngState: splitmix64 over (seed, counter). Streams depend only on the two
// integers, never on global state, so every run replays bit for bit.
// ---------------------------------------------------------------------------

struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    std::uint64_t next_u64() {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (++counter);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n) by rejection.
    std::size_t next_below(std::size_t n) {
        if (n == 0) throw ConfigError("RngState::next_below: n must be positive");
        const std::uint64_t span = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return static_cast<std::size_t>(v % span);
    }

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double next_normal() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }
};

// Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
inline Tensor init_params(const Shape& shape, std::size_t fan_in, RngState& rng) {
    if (fan_in < 1) throw ConfigError("init_params: fan_in must be >= 1");
    Tensor t(shape);
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& x : t.data) x = (2.0 * rng.next_uniform() - 1.0) * bound;
    return t;
}

} // namespace wftnet
