#pragma once

#include <cstddef>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nopt {

/// Dense row-major array. Complex tensors store interleaved (re, im) pairs,
/// so data.size() == numel()*2 when complex.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    bool is_complex = false;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, bool cplx = false)
        : shape(std::move(s)), is_complex(cplx),
          data(count(shape) * (cplx ? 2 : 1), T(0)) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t(1),
                               std::multiplies<>());
    }
    static Tensor zeros(std::vector<std::size_t> s, bool cplx = false) {
        return Tensor(std::move(s), cplx);
    }
    static Tensor full(std::vector<std::size_t> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(T v) {
        Tensor t(std::vector<std::size_t>{});
        t.data.assign(1, v);
        return t;
    }

    std::size_t numel() const { return count(shape); }
    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return shape.empty() && !is_complex; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const {
        return shape == o.shape && is_complex == o.is_complex;
    }

    void check_finite(const char* where) const {
        // vectorizable surrogate: v * 0 is NaN exactly when v is NaN or
        // +/-inf, and NaN propagates through the sum
        T s = T(0);
        for (T v : data) s += v * T(0);
        if (std::isnan(s))
            throw std::runtime_error(std::string("non-finite value in ") +
                                     where);
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.is_complex = is_complex;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string r = "(";
    for (std::size_t i = 0; i < s.size(); ++i)
        r += (i ? "," : "") + std::to_string(s[i]);
    return r + ")";
}

}  // namespace nopt
