#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

namespace nopt {

// Discrete Fourier transforms, unnormalized forward / (1/N) inverse.
// Radix-2 iterative for power-of-two lengths, direct O(n^2) otherwise
// (grids in this project are small and even).

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

template <typename T>
const std::vector<std::complex<T>>& twiddles(std::size_t n, bool inverse) {
    thread_local std::vector<std::pair<std::pair<std::size_t, bool>,
                                       std::vector<std::complex<T>>>> cache;
    for (auto& e : cache)
        if (e.first.first == n && e.first.second == inverse) return e.second;
    std::vector<std::complex<T>> w(n / 2);
    const double sgn = inverse ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n / 2; ++i) {
        double a = sgn * 2.0 * 3.14159265358979323846 * double(i) / double(n);
        w[i] = std::complex<T>(T(std::cos(a)), T(std::sin(a)));
    }
    cache.push_back({{n, inverse}, std::move(w)});
    return cache.back().second;
}

template <typename T>
void fft_pow2(std::complex<T>* a, std::size_t n, bool inverse) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {  // bit reversal
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& w = twiddles<T>(n, inverse);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len)
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<T> u = a[i + k];
                std::complex<T> v = a[i + k + len / 2] * w[k * step];
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
    }
}

template <typename T>
void dft_naive(std::complex<T>* a, std::size_t n, bool inverse) {
    std::vector<std::complex<T>> w(n);
    const double sgn = inverse ? 1.0 : -1.0;
    for (std::size_t j = 0; j < n; ++j) {
        double ang = sgn * 2.0 * 3.14159265358979323846 * double(j) / double(n);
        w[j] = std::complex<T>(T(std::cos(ang)), T(std::sin(ang)));
    }
    std::vector<std::complex<T>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<T> s(0, 0);
        for (std::size_t j = 0; j < n; ++j) s += a[j] * w[(j * k) % n];
        out[k] = s;
    }
    for (std::size_t k = 0; k < n; ++k) a[k] = out[k];
}

}  // namespace detail

/// In-place 1D transform of contiguous data.
template <typename T>
void fft(std::complex<T>* a, std::size_t n, bool inverse) {
    if (n == 0) throw std::invalid_argument("fft: empty");
    if (detail::is_pow2(n))
        detail::fft_pow2(a, n, inverse);
    else
        detail::dft_naive(a, n, inverse);
    if (inverse) {
        T s = T(1) / T(n);
        for (std::size_t i = 0; i < n; ++i) a[i] *= s;
    }
}

/// In-place 2D transform of a row-major H x W grid.
template <typename T>
void fft2(std::complex<T>* a, std::size_t h, std::size_t w, bool inverse) {
    for (std::size_t y = 0; y < h; ++y) fft(a + y * w, w, inverse);
    std::vector<std::complex<T>> col(h);
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) col[y] = a[y * w + x];
        fft(col.data(), h, inverse);
        for (std::size_t y = 0; y < h; ++y) a[y * w + x] = col[y];
    }
}

/// Signed integer frequency for index i of an axis of length n.
inline long freq_index(std::size_t i, std::size_t n) {
    return i <= n / 2 ? long(i) : long(i) - long(n);
}

}  // namespace nopt
