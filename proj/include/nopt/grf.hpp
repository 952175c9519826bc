#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "nopt/fft.hpp"
#include "nopt/field.hpp"
#include "nopt/rng.hpp"

namespace nopt {

/// Gaussian random field spectrum: amplitude proportional to
/// sigma0 * (4 pi^2 |k|^2 + tau^2)^(-alpha/2), zero mode excluded.
struct GrfSpec {
    double alpha = 2.5;
    double tau = 7.0;
    double sigma0 = 0.0;  // <= 0: auto-scale so the field std is ~1

    void validate() const {
        if (alpha <= 1.0 || tau <= 0.0)
            throw std::invalid_argument("GrfSpec: need alpha > 1, tau > 0");
    }
};

namespace detail {

inline std::vector<double> grf_amplitudes(const GrfSpec& spec, std::size_t h,
                                          std::size_t w) {
    std::vector<double> amp(h * w, 0.0);
    constexpr double four_pi2 = 39.478417604357434475337963999505;
    double sum = 0.0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (x == 0 && y == 0) continue;
            double ky = double(freq_index(y, h));
            double kx = double(freq_index(x, w));
            double a = std::pow(four_pi2 * (kx * kx + ky * ky) +
                                    spec.tau * spec.tau,
                                -spec.alpha / 2.0);
            amp[y * w + x] = a;
            sum += a * a;
        }
    // field variance is (1/N) * sum of squared amplitudes
    double s0 = spec.sigma0 > 0.0
                    ? spec.sigma0
                    : std::sqrt(double(h * w) / sum);
    for (auto& a : amp) a *= s0;
    return amp;
}

}  // namespace detail

/// Analytic field variance implied by the spectrum (oracle for tests).
inline double grf_variance(const GrfSpec& spec, std::size_t h, std::size_t w) {
    auto amp = detail::grf_amplitudes(spec, h, w);
    double s = 0.0;
    for (double a : amp) s += a * a;
    return s / double(h * w);
}

/// Draws a real zero-mean field by spectrally filtering white noise:
/// x = Re IFFT(A . FFT(g)) with iid unit normals g. Each retained mode then
/// carries exactly the prescribed variance and Hermitian symmetry is exact.
inline std::vector<double> sample_grf_f64(const GrfSpec& spec, Grid2D grid,
                                          std::uint64_t seed) {
    spec.validate();
    grid.validate();
    const std::size_t h = grid.H, w = grid.W;
    auto amp = detail::grf_amplitudes(spec, h, w);
    Rng rng(seed);
    std::vector<std::complex<double>> buf(h * w);
    for (auto& v : buf) v = std::complex<double>(rng.gaussian(), 0.0);
    fft2(buf.data(), h, w, false);
    for (std::size_t i = 0; i < h * w; ++i) buf[i] *= amp[i];
    fft2(buf.data(), h, w, true);
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = buf[i].real();
    return out;
}

inline Field sample_grf(const GrfSpec& spec, Grid2D grid, std::uint64_t seed) {
    auto v = sample_grf_f64(spec, grid, seed);
    Field f(1, grid);
    for (std::size_t i = 0; i < v.size(); ++i) f.values[i] = float(v[i]);
    return f;
}

}  // namespace nopt
