#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "nopt/fft.hpp"
#include "nopt/field.hpp"

namespace nopt {

/// Symmetric positive-definite 2x2 diffusion tensor (constant per sample).
struct PoissonParams {
    double k11 = 1.0, k22 = 1.0, k12 = 0.0;
    long eig1 = 1, eig2 = 1;  // integer eigenvalues the tensor was built from

    void validate() const {
        if (k11 <= 0.0 || k11 * k22 - k12 * k12 <= 0.0)
            throw std::invalid_argument("PoissonParams: K not SPD");
    }

    static PoissonParams from_eigs(long e1, long e2, double theta) {
        PoissonParams p;
        p.eig1 = e1;
        p.eig2 = e2;
        const double c = std::cos(theta), s = std::sin(theta);
        p.k11 = c * c * double(e1) + s * s * double(e2);
        p.k22 = s * s * double(e1) + c * c * double(e2);
        p.k12 = c * s * (double(e1) - double(e2));
        return p;
    }
};

struct HelmholtzParams {
    long omega = 1;
    void validate() const {
        if (omega < 1) throw std::invalid_argument("HelmholtzParams: omega >= 1");
    }
};

namespace detail {

constexpr double four_pi2 = 39.478417604357434475337963999505;

template <typename SymbolFn>
std::vector<double> spectral_divide(const std::vector<double>& f,
                                    std::size_t h, std::size_t w,
                                    SymbolFn symbol, bool zero_mode_zero) {
    std::vector<std::complex<double>> buf(h * w);
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = f[i];
    fft2(buf.data(), h, w, false);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (x == 0 && y == 0 && zero_mode_zero) {
                buf[0] = 0.0;
                continue;
            }
            buf[y * w + x] /= symbol(double(freq_index(x, w)),
                                     double(freq_index(y, h)),
                                     x == w / 2 || y == h / 2);
        }
    fft2(buf.data(), h, w, true);
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = buf[i].real();
    return out;
}

/// The kx*ky cross term has an ambiguous sign on the Nyquist lines of an
/// even grid; it is dropped there so the discrete symbol stays conjugate
/// symmetric and real fields map to real fields exactly.
inline double poisson_symbol(const PoissonParams& p, double kx, double ky,
                             bool nyquist) {
    const double cross = nyquist ? 0.0 : 2.0 * p.k12 * kx * ky;
    return four_pi2 * (p.k11 * kx * kx + cross + p.k22 * ky * ky);
}

}  // namespace detail

/// -div K grad u = f on the periodic unit square, zero-mean solution.
/// u_hat(k) = f_hat(k) / (4 pi^2 (K11 kx^2 + 2 K12 kx ky + K22 ky^2)).
inline std::vector<double> solve_poisson(const PoissonParams& p,
                                         const std::vector<double>& f,
                                         std::size_t h, std::size_t w) {
    p.validate();
    return detail::spectral_divide(
        f, h, w,
        [&](double kx, double ky, bool nyq) {
            return detail::poisson_symbol(p, kx, ky, nyq);
        },
        /*zero_mode_zero=*/true);
}

/// -lap u + omega u = f on the periodic unit square; the zero mode solves
/// u_hat(0) = f_hat(0) / omega.
inline std::vector<double> solve_helmholtz(double omega,
                                           const std::vector<double>& f,
                                           std::size_t h, std::size_t w) {
    if (omega <= 0.0)
        throw std::invalid_argument("solve_helmholtz: omega must be positive");
    return detail::spectral_divide(
        f, h, w,
        [&](double kx, double ky, bool) {
            return detail::four_pi2 * (kx * kx + ky * ky) + omega;
        },
        /*zero_mode_zero=*/false);
}

/// Applies the discrete operator spectrally; residual oracle for both solvers.
inline std::vector<double> apply_poisson_operator(const PoissonParams& p,
                                                  const std::vector<double>& u,
                                                  std::size_t h,
                                                  std::size_t w) {
    std::vector<std::complex<double>> buf(h * w);
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = u[i];
    fft2(buf.data(), h, w, false);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double kx = double(freq_index(x, w)), ky = double(freq_index(y, h));
            buf[y * w + x] *= detail::poisson_symbol(p, kx, ky,
                                                     x == w / 2 || y == h / 2);
        }
    fft2(buf.data(), h, w, true);
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = buf[i].real();
    return out;
}

inline std::vector<double> apply_helmholtz_operator(
    double omega, const std::vector<double>& u, std::size_t h, std::size_t w) {
    std::vector<std::complex<double>> buf(h * w);
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = u[i];
    fft2(buf.data(), h, w, false);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double kx = double(freq_index(x, w)), ky = double(freq_index(y, h));
            buf[y * w + x] *= detail::four_pi2 * (kx * kx + ky * ky) + omega;
        }
    fft2(buf.data(), h, w, true);
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = buf[i].real();
    return out;
}

}  // namespace nopt
