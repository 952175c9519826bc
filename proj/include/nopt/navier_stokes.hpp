#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "nopt/fft.hpp"
#include "nopt/field.hpp"

namespace nopt {

/// 2D incompressible Navier-Stokes in vorticity form on the unit torus,
/// nu = 1/Re. Forcing is applied to the vorticity equation directly.
struct NsParams {
    long re = 300;
    double forcing_amplitude = 0.1;
    double dt_max = 5e-3;
    double cfl_safety = 0.5;
    double dt_min = 1e-7;  // CFL below this is treated as unattainable

    double nu() const { return 1.0 / double(re); }
    void validate() const {
        if (re < 1) throw std::invalid_argument("NsParams: Re >= 1");
    }
};

namespace detail {

constexpr double two_pi = 6.283185307179586476925286766559;

struct NsWorkspace {
    std::size_t h, w;
    std::vector<double> ksq;         // 4 pi^2 |k|^2
    std::vector<double> kx, ky;      // signed integer frequencies
    std::vector<bool> dealias;       // 2/3-rule keep mask
    std::vector<std::complex<double>> what, psi, tmp1, tmp2, u, v, wx, wy;

    NsWorkspace(std::size_t h_, std::size_t w_) : h(h_), w(w_) {
        const std::size_t n = h * w;
        ksq.resize(n);
        kx.resize(n);
        ky.resize(n);
        dealias.resize(n);
        what.resize(n);
        psi.resize(n);
        tmp1.resize(n);
        tmp2.resize(n);
        u.resize(n);
        v.resize(n);
        wx.resize(n);
        wy.resize(n);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double fx = double(freq_index(x, w));
                const double fy = double(freq_index(y, h));
                const std::size_t i = y * w + x;
                kx[i] = fx;
                ky[i] = fy;
                ksq[i] = two_pi * two_pi * (fx * fx + fy * fy);
                dealias[i] = std::abs(fx) < double(w) / 3.0 &&
                             std::abs(fy) < double(h) / 3.0;
            }
    }
};

/// Nonlinear term N = -(v . grad) w in spectral space, 2/3-rule dealiased,
/// with the zero mode pinned to 0 so the mean vorticity is untouched.
inline void ns_nonlinear(NsWorkspace& ws,
                         const std::vector<std::complex<double>>& what,
                         std::vector<std::complex<double>>& out) {
    const std::size_t n = ws.h * ws.w;
    const std::complex<double> im(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::complex<double> wd = ws.dealias[i] ? what[i] : 0.0;
        const std::complex<double> psik = i == 0 ? 0.0 : wd / ws.ksq[i];
        // v = (d psi / dy, -d psi / dx), d/dx -> i 2 pi kx
        ws.u[i] = im * two_pi * ws.ky[i] * psik;
        ws.v[i] = -im * two_pi * ws.kx[i] * psik;
        ws.wx[i] = im * two_pi * ws.kx[i] * wd;
        ws.wy[i] = im * two_pi * ws.ky[i] * wd;
    }
    fft2(ws.u.data(), ws.h, ws.w, true);
    fft2(ws.v.data(), ws.h, ws.w, true);
    fft2(ws.wx.data(), ws.h, ws.w, true);
    fft2(ws.wy.data(), ws.h, ws.w, true);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = -(ws.u[i].real() * ws.wx[i].real() +
                   ws.v[i].real() * ws.wy[i].real());
    fft2(out.data(), ws.h, ws.w, false);
    for (std::size_t i = 0; i < n; ++i)
        if (!ws.dealias[i]) out[i] = 0.0;
    out[0] = 0.0;
}

inline double ns_max_velocity(NsWorkspace& ws,
                              const std::vector<std::complex<double>>& what) {
    const std::size_t n = ws.h * ws.w;
    const std::complex<double> im(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::complex<double> psik = i == 0 ? 0.0 : what[i] / ws.ksq[i];
        ws.u[i] = im * two_pi * ws.ky[i] * psik;
        ws.v[i] = -im * two_pi * ws.kx[i] * psik;
    }
    fft2(ws.u.data(), ws.h, ws.w, true);
    fft2(ws.v.data(), ws.h, ws.w, true);
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        m = std::max(m, std::max(std::abs(ws.u[i].real()),
                                 std::abs(ws.v[i].real())));
    return m;
}

}  // namespace detail

/// Standard fixed vorticity forcing: a * (sin(2 pi (x+y)) + cos(2 pi (x+y))).
inline std::vector<double> ns_forcing(std::size_t h, std::size_t w,
                                      double amplitude) {
    std::vector<double> f(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double s =
                detail::two_pi * (double(x) / double(w) + double(y) / double(h));
            f[y * w + x] = amplitude * (std::sin(s) + std::cos(s));
        }
    return f;
}

/// Kinetic energy 0.5 <w, psi> of the discrete state (diagnostic).
inline double ns_energy(const std::vector<double>& w_phys, std::size_t h,
                        std::size_t w) {
    std::vector<std::complex<double>> what(h * w);
    for (std::size_t i = 0; i < h * w; ++i) what[i] = w_phys[i];
    fft2(what.data(), h, w, false);
    detail::NsWorkspace ws(h, w);
    double e = 0.0;
    for (std::size_t i = 1; i < h * w; ++i)
        e += 0.5 * std::norm(what[i]) / ws.ksq[i];
    return e / double(h * w) / double(h * w);
}

/// Pseudo-spectral solver: Crank-Nicolson viscosity, Heun (two-stage RK)
/// advection + forcing, 2/3-rule dealiasing, CFL-chosen dt capped by config.
/// Records `record_count` snapshots after t=0 at uniform intervals, with the
/// initial state first.
inline std::vector<std::vector<double>> simulate_ns_f64(
    const std::vector<double>& w0, std::size_t h, std::size_t w, NsParams p,
    double t_final, std::size_t record_count) {
    p.validate();
    if (w0.size() != h * w)
        throw std::invalid_argument("simulate_ns: grid mismatch");
    const double nu = p.nu();
    detail::NsWorkspace ws(h, w);
    const std::size_t n = h * w;

    std::vector<std::complex<double>> what(n), n0(n), n1(n), fhat(n), stage(n);
    for (std::size_t i = 0; i < n; ++i) what[i] = w0[i];
    fft2(what.data(), h, w, false);
    {
        auto f = ns_forcing(h, w, p.forcing_amplitude);
        for (std::size_t i = 0; i < n; ++i) fhat[i] = f[i];
        fft2(fhat.data(), h, w, false);
        fhat[0] = 0.0;  // zero-mean forcing, exactly
    }

    std::vector<std::vector<double>> snaps;
    const double rec_dt = t_final / double(record_count);
    auto record = [&] {
        auto buf = what;
        fft2(buf.data(), h, w, true);
        std::vector<double> f(n);
        for (std::size_t i = 0; i < n; ++i) f[i] = buf[i].real();
        snaps.push_back(std::move(f));
    };
    record();

    const double hmin = std::min(1.0 / double(w), 1.0 / double(h));
    double t = 0.0;
    for (std::size_t r = 1; r <= record_count; ++r) {
        const double t_target = rec_dt * double(r);
        while (t < t_target - 1e-12) {
            const double vmax = detail::ns_max_velocity(ws, what);
            double dt = p.dt_max;
            if (vmax > 0.0)
                dt = std::min(dt, p.cfl_safety * hmin / vmax);
            if (dt < p.dt_min)
                throw std::runtime_error("simulate_ns: CFL cap unattainable");
            dt = std::min(dt, t_target - t);
            detail::ns_nonlinear(ws, what, n0);
            for (std::size_t i = 0; i < n; ++i) {
                const double a = 0.5 * dt * nu * ws.ksq[i];
                stage[i] = (what[i] * (1.0 - a) + dt * (n0[i] + fhat[i])) /
                           (1.0 + a);
            }
            detail::ns_nonlinear(ws, stage, n1);
            for (std::size_t i = 0; i < n; ++i) {
                const double a = 0.5 * dt * nu * ws.ksq[i];
                what[i] = (what[i] * (1.0 - a) +
                           0.5 * dt * (n0[i] + n1[i] + 2.0 * fhat[i])) /
                          (1.0 + a);
            }
            t += dt;
        }
        record();
    }
    return snaps;
}

inline Trajectory simulate_ns(const Field& w0, NsParams p, double t_final,
                              std::size_t record_count) {
    w0.grid.validate();
    const std::size_t h = w0.grid.H, w = w0.grid.W;
    auto snaps = simulate_ns_f64(
        std::vector<double>(w0.values.begin(), w0.values.end()), h, w, p,
        t_final, record_count);
    Trajectory traj;
    traj.dt_record = t_final / double(record_count);
    for (const auto& s : snaps) {
        Field f(1, w0.grid);
        for (std::size_t i = 0; i < h * w; ++i) f.values[i] = float(s[i]);
        traj.frames.push_back(std::move(f));
    }
    return traj;
}

}  // namespace nopt
