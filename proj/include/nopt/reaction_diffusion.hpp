#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nopt/field.hpp"

namespace nopt {

/// FitzHugh-Nagumo reaction-diffusion on [-1,1]^2 with zero-flux boundaries.
/// Reactions: Ru = u - u^3 - k - v, Rv = u - v.
struct RdParams {
    double du = 1e-3;
    double dv = 5e-3;
    double k = 5e-3;
    double dt = 0.0;  // <= 0: auto from the stability bound
    double safety = 0.5;

    void validate() const {
        if (du < 0.0 || dv < 0.0)
            throw std::invalid_argument("RdParams: diffusion must be >= 0");
    }
    double stable_dt(double h) const {
        const double d = std::max(du, dv);
        return d > 0.0 ? safety * h * h / (4.0 * d) : 1e-2;
    }
};

namespace detail {

/// 5-point Laplacian with mirror (zero-flux) boundaries, cell-centered.
inline void laplacian_neumann(const std::vector<double>& u,
                              std::vector<double>& out, std::size_t h,
                              std::size_t w, double inv_h2) {
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t yn = y == 0 ? 0 : y - 1;
        const std::size_t ys = y == h - 1 ? h - 1 : y + 1;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xw = x == 0 ? 0 : x - 1;
            const std::size_t xe = x == w - 1 ? w - 1 : x + 1;
            out[y * w + x] = inv_h2 * (u[yn * w + x] + u[ys * w + x] +
                                       u[y * w + xw] + u[y * w + xe] -
                                       4.0 * u[y * w + x]);
        }
    }
}

struct RdState {
    std::vector<double> u, v;
};

inline void rd_rhs(const RdState& s, RdState& out, const RdParams& p,
                   std::size_t h, std::size_t w, double inv_h2,
                   std::vector<double>& lap) {
    laplacian_neumann(s.u, lap, h, w, inv_h2);
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        const double ui = s.u[i], vi = s.v[i];
        out.u[i] = p.du * lap[i] + (ui - ui * ui * ui - p.k - vi);
    }
    laplacian_neumann(s.v, lap, h, w, inv_h2);
    for (std::size_t i = 0; i < s.v.size(); ++i)
        out.v[i] = p.dv * lap[i] + (s.u[i] - s.v[i]);
}

}  // namespace detail

/// Classic RK4 in time at f64; snapshots (u, v) recorded every
/// `record_stride` accepted steps, including the initial state.
inline std::vector<detail::RdState> simulate_rd_f64(
    std::vector<double> u0, std::vector<double> v0, RdParams p, std::size_t h,
    std::size_t w, double t_final, std::size_t record_stride) {
    p.validate();
    if (u0.size() != h * w || v0.size() != h * w)
        throw std::invalid_argument("simulate_rd: grid mismatch");
    const double hx = 2.0 / double(w);
    const double bound = p.stable_dt(hx);
    double dt = p.dt > 0.0 ? p.dt : bound;
    if (dt > bound * (1.0 + 1e-12))
        throw std::invalid_argument("simulate_rd: dt violates stability bound");
    const std::size_t steps = std::size_t(std::ceil(t_final / dt - 1e-12));
    dt = t_final / double(steps);
    const double inv_h2 = 1.0 / (hx * hx);

    detail::RdState s{std::move(u0), std::move(v0)};
    detail::RdState k1 = s, k2 = s, k3 = s, k4 = s, tmp = s;
    std::vector<double> lap(h * w);

    std::vector<detail::RdState> snaps;
    snaps.push_back(s);
    for (std::size_t n = 0; n < steps; ++n) {
        detail::rd_rhs(s, k1, p, h, w, inv_h2, lap);
        for (std::size_t i = 0; i < h * w; ++i) {
            tmp.u[i] = s.u[i] + 0.5 * dt * k1.u[i];
            tmp.v[i] = s.v[i] + 0.5 * dt * k1.v[i];
        }
        detail::rd_rhs(tmp, k2, p, h, w, inv_h2, lap);
        for (std::size_t i = 0; i < h * w; ++i) {
            tmp.u[i] = s.u[i] + 0.5 * dt * k2.u[i];
            tmp.v[i] = s.v[i] + 0.5 * dt * k2.v[i];
        }
        detail::rd_rhs(tmp, k3, p, h, w, inv_h2, lap);
        for (std::size_t i = 0; i < h * w; ++i) {
            tmp.u[i] = s.u[i] + dt * k3.u[i];
            tmp.v[i] = s.v[i] + dt * k3.v[i];
        }
        detail::rd_rhs(tmp, k4, p, h, w, inv_h2, lap);
        for (std::size_t i = 0; i < h * w; ++i) {
            s.u[i] += dt / 6.0 *
                      (k1.u[i] + 2.0 * k2.u[i] + 2.0 * k3.u[i] + k4.u[i]);
            s.v[i] += dt / 6.0 *
                      (k1.v[i] + 2.0 * k2.v[i] + 2.0 * k3.v[i] + k4.v[i]);
        }
        if ((n + 1) % record_stride == 0) snaps.push_back(s);
    }
    return snaps;
}

/// Field-typed wrapper around simulate_rd_f64; frames are (u, v) pairs cast
/// to f32 for storage.
inline Trajectory simulate_rd(const Field& u0, const Field& v0, RdParams p,
                              double t_final, std::size_t record_stride) {
    const std::size_t h = u0.grid.H, w = u0.grid.W;
    if (v0.grid.H != h || v0.grid.W != w)
        throw std::invalid_argument("simulate_rd: grid mismatch");
    auto snaps = simulate_rd_f64(
        std::vector<double>(u0.values.begin(), u0.values.end()),
        std::vector<double>(v0.values.begin(), v0.values.end()), p, h, w,
        t_final, record_stride);

    const double bound = p.stable_dt(2.0 / double(w));
    double dt = p.dt > 0.0 ? p.dt : bound;
    const std::size_t steps = std::size_t(std::ceil(t_final / dt - 1e-12));
    dt = t_final / double(steps);

    Grid2D g = u0.grid;
    g.x0 = g.y0 = -1.0;
    g.x1 = g.y1 = 1.0;
    Trajectory traj;
    traj.dt_record = dt * double(record_stride);
    for (const auto& s : snaps) {
        Field f(2, g);
        for (std::size_t i = 0; i < h * w; ++i) {
            f.values[i] = float(s.u[i]);
            f.values[h * w + i] = float(s.v[i]);
        }
        traj.frames.push_back(std::move(f));
    }
    return traj;
}

}  // namespace nopt
