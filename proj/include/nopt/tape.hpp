#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nopt/fft.hpp"
#include "nopt/tensor.hpp"

namespace nopt {

/// Trainable tensor with gradient accumulator and Adam state.
template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m, adam_v;
    bool frozen = false;

    Parameter() = default;
    explicit Parameter(Tensor<T> v)
        : value(std::move(v)),
          grad(value.shape, value.is_complex),
          adam_m(value.shape, value.is_complex),
          adam_v(value.shape, value.is_complex) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

/// Reverse-mode tape over the op closure used by the FNO and its losses.
/// Nodes are replayed in exact reverse recording order on backward().
template <typename T>
class Tape {
public:
    using Id = std::size_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Id input(Tensor<T> v) {
        v.check_finite("input");
        return push(std::move(v), nullptr, {});
    }

    Id param(Parameter<T>& p) {
        Id id = push(p.value, !p.frozen ? &p : nullptr, {});
        return id;
    }

    const Tensor<T>& value(Id id) const { return nodes_[id].value; }
    const Tensor<T>& grad(Id id) const { return nodes_[id].grad; }

    Id add(Id a, Id b) { return ew(a, b, Ew::Add); }
    Id sub(Id a, Id b) { return ew(a, b, Ew::Sub); }

    Id mul(Id a, Id b) {
        const auto &x = val(a), &y = val(b);
        require(x.same_shape(y) && !x.is_complex, "mul: shape mismatch");
        Tensor<T> out(x.shape);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = x[i] * y[i];
        return push(std::move(out), nullptr, {a, b}, [this, a, b](Id id) {
            const auto& g = nodes_[id].grad;
            const auto &x = val(a), &y = val(b);
            auto &ga = nodes_[a].grad, &gb = nodes_[b].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * y[i];
                gb[i] += g[i] * x[i];
            }
        });
    }

    Id scale(Id a, T c) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v *= c;
        return push(std::move(out), nullptr, {a}, [this, a, c](Id id) {
            const auto& g = nodes_[id].grad;
            auto& ga = nodes_[a].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
    }

    /// Channel-wise affine map (1x1 convolution): x [Ci, ...] -> [Co, ...].
    Id conv1x1(Id x, Id w, Id b) {
        const auto &xv = val(x), &wv = val(w), &bv = val(b);
        require(wv.shape.size() == 2 && bv.shape.size() == 1,
                "conv1x1: weight must be [Co,Ci], bias [Co]");
        const std::size_t co = wv.shape[0], ci = wv.shape[1];
        require(!xv.is_complex && !xv.shape.empty() && xv.shape[0] == ci &&
                    bv.shape[0] == co,
                "conv1x1: channel mismatch");
        const std::size_t n = xv.numel() / ci;
        std::vector<std::size_t> oshape = xv.shape;
        oshape[0] = co;
        Tensor<T> out(oshape);
        for (std::size_t o = 0; o < co; ++o) {
            T* op = &out[o * n];
            for (std::size_t j = 0; j < n; ++j) op[j] = bv[o];
            for (std::size_t i = 0; i < ci; ++i) {
                const T wv_oi = wv[o * ci + i];
                const T* xp = &xv[i * n];
                for (std::size_t j = 0; j < n; ++j) op[j] += wv_oi * xp[j];
            }
        }
        return push(std::move(out), nullptr, {x, w, b},
                    [this, x, w, b, co, ci, n](Id id) {
            const auto& g = nodes_[id].grad;
            const auto &xv = val(x), &wv = val(w);
            auto &gx = nodes_[x].grad, &gw = nodes_[w].grad,
                 &gb = nodes_[b].grad;
            for (std::size_t o = 0; o < co; ++o) {
                const T* gp = &g[o * n];
                T s = T(0);
                for (std::size_t j = 0; j < n; ++j) s += gp[j];
                gb[o] += s;
                for (std::size_t i = 0; i < ci; ++i) {
                    const T* xp = &xv[i * n];
                    T* gxp = &gx[i * n];
                    const T wv_oi = wv[o * ci + i];
                    T acc = T(0);
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += gp[j] * xp[j];
                        gxp[j] += wv_oi * gp[j];
                    }
                    gw[o * ci + i] += acc;
                }
            }
        });
    }

    Id relu(Id a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        return push(std::move(out), nullptr, {a}, [this, a](Id id) {
            const auto& g = nodes_[id].grad;
            const auto& x = val(a);
            auto& ga = nodes_[a].grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > T(0)) ga[i] += g[i];
        });
    }

    Id gelu(Id a) {
        const auto& x = val(a);
        require(!x.is_complex, "gelu: real only");
        Tensor<T> out(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = x[i] * phi(x[i]);
        return push(std::move(out), nullptr, {a}, [this, a](Id id) {
            const auto& g = nodes_[id].grad;
            const auto& x = val(a);
            auto& ga = nodes_[a].grad;
            constexpr double inv_sqrt2pi = 0.3989422804014326779399461;
            for (std::size_t i = 0; i < g.size(); ++i) {
                double xi = double(x[i]);
                double d = phi(x[i]) +
                           xi * inv_sqrt2pi * std::exp(-0.5 * xi * xi);
                ga[i] += g[i] * T(d);
            }
        });
    }

    /// Real-to-complex 2D DFT over the spatial axes: [C,H,W] -> [C,H,W/2+1]
    /// complex (unnormalized forward convention).
    Id rfft2(Id a) {
        const auto& x = val(a);
        require(!x.is_complex && x.shape.size() == 3, "rfft2: want real [C,H,W]");
        const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
        require(h % 2 == 0 && w % 2 == 0, "rfft2: spatial axes must be even");
        const std::size_t wh = w / 2 + 1;
        Tensor<T> out({c, h, wh}, true);
        std::vector<std::complex<T>> buf(h * w);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < h * w; ++i)
                buf[i] = std::complex<T>(x[ch * h * w + i], T(0));
            fft2(buf.data(), h, w, false);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t k = 0; k < wh; ++k) {
                    std::size_t o = 2 * ((ch * h + y) * wh + k);
                    out[o] = buf[y * w + k].real();
                    out[o + 1] = buf[y * w + k].imag();
                }
        }
        return push(std::move(out), nullptr, {a},
                    [this, a, c, h, w, wh](Id id) {
            const auto& g = nodes_[id].grad;
            auto& ga = nodes_[a].grad;
            std::vector<std::complex<T>> buf(h * w);
            const T n = T(h * w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::fill(buf.begin(), buf.end(), std::complex<T>(0, 0));
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t k = 0; k < wh; ++k) {
                        std::size_t o = 2 * ((ch * h + y) * wh + k);
                        buf[y * w + k] = std::complex<T>(g[o], g[o + 1]);
                    }
                fft2(buf.data(), h, w, true);
                for (std::size_t i = 0; i < h * w; ++i)
                    ga[ch * h * w + i] += n * buf[i].real();
            }
        });
    }

    /// Inverse of rfft2 ((1/N) inverse convention). The self-conjugate
    /// columns kx=0 and kx=W/2 are projected onto their Hermitian part so the
    /// reconstruction is exactly real.
    Id irfft2(Id a, std::size_t w) {
        const auto& x = val(a);
        require(x.is_complex && x.shape.size() == 3, "irfft2: want complex");
        const std::size_t c = x.shape[0], h = x.shape[1], wh = x.shape[2];
        require(wh == w / 2 + 1 && w % 2 == 0, "irfft2: width mismatch");
        Tensor<T> out({c, h, w});
        std::vector<std::complex<T>> buf(h * w);
        for (std::size_t ch = 0; ch < c; ++ch) {
            hermitian_extend(&x[2 * ch * h * wh], buf.data(), h, w, wh);
            fft2(buf.data(), h, w, true);
            for (std::size_t i = 0; i < h * w; ++i)
                out[ch * h * w + i] = buf[i].real();
        }
        return push(std::move(out), nullptr, {a},
                    [this, a, c, h, w, wh](Id id) {
            const auto& g = nodes_[id].grad;
            auto& ga = nodes_[a].grad;
            std::vector<std::complex<T>> buf(h * w);
            const T inv_n = T(1) / T(h * w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < h * w; ++i)
                    buf[i] = std::complex<T>(g[ch * h * w + i] * inv_n, T(0));
                fft2(buf.data(), h, w, false);  // (1/N) * forward DFT of g
                // adjoint of the Hermitian extension + projection
                T* gp = &ga[2 * ch * h * wh];
                for (std::size_t y = 0; y < h; ++y) {
                    std::size_t ym = (h - y) % h;
                    for (std::size_t k = 0; k < wh; ++k) {
                        std::complex<T> gk;
                        if (k == 0 || k == w / 2) {
                            gk = T(0.5) * (buf[y * w + k] +
                                           std::conj(buf[ym * w + k]));
                        } else {
                            gk = buf[y * w + k] +
                                 std::conj(buf[ym * w + (w - k)]);
                        }
                        gp[2 * (y * wh + k)] += gk.real();
                        gp[2 * (y * wh + k) + 1] += gk.imag();
                    }
                }
            }
        });
    }

    /// Complex channel mixing on the retained low-frequency corner modes:
    /// x [Ci,H,Wh] complex, r [2,m1,m2,Ci,Co] complex -> [Co,H,Wh] complex,
    /// zero outside the two retained blocks.
    Id spectral_mix(Id x, Id r, std::size_t m1, std::size_t m2) {
        const auto &xv = val(x), &rv = val(r);
        require(xv.is_complex && xv.shape.size() == 3, "spectral_mix: bad x");
        require(rv.is_complex && rv.shape.size() == 5 && rv.shape[0] == 2,
                "spectral_mix: bad weights");
        const std::size_t ci = xv.shape[0], h = xv.shape[1], wh = xv.shape[2];
        const std::size_t co = rv.shape[4];
        require(rv.shape[1] == m1 && rv.shape[2] == m2 &&
                    rv.shape[3] == ci && m1 * 2 <= h && m2 <= wh,
                "spectral_mix: mode/channel mismatch");
        Tensor<T> out({co, h, wh}, true);
        mix_forward(xv, rv, out, ci, co, h, wh, m1, m2);
        return push(std::move(out), nullptr, {x, r},
                    [this, x, r, ci, co, h, wh, m1, m2](Id id) {
            const auto& g = nodes_[id].grad;
            const auto &xv = val(x), &rv = val(r);
            auto &gx = nodes_[x].grad, &gr = nodes_[r].grad;
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t j = 0; j < m1; ++j) {
                    const std::size_t ky = b == 0 ? j : h - m1 + j;
                    for (std::size_t k = 0; k < m2; ++k)
                        for (std::size_t o = 0; o < co; ++o) {
                            const std::size_t gi = 2 * ((o * h + ky) * wh + k);
                            const std::complex<T> gv(g[gi], g[gi + 1]);
                            for (std::size_t i = 0; i < ci; ++i) {
                                const std::size_t ri =
                                    2 * ((((b * m1 + j) * m2 + k) * ci + i) *
                                             co + o);
                                const std::size_t xi =
                                    2 * ((i * h + ky) * wh + k);
                                const std::complex<T> rw(rv[ri], rv[ri + 1]);
                                const std::complex<T> xw(xv[xi], xv[xi + 1]);
                                auto dgx = std::conj(rw) * gv;
                                auto dgr = gv * std::conj(xw);
                                gx[xi] += dgx.real();
                                gx[xi + 1] += dgx.imag();
                                gr[ri] += dgr.real();
                                gr[ri + 1] += dgr.imag();
                            }
                        }
                }
        });
    }

    Id sum(Id a) { return reduce(a, false); }
    Id mean(Id a) { return reduce(a, true); }

    /// Projection to scalar against a fixed tensor (inner product over raw
    /// components); used by gradient-check harnesses.
    Id dot_const(Id a, Tensor<T> wgt) {
        const auto& x = val(a);
        require(x.size() == wgt.size(), "dot_const: size mismatch");
        T s = T(0);
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * wgt[i];
        auto w = std::make_shared<Tensor<T>>(std::move(wgt));
        return push(Tensor<T>::scalar(s), nullptr, {a}, [this, a, w](Id id) {
            const T g = nodes_[id].grad[0];
            auto& ga = nodes_[a].grad;
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga[i] += g * (*w)[i];
        });
    }

    Id mse(Id p, Id t) {
        const auto &pv = val(p), &tv = val(t);
        require(pv.same_shape(tv), "mse: shape mismatch");
        const std::size_t n = pv.size();
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = double(pv[i]) - double(tv[i]);
            s += d * d;
        }
        return push(Tensor<T>::scalar(T(s / double(n))), nullptr, {p, t},
                    [this, p, t, n](Id id) {
            const T g = nodes_[id].grad[0];
            const auto &pv = val(p), &tv = val(t);
            auto &gp = nodes_[p].grad, &gt = nodes_[t].grad;
            const T c = g * T(2) / T(n);
            for (std::size_t i = 0; i < n; ++i) {
                T d = c * (pv[i] - tv[i]);
                gp[i] += d;
                gt[i] -= d;
            }
        });
    }

    /// ||p - t||_2 / ||t||_2 over all components. Errors on a zero target.
    Id rel_l2(Id p, Id t) {
        const auto &pv = val(p), &tv = val(t);
        require(pv.same_shape(tv), "rel_l2: shape mismatch");
        double nd = 0, nt = 0;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            double d = double(pv[i]) - double(tv[i]);
            nd += d * d;
            nt += double(tv[i]) * double(tv[i]);
        }
        require(nt > 0, "rel_l2: zero-norm target");
        const double r = std::sqrt(nd) / std::sqrt(nt);
        return push(Tensor<T>::scalar(T(r)), nullptr, {p, t},
                    [this, p, t, nd, nt, r](Id id) {
            const double g = double(nodes_[id].grad[0]);
            const auto &pv = val(p), &tv = val(t);
            auto &gp = nodes_[p].grad, &gt = nodes_[t].grad;
            const double dn = std::sqrt(nd), tn = std::sqrt(nt);
            const double cp = dn > 0 ? g / (dn * tn) : 0.0;  // exact minimum
            const double ct = g * r / nt;
            for (std::size_t i = 0; i < pv.size(); ++i) {
                double d = double(pv[i]) - double(tv[i]);
                gp[i] += T(cp * d);
                gt[i] -= T(cp * d + ct * double(tv[i]));
            }
        });
    }

    /// Seeds the loss cotangent and replays nodes in reverse recording order.
    /// Parameter leaves accumulate into their owners' grad buffers.
    void backward(Id loss, T seed = T(1)) {
        require(val(loss).is_scalar(), "backward: loss must be scalar");
        for (auto& n : nodes_)
            n.grad = Tensor<T>(n.value.shape, n.value.is_complex);
        nodes_[loss].grad[0] = seed;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].back) nodes_[i].back(i);
            if (nodes_[i].owner)
                for (std::size_t j = 0; j < nodes_[i].grad.size(); ++j)
                    nodes_[i].owner->grad[j] += nodes_[i].grad[j];
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Ew { Add, Sub };

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        Parameter<T>* owner;
        std::vector<Id> inputs;
        std::function<void(Id)> back;
    };

    static void require(bool ok, const char* msg) {
        if (!ok) throw std::invalid_argument(msg);
    }

    static double phi(T x) {  // standard normal CDF
        return 0.5 * (1.0 + std::erf(double(x) * 0.70710678118654752440));
    }

    const Tensor<T>& val(Id id) const { return nodes_[id].value; }

    Id push(Tensor<T> v, Parameter<T>* owner, std::vector<Id> inputs,
            std::function<void(Id)> back = {}) {
        v.check_finite("op output");
        nodes_.push_back(Node{std::move(v), {}, owner, std::move(inputs),
                              std::move(back)});
        return nodes_.size() - 1;
    }

    Id ew(Id a, Id b, Ew kind) {
        const auto &x = val(a), &y = val(b);
        require(x.same_shape(y), "elementwise: shape mismatch");
        Tensor<T> out(x.shape, x.is_complex);
        if (kind == Ew::Add)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
        else
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
        return push(std::move(out), nullptr, {a, b},
                    [this, a, b, kind](Id id) {
            const auto& g = nodes_[id].grad;
            auto &ga = nodes_[a].grad, &gb = nodes_[b].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                if (kind == Ew::Add)
                    gb[i] += g[i];
                else
                    gb[i] -= g[i];
            }
        });
    }

    Id reduce(Id a, bool mean_) {
        const auto& x = val(a);
        require(!x.is_complex, "reduce: real only");
        double s = 0;
        for (T v : x.data) s += double(v);
        const T c = mean_ ? T(1) / T(x.size()) : T(1);
        if (mean_) s /= double(x.size());
        return push(Tensor<T>::scalar(T(s)), nullptr, {a},
                    [this, a, c](Id id) {
            const T g = nodes_[id].grad[0] * c;
            auto& ga = nodes_[a].grad;
            for (auto& v : ga.data) v += g;
        });
    }

    static void mix_forward(const Tensor<T>& x, const Tensor<T>& r,
                            Tensor<T>& out, std::size_t ci, std::size_t co,
                            std::size_t h, std::size_t wh, std::size_t m1,
                            std::size_t m2) {
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t j = 0; j < m1; ++j) {
                const std::size_t ky = b == 0 ? j : h - m1 + j;
                for (std::size_t k = 0; k < m2; ++k)
                    for (std::size_t o = 0; o < co; ++o) {
                        std::complex<T> acc(0, 0);
                        for (std::size_t i = 0; i < ci; ++i) {
                            const std::size_t ri =
                                2 * ((((b * m1 + j) * m2 + k) * ci + i) * co +
                                     o);
                            const std::size_t xi = 2 * ((i * h + ky) * wh + k);
                            acc += std::complex<T>(r[ri], r[ri + 1]) *
                                   std::complex<T>(x[xi], x[xi + 1]);
                        }
                        const std::size_t oi = 2 * ((o * h + ky) * wh + k);
                        out[oi] = acc.real();
                        out[oi + 1] = acc.imag();
                    }
            }
    }

    static void hermitian_extend(const T* half, std::complex<T>* full,
                                 std::size_t h, std::size_t w,
                                 std::size_t wh) {
        auto at = [&](std::size_t y, std::size_t k) {
            return std::complex<T>(half[2 * (y * wh + k)],
                                   half[2 * (y * wh + k) + 1]);
        };
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t ym = (h - y) % h;
            for (std::size_t k = 0; k < wh; ++k) {
                std::complex<T> v = at(y, k);
                if (k == 0 || k == w / 2)
                    v = T(0.5) * (v + std::conj(at(ym, k)));
                full[y * w + k] = v;
            }
            for (std::size_t k = wh; k < w; ++k)
                full[y * w + k] = std::conj(at(ym, w - k));
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace nopt
