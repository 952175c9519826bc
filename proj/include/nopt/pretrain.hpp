#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "nopt/dataset.hpp"
#include "nopt/fno.hpp"
#include "nopt/threading.hpp"

namespace nopt {

/// Random spatial masking. A unit is a pixel (patch = 1) or a square patch
/// whose side must divide both grid dimensions.
struct MaskSpec {
    double ratio = 0.0;
    std::size_t patch = 1;
    float fill = 0.0f;  // fields are normalized upstream, so 0 = channel mean

    void validate(std::size_t h, std::size_t w) const {
        if (ratio < 0.0 || ratio > 1.0)
            throw std::invalid_argument("MaskSpec: ratio outside [0,1]");
        if (patch == 0 || h % patch != 0 || w % patch != 0)
            throw std::invalid_argument("MaskSpec: patch must divide H and W");
    }
};

struct BlurSpec {
    double sigma_min = 0.0;
    double sigma_max = 0.0;

    void validate() const {
        if (sigma_min < 0.0 || sigma_max < sigma_min)
            throw std::invalid_argument("BlurSpec: need 0 <= min <= max");
    }
};

/// Masks exactly round(ratio * #units) units, chosen uniformly without
/// replacement; the same spatial pattern is applied to every channel.
template <typename T>
std::pair<Tensor<T>, std::vector<bool>> apply_mask(const Tensor<T>& x,
                                                   const MaskSpec& spec,
                                                   std::uint64_t seed) {
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    spec.validate(h, w);
    Tensor<T> out = x;
    std::vector<bool> mask(h * w, false);
    const std::size_t uh = h / spec.patch, uw = w / spec.patch;
    const std::size_t units = uh * uw;
    const std::size_t m = std::size_t(std::llround(spec.ratio * double(units)));
    if (m == 0) return {std::move(out), std::move(mask)};

    std::vector<std::size_t> idx(units);
    for (std::size_t i = 0; i < units; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t uy = idx[k] / uw, ux = idx[k] % uw;
        for (std::size_t py = 0; py < spec.patch; ++py)
            for (std::size_t px = 0; px < spec.patch; ++px) {
                const std::size_t y = uy * spec.patch + py;
                const std::size_t xx = ux * spec.patch + px;
                mask[y * w + xx] = true;
                for (std::size_t ch = 0; ch < c; ++ch)
                    out[(ch * h + y) * w + xx] = T(spec.fill);
            }
    }
    return {std::move(out), std::move(mask)};
}

/// Discrete Gaussian kernel truncated at radius ceil(3 sigma), unit sum.
inline std::vector<double> gaussian_kernel(double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_kernel: sigma < 0");
    if (sigma == 0.0) return {1.0};
    const long r = long(std::ceil(3.0 * sigma));
    std::vector<double> k(std::size_t(2 * r + 1));
    double s = 0.0;
    for (long i = -r; i <= r; ++i)
        s += k[std::size_t(i + r)] =
            std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    for (auto& v : k) v /= s;
    return k;
}

/// Separable circular Gaussian blur; sigma = 0 is the identity.
template <typename T>
Tensor<T> apply_blur(const Tensor<T>& x, double sigma) {
    if (sigma == 0.0) return x;
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    const auto k = gaussian_kernel(sigma);
    const long r = long(k.size() / 2);
    Tensor<T> mid(x.shape), out(x.shape);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (long j = -r; j <= r; ++j) {
                    const std::size_t xs =
                        std::size_t((long(xx) + j + 4 * long(w)) % long(w));
                    acc += k[std::size_t(j + r)] *
                           double(x[(ch * h + y) * w + xs]);
                }
                mid[(ch * h + y) * w + xx] = T(acc);
            }
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (long j = -r; j <= r; ++j) {
                    const std::size_t ys =
                        std::size_t((long(y) + j + 4 * long(h)) % long(h));
                    acc += k[std::size_t(j + r)] *
                           double(mid[(ch * h + ys) * w + xx]);
                }
                out[(ch * h + y) * w + xx] = T(acc);
            }
    return out;
}

struct PretrainConfig {
    MaskSpec mask;
    BlurSpec blur;
    long epochs = 200;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool mse_loss = false;  // default reconstruction loss is relative L2
};

/// One reconstruction step: per sample, mask then blur with a per-sample
/// sigma, reconstruct through encoder + pretrain decoder, and average the
/// loss against the clean input over the full field. Gradients are
/// accumulated into the model; the caller owns the optimizer step.
template <typename T>
double pretrain_step(FnoModel<T>& model, const std::vector<Tensor<T>>& batch,
                     const MaskSpec& mask, const BlurSpec& blur,
                     std::uint64_t seed, bool mse_loss = false) {
    if (!model.decoder)
        throw std::logic_error("pretrain_step: decoder was discarded");
    blur.validate();
    const std::size_t b = batch.size();
    if (b == 0) throw std::invalid_argument("pretrain_step: empty batch");

    const std::size_t nw = std::min(max_workers(), b);
    std::vector<FnoModel<T>> clones;
    std::vector<FnoModel<T>*> models{&model};
    for (std::size_t w = 1; w < nw; ++w) clones.push_back(model.clone());
    for (auto& c : clones) models.push_back(&c);

    std::vector<double> losses(b, 0.0);
    parallel_for(
        b,
        [&](std::size_t i, std::size_t worker) {
            const std::uint64_t s = mix_seed(seed, i);
            auto [noisy, msk] = apply_mask(batch[i], mask, mix_seed(s, 1));
            Rng srng(mix_seed(s, 2));
            const double sigma = srng.uniform(blur.sigma_min, blur.sigma_max);
            noisy = apply_blur(noisy, sigma);

            FnoModel<T>& m = *models[worker];
            Tape<T> tape;
            auto latent = m.encode(tape, tape.input(m.prepare_input(noisy)));
            auto recon = m.decode_pretrain(tape, latent);
            auto target = tape.input(batch[i]);
            auto loss = mse_loss ? tape.mse(recon, target)
                                 : tape.rel_l2(recon, target);
            losses[i] = double(tape.value(loss)[0]);
            tape.backward(loss, T(1.0 / double(b)));
        },
        nw);

    // fold worker-local gradients back in worker order
    for (std::size_t w = 1; w < nw; ++w) {
        auto src = models[w]->parameters();
        auto dst = model.parameters();
        for (std::size_t p = 0; p < dst.size(); ++p)
            for (std::size_t i = 0; i < dst[p]->grad.size(); ++i)
                dst[p]->grad[i] += src[p]->grad[i];
    }
    double total = 0.0;
    for (double l : losses) total += l;
    return total / double(b);
}

/// Collects per-sample input tensors (time folded into channels) from a
/// dataset, normalized per channel; solutions, if present, are ignored.
template <typename T>
std::vector<Tensor<T>> pretrain_inputs(const Dataset& ds) {
    auto st = channel_stats(ds);
    std::vector<Tensor<T>> out;
    out.reserve(ds.size());
    for (const auto& s : ds.samples) {
        Trajectory traj = s.input;
        for (auto& f : traj.frames) normalize(f, st);
        out.push_back(fold_time<T>(traj));
    }
    return out;
}

inline std::string dataset_fingerprint(const Dataset& ds) {
    return ds.pde + "-n" + std::to_string(ds.size()) + "-s" +
           std::to_string(ds.seed);
}

/// Epoch loop with seeded shuffling. Returns the per-epoch mean loss curve
/// and optionally writes it as `epoch,loss` CSV.
template <typename T>
std::vector<std::pair<long, double>> train_pretrain(
    const Dataset& ds, FnoModel<T>& model, const PretrainConfig& cfg,
    const std::string& curve_csv = "") {
    if (cfg.batch == 0) throw std::invalid_argument("train_pretrain: batch");
    auto inputs = pretrain_inputs<T>(ds);
    if (inputs.empty())
        throw std::invalid_argument("train_pretrain: empty dataset");

    Adam<T> opt(model.parameters(), cfg.lr);
    std::vector<std::pair<long, double>> curve;
    std::vector<std::size_t> order(inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (long e = 0; e < cfg.epochs; ++e) {
        Rng shuf(mix_seed(cfg.seed, 0xE90C + std::uint64_t(e)));
        shuf.shuffle(order.begin(), order.end());
        double acc = 0.0;
        std::size_t nb = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch) {
            std::vector<Tensor<T>> batch;
            for (std::size_t i = at;
                 i < std::min(at + cfg.batch, order.size()); ++i)
                batch.push_back(inputs[order[i]]);
            acc += pretrain_step(model, batch, cfg.mask, cfg.blur,
                                 mix_seed(mix_seed(cfg.seed, std::uint64_t(e)),
                                          at),
                                 cfg.mse_loss);
            ++nb;
            opt.step();
        }
        curve.emplace_back(e, acc / double(nb));
    }
    model.stage = "pretrained";
    model.epochs = cfg.epochs;
    model.dataset_fingerprint = dataset_fingerprint(ds);
    if (!curve_csv.empty()) {
        std::ofstream f(curve_csv);
        f << "epoch,loss\n";
        for (auto [e, l] : curve) f << e << "," << l << "\n";
    }
    return curve;
}

}  // namespace nopt
