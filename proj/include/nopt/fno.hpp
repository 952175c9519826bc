#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "nopt/adam.hpp"
#include "nopt/field.hpp"
#include "nopt/rng.hpp"
#include "nopt/tape.hpp"

namespace nopt {

struct FnoConfig {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t width = 32;
    std::size_t modes1 = 12;
    std::size_t modes2 = 12;
    std::size_t layers = 4;
    bool coord_channels = false;  // append linear x/y position channels

    std::size_t lifted_in() const {
        return in_channels + (coord_channels ? 2 : 0);
    }

    void validate() const {
        if (in_channels == 0 || out_channels == 0 || width == 0 ||
            layers == 0 || modes1 == 0 || modes2 == 0)
            throw std::invalid_argument("FnoConfig: zero-sized dimension");
        if (width < in_channels || width < out_channels)
            throw std::invalid_argument("FnoConfig: width below channel count");
    }
    void validate_resolution(std::size_t h, std::size_t w) const {
        if (2 * modes1 > h || modes2 > w / 2 + 1)
            throw std::invalid_argument("FnoConfig: modes exceed resolution");
    }

    nlohmann::json to_json() const {
        return {{"in_channels", in_channels}, {"out_channels", out_channels},
                {"width", width},             {"modes1", modes1},
                {"modes2", modes2},           {"layers", layers},
                {"coord_channels", coord_channels}};
    }
    static FnoConfig from_json(const nlohmann::json& j) {
        FnoConfig c;
        c.in_channels = j.at("in_channels");
        c.out_channels = j.at("out_channels");
        c.width = j.at("width");
        c.modes1 = j.at("modes1");
        c.modes2 = j.at("modes2");
        c.layers = j.at("layers");
        c.coord_channels = j.at("coord_channels");
        return c;
    }
};

/// Two linear position channels in [0,1): x varies along the row axis, y
/// along the column axis.
template <typename T>
Tensor<T> coordinate_channels(std::size_t h, std::size_t w) {
    Tensor<T> c({2, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            c[(0 * h + y) * w + x] = T(double(x) / double(w));
            c[(1 * h + y) * w + x] = T(double(y) / double(h));
        }
    return c;
}

/// Fourier Neural Operator: pointwise lifting, `layers` spectral blocks
/// (truncated spectral convolution + pointwise bypass, GELU), and a two-layer
/// pointwise projection head with ReLU. An optional decoder mirroring the
/// spectral stack supports reconstruction pretraining.
template <typename T>
class FnoModel {
public:
    struct SpectralBlock {
        Parameter<T> r;       // [2, m1, m2, width, width] complex
        Parameter<T> wb, bb;  // pointwise bypass [width, width] + bias
    };

    FnoConfig cfg;
    std::string stage = "init";  // init | pretrained | finetuned
    std::uint64_t seed = 0;
    long epochs = 0;
    std::string dataset_fingerprint;

    Parameter<T> lift_w, lift_b;
    std::vector<SpectralBlock> blocks;
    Parameter<T> proj1_w, proj1_b, proj2_w, proj2_b;

    // Fixed per-output-channel de-normalization (out = raw * scale + shift),
    // set from training-target statistics so the head works at unit scale.
    // Identity by default; not part of parameters() and never optimized.
    std::vector<T> out_scale, out_shift;

    struct Decoder {
        std::vector<SpectralBlock> blocks;
        Parameter<T> out_w, out_b;  // width -> in_channels reconstruction
    };
    std::unique_ptr<Decoder> decoder;

    FnoModel() = default;
    explicit FnoModel(FnoConfig c, std::uint64_t init_seed,
                      bool with_decoder = false)
        : cfg(c), seed(init_seed) {
        cfg.validate();
        Rng rng(mix_seed(init_seed, 0xF110ULL));
        lift_w = kaiming(rng, cfg.width, cfg.lifted_in());
        lift_b = zeros_param(cfg.width);
        for (std::size_t l = 0; l < cfg.layers; ++l)
            blocks.push_back(make_block(rng));
        proj1_w = kaiming(rng, cfg.width, cfg.width);
        proj1_b = zeros_param(cfg.width);
        proj2_w = kaiming(rng, cfg.out_channels, cfg.width);
        proj2_b = zeros_param(cfg.out_channels);
        out_scale.assign(cfg.out_channels, T(1));
        out_shift.assign(cfg.out_channels, T(0));
        if (with_decoder) {
            decoder = std::make_unique<Decoder>();
            for (std::size_t l = 0; l < cfg.layers; ++l)
                decoder->blocks.push_back(make_block(rng));
            decoder->out_w = kaiming(rng, cfg.in_channels, cfg.width);
            decoder->out_b = zeros_param(cfg.in_channels);
        }
    }

    /// Deep copy (weights, optimizer state, decoder). Used for per-worker
    /// gradient accumulation during batch-parallel training.
    FnoModel clone() const {
        FnoModel c;
        c.cfg = cfg;
        c.stage = stage;
        c.seed = seed;
        c.epochs = epochs;
        c.dataset_fingerprint = dataset_fingerprint;
        c.lift_w = lift_w;
        c.lift_b = lift_b;
        c.blocks = blocks;
        c.proj1_w = proj1_w;
        c.proj1_b = proj1_b;
        c.proj2_w = proj2_w;
        c.proj2_b = proj2_b;
        c.out_scale = out_scale;
        c.out_shift = out_shift;
        if (decoder) c.decoder = std::make_unique<Decoder>(*decoder);
        return c;
    }

    /// All trainable parameters in a stable order (encoder, head, decoder).
    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out{&lift_w, &lift_b};
        for (auto& b : blocks) {
            out.push_back(&b.r);
            out.push_back(&b.wb);
            out.push_back(&b.bb);
        }
        out.push_back(&proj1_w);
        out.push_back(&proj1_b);
        out.push_back(&proj2_w);
        out.push_back(&proj2_b);
        if (decoder) {
            for (auto& b : decoder->blocks) {
                out.push_back(&b.r);
                out.push_back(&b.wb);
                out.push_back(&b.bb);
            }
            out.push_back(&decoder->out_w);
            out.push_back(&decoder->out_b);
        }
        return out;
    }

    /// Lifting + spectral stack; the pretraining latent.
    typename Tape<T>::Id encode(Tape<T>& tape, typename Tape<T>::Id x) {
        auto h = tape.conv1x1(x, tape.param(lift_w), tape.param(lift_b));
        for (auto& b : blocks) h = spectral_block(tape, h, b);
        return h;
    }

    /// Projection head. `backbone_out`, when given, receives the activations
    /// just before the final projection layer.
    typename Tape<T>::Id head(Tape<T>& tape, typename Tape<T>::Id latent,
                              typename Tape<T>::Id* backbone_out = nullptr) {
        auto h = tape.relu(
            tape.conv1x1(latent, tape.param(proj1_w), tape.param(proj1_b)));
        if (backbone_out) *backbone_out = h;
        auto o = tape.conv1x1(h, tape.param(proj2_w), tape.param(proj2_b));
        bool identity = true;
        for (std::size_t c = 0; c < cfg.out_channels; ++c)
            identity = identity && out_scale[c] == T(1) &&
                       out_shift[c] == T(0);
        if (identity) return o;
        // per-channel affine as a constant diagonal 1x1 convolution
        Tensor<T> w({cfg.out_channels, cfg.out_channels});
        Tensor<T> b({cfg.out_channels});
        for (std::size_t c = 0; c < cfg.out_channels; ++c) {
            w[c * cfg.out_channels + c] = out_scale[c];
            b[c] = out_shift[c];
        }
        return tape.conv1x1(o, tape.input(std::move(w)),
                            tape.input(std::move(b)));
    }

    typename Tape<T>::Id forward(Tape<T>& tape, typename Tape<T>::Id x) {
        return head(tape, encode(tape, x));
    }

    typename Tape<T>::Id decode_pretrain(Tape<T>& tape,
                                         typename Tape<T>::Id latent) {
        if (!decoder)
            throw std::logic_error("decode_pretrain: decoder was discarded");
        auto h = latent;
        for (auto& b : decoder->blocks) h = spectral_block(tape, h, b);
        return tape.conv1x1(h, tape.param(decoder->out_w),
                            tape.param(decoder->out_b));
    }

    void discard_decoder() { decoder.reset(); }

    void freeze_encoder() { set_encoder_frozen(true); }
    void unfreeze_encoder() { set_encoder_frozen(false); }

    /// Appends coordinate channels when the config requests them.
    Tensor<T> prepare_input(const Tensor<T>& x) const {
        if (x.shape.size() != 3 || x.shape[0] != cfg.in_channels)
            throw std::invalid_argument("FnoModel: input channel mismatch");
        cfg.validate_resolution(x.shape[1], x.shape[2]);
        if (!cfg.coord_channels) return x;
        const std::size_t h = x.shape[1], w = x.shape[2];
        Tensor<T> out({cfg.lifted_in(), h, w});
        std::copy(x.data.begin(), x.data.end(), out.data.begin());
        auto c = coordinate_channels<T>(h, w);
        std::copy(c.data.begin(), c.data.end(),
                  out.data.begin() + std::ptrdiff_t(x.data.size()));
        return out;
    }

    /// Inference without retaining a graph.
    Tensor<T> infer(const Tensor<T>& x) {
        Tape<T> tape;
        return tape.value(forward(tape, tape.input(prepare_input(x))));
    }

    /// Width-channel activations immediately before the final projection.
    Tensor<T> extract_backbone_features(const Tensor<T>& x) {
        Tape<T> tape;
        typename Tape<T>::Id feat{};
        head(tape, encode(tape, tape.input(prepare_input(x))), &feat);
        return tape.value(feat);
    }

private:
    typename Tape<T>::Id spectral_block(Tape<T>& tape, typename Tape<T>::Id h,
                                        SpectralBlock& b) {
        auto spec = tape.irfft2(
            tape.spectral_mix(tape.rfft2(h), tape.param(b.r), cfg.modes1,
                              cfg.modes2),
            tape.value(h).shape[2]);
        auto bypass = tape.conv1x1(h, tape.param(b.wb), tape.param(b.bb));
        return tape.gelu(tape.add(spec, bypass));
    }

    SpectralBlock make_block(Rng& rng) {
        SpectralBlock b;
        Tensor<T> r({2, cfg.modes1, cfg.modes2, cfg.width, cfg.width}, true);
        const double sd = 1.0 / double(cfg.width);
        for (auto& v : r.data) v = T(sd * rng.gaussian());
        b.r = Parameter<T>(std::move(r));
        b.wb = kaiming(rng, cfg.width, cfg.width);
        b.bb = zeros_param(cfg.width);
        return b;
    }

    static Parameter<T> kaiming(Rng& rng, std::size_t out, std::size_t in) {
        Tensor<T> w({out, in});
        const double bound = std::sqrt(6.0 / double(in));
        for (auto& v : w.data) v = T(rng.uniform(-bound, bound));
        return Parameter<T>(std::move(w));
    }
    static Parameter<T> zeros_param(std::size_t n) {
        return Parameter<T>(Tensor<T>({n}));
    }

    void set_encoder_frozen(bool f) {
        lift_w.frozen = lift_b.frozen = f;
        for (auto& b : blocks) b.r.frozen = b.wb.frozen = b.bb.frozen = f;
    }
};

// ---------------------------------------------------------------------------
// Time-bundled adapter: fold a trajectory's time axis into channels for the
// 2D operator, and unfold the output back into frames.

template <typename T>
Tensor<T> fold_time(const Trajectory& traj) {
    if (traj.frames.empty())
        throw std::invalid_argument("fold_time: empty trajectory");
    const auto& g = traj.frames[0].grid;
    const std::size_t c = traj.frames[0].C;
    Tensor<T> out({traj.frames.size() * c, g.H, g.W});
    std::size_t off = 0;
    for (const auto& f : traj.frames) {
        if (f.C != c || f.grid.H != g.H || f.grid.W != g.W)
            throw std::invalid_argument("fold_time: inhomogeneous frames");
        for (std::size_t i = 0; i < f.values.size(); ++i)
            out[off + i] = T(f.values[i]);
        off += f.values.size();
    }
    return out;
}

template <typename T>
Trajectory unfold_time(const Tensor<T>& x, std::size_t t, std::size_t c,
                       Grid2D grid, double dt_record = 0.0) {
    if (x.shape.size() != 3 || x.shape[0] != t * c || x.shape[1] != grid.H ||
        x.shape[2] != grid.W)
        throw std::invalid_argument("unfold_time: shape mismatch");
    Trajectory traj;
    traj.dt_record = dt_record;
    const std::size_t per = c * grid.H * grid.W;
    for (std::size_t k = 0; k < t; ++k) {
        Field f(c, grid);
        for (std::size_t i = 0; i < per; ++i)
            f.values[i] = float(x[k * per + i]);
        traj.frames.push_back(std::move(f));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Checkpoints: <base>.json manifest + <base>.bin f32 weight payload.

namespace detail {

template <typename T>
void for_each_tensor(FnoModel<T>& m,
                     const std::function<void(const std::string&,
                                              Parameter<T>&)>& fn) {
    fn("lift_w", m.lift_w);
    fn("lift_b", m.lift_b);
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        fn(p + "r", m.blocks[l].r);
        fn(p + "wb", m.blocks[l].wb);
        fn(p + "bb", m.blocks[l].bb);
    }
    fn("proj1_w", m.proj1_w);
    fn("proj1_b", m.proj1_b);
    fn("proj2_w", m.proj2_w);
    fn("proj2_b", m.proj2_b);
    if (m.decoder) {
        for (std::size_t l = 0; l < m.decoder->blocks.size(); ++l) {
            const std::string p = "dec" + std::to_string(l) + ".";
            fn(p + "r", m.decoder->blocks[l].r);
            fn(p + "wb", m.decoder->blocks[l].wb);
            fn(p + "bb", m.decoder->blocks[l].bb);
        }
        fn("dec_out_w", m.decoder->out_w);
        fn("dec_out_b", m.decoder->out_b);
    }
}

}  // namespace detail

template <typename T>
void save_checkpoint(FnoModel<T>& m, const std::string& base) {
    nlohmann::json man;
    man["config"] = m.cfg.to_json();
    man["stage"] = m.stage;
    man["seed"] = m.seed;
    man["epochs"] = m.epochs;
    man["dataset_fingerprint"] = m.dataset_fingerprint;
    man["has_decoder"] = bool(m.decoder);
    man["dtype"] = "f32le";
    {
        std::vector<double> sc(m.out_scale.begin(), m.out_scale.end());
        std::vector<double> sh(m.out_shift.begin(), m.out_shift.end());
        man["out_scale"] = sc;
        man["out_shift"] = sh;
    }
    auto tensors = nlohmann::json::array();
    std::ofstream bin(base + ".bin", std::ios::binary);
    std::size_t off = 0;
    detail::for_each_tensor<T>(m, [&](const std::string& name,
                                      Parameter<T>& p) {
        tensors.push_back({{"name", name},
                           {"shape", p.value.shape},
                           {"complex", p.value.is_complex},
                           {"offset", off}});
        for (T v : p.value.data) {
            const float f = float(v);
            bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
        }
        off += p.value.data.size();
    });
    man["tensors"] = tensors;
    std::ofstream(base + ".json") << man.dump(2) << "\n";
    if (!bin) throw std::runtime_error("save_checkpoint: write failed");
}

template <typename T>
FnoModel<T> load_checkpoint(const std::string& base) {
    std::ifstream mf(base + ".json");
    if (!mf) throw std::runtime_error("load_checkpoint: missing " + base);
    const auto man = nlohmann::json::parse(mf);
    if (man.at("dtype") != "f32le")
        throw std::runtime_error("load_checkpoint: unsupported dtype");
    FnoModel<T> m(FnoConfig::from_json(man.at("config")),
                  man.at("seed").template get<std::uint64_t>(),
                  man.at("has_decoder").template get<bool>());
    m.stage = man.at("stage");
    m.epochs = man.at("epochs");
    m.dataset_fingerprint = man.at("dataset_fingerprint");
    if (man.contains("out_scale")) {
        const auto sc = man.at("out_scale").template get<std::vector<double>>();
        const auto sh = man.at("out_shift").template get<std::vector<double>>();
        if (sc.size() != m.cfg.out_channels || sh.size() != m.cfg.out_channels)
            throw std::runtime_error("load_checkpoint: bad output affine");
        for (std::size_t c = 0; c < sc.size(); ++c) {
            m.out_scale[c] = T(sc[c]);
            m.out_shift[c] = T(sh[c]);
        }
    }

    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: missing payload");
    std::size_t idx = 0;
    detail::for_each_tensor<T>(m, [&](const std::string& name,
                                      Parameter<T>& p) {
        const auto& t = man.at("tensors").at(idx++);
        if (t.at("name") != name ||
            t.at("shape").template get<std::vector<std::size_t>>() !=
                p.value.shape)
            throw std::runtime_error("load_checkpoint: tensor mismatch at " +
                                     name);
        for (auto& v : p.value.data) {
            float f;
            bin.read(reinterpret_cast<char*>(&f), sizeof(float));
            v = T(f);
        }
    });
    if (!bin) throw std::runtime_error("load_checkpoint: truncated payload");
    return m;
}

}  // namespace nopt
