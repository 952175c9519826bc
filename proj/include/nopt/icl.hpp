#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nopt/finetune.hpp"
#include "nopt/fno.hpp"
#include "nopt/threading.hpp"

namespace nopt {

/// Paired unlabeled inputs and true solutions used as in-context examples.
/// Solutions are time-folded tensors ([T*C, H, W]); t_out records T so the
/// channel axis can be split back into locations x channels.
template <typename T>
struct DemoSet {
    std::vector<Tensor<T>> inputs;
    std::vector<Tensor<T>> solutions;
    std::size_t t_out = 1;
    std::string provenance;

    void validate() const {
        if (inputs.empty() || inputs.size() != solutions.size())
            throw std::invalid_argument("DemoSet: need matching X/Y, J >= 1");
    }
};

enum class SimilaritySource { ModelOutput, BackboneFeature };

inline std::string source_name(SimilaritySource s) {
    return s == SimilaritySource::ModelOutput ? "model-output"
                                              : "backbone-feature";
}

struct IclConfig {
    std::size_t k = 5;
    SimilaritySource source = SimilaritySource::ModelOutput;
    std::size_t chunk = 1024;  // query locations per parallel block

    void validate() const {
        if (k == 0) throw std::invalid_argument("IclConfig: k >= 1");
        if (chunk == 0) throw std::invalid_argument("IclConfig: chunk >= 1");
    }
};

namespace detail {

/// [T*C, H, W] -> [L, C] with location index l = (t*H + y)*W + x.
template <typename T>
Tensor<T> to_locations(const Tensor<T>& x, std::size_t t) {
    const std::size_t tc = x.shape[0], h = x.shape[1], w = x.shape[2];
    if (t == 0 || tc % t != 0)
        throw std::invalid_argument("to_locations: time axis mismatch");
    const std::size_t c = tc / t;
    Tensor<T> out({t * h * w, c});
    for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx)
                    out[((tt * h + y) * w + xx) * c + ch] =
                        x[((tt * c + ch) * h + y) * w + xx];
    return out;
}

/// [L, C] -> [T*C, H, W], inverse of to_locations.
template <typename T>
Tensor<T> from_locations(const Tensor<T>& loc, std::size_t t, std::size_t h,
                         std::size_t w) {
    const std::size_t c = loc.shape[1];
    Tensor<T> out({t * c, h, w});
    for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx)
                    out[((tt * c + ch) * h + y) * w + xx] =
                        loc[((tt * h + y) * w + xx) * c + ch];
    return out;
}

/// Top-k nearest demo locations per query location (L1 distance over the
/// feature axis), aggregated as the mean of the true solution values at the
/// selected locations. Ties resolve to the lowest flattened demo index.
template <typename T>
Tensor<T> topk_aggregate(const Tensor<T>& query_feat,   // [Lq, Cf]
                         const Tensor<T>& demo_feat,    // [Ld, Cf]
                         const Tensor<T>& demo_y,       // [Ld, Cy]
                         std::size_t k, std::size_t chunk) {
    const std::size_t lq = query_feat.shape[0], cf = query_feat.shape[1];
    const std::size_t ld = demo_feat.shape[0], cy = demo_y.shape[1];
    if (demo_feat.shape[1] != cf || demo_y.shape[0] != ld)
        throw std::invalid_argument("topk_aggregate: shape mismatch");
    if (k > ld) throw std::invalid_argument("topk_aggregate: k > J*H*W*T");

    Tensor<T> out({lq, cy});
    const std::size_t nblocks = (lq + chunk - 1) / chunk;
    parallel_for(nblocks, [&](std::size_t blk, std::size_t) {
        std::vector<double> bd(k);
        std::vector<std::size_t> bi(k);
        const std::size_t q0 = blk * chunk, q1 = std::min(q0 + chunk, lq);
        for (std::size_t q = q0; q < q1; ++q) {
            std::size_t filled = 0;
            for (std::size_t d = 0; d < ld; ++d) {
                double dist = 0.0;
                for (std::size_t c = 0; c < cf; ++c)
                    dist += std::abs(double(query_feat[q * cf + c]) -
                                     double(demo_feat[d * cf + c]));
                // keep the k smallest; strict < preserves the earliest index
                // on ties because candidates arrive in ascending d
                std::size_t pos = filled;
                while (pos > 0 && dist < bd[pos - 1]) --pos;
                if (pos >= k) continue;
                if (filled < k) ++filled;
                for (std::size_t s = filled - 1; s > pos; --s) {
                    bd[s] = bd[s - 1];
                    bi[s] = bi[s - 1];
                }
                bd[pos] = dist;
                bi[pos] = d;
            }
            for (std::size_t c = 0; c < cy; ++c) {
                double acc = 0.0;
                for (std::size_t s = 0; s < filled; ++s)
                    acc += double(demo_y[bi[s] * cy + c]);
                out[q * cy + c] = T(acc / double(filled));
            }
        }
    });
    return out;
}

}  // namespace detail

/// Algorithm-1 engine. Demo features are computed once at construction and
/// reused across queries; the model and demo tensors are read-only here.
template <typename T>
class IclEngine {
public:
    IclEngine(FnoModel<T>& model, const DemoSet<T>& demos, IclConfig cfg)
        : model_(model), cfg_(cfg), t_out_(demos.t_out) {
        cfg_.validate();
        demos.validate();
        h_ = demos.solutions[0].shape[1];
        w_ = demos.solutions[0].shape[2];
        const std::size_t j = demos.inputs.size();
        std::vector<Tensor<T>> feats(j), ys(j);
        parallel_for(j, [&](std::size_t i, std::size_t) {
            feats[i] = detail::to_locations(features(demos.inputs[i]), t_out_);
            ys[i] = detail::to_locations(demos.solutions[i], t_out_);
        });
        demo_feat_ = concat_rows(feats);
        demo_y_ = concat_rows(ys);
        if (cfg_.k > demo_feat_.shape[0])
            throw std::invalid_argument("IclEngine: k exceeds demo locations");
    }

    /// Prediction for one query input, shape [T*C_out, H, W].
    Tensor<T> predict(const Tensor<T>& x) {
        auto qf = detail::to_locations(features(x), t_out_);
        auto agg = detail::topk_aggregate(qf, demo_feat_, demo_y_, cfg_.k,
                                          cfg_.chunk);
        return detail::from_locations(agg, t_out_, h_, w_);
    }

private:
    Tensor<T> features(const Tensor<T>& x) {
        return cfg_.source == SimilaritySource::ModelOutput
                   ? model_.infer(x)
                   : model_.extract_backbone_features(x);
    }
    static Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
        std::size_t rows = 0;
        for (const auto& p : parts) rows += p.shape[0];
        Tensor<T> out({rows, parts[0].shape[1]});
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p.data.begin(), p.data.end(),
                      out.data.begin() + std::ptrdiff_t(off));
            off += p.data.size();
        }
        return out;
    }

    FnoModel<T>& model_;
    IclConfig cfg_;
    std::size_t t_out_, h_ = 0, w_ = 0;
    Tensor<T> demo_feat_, demo_y_;
};

/// One-shot convenience wrapper around IclEngine.
template <typename T>
Tensor<T> predict_with_demos(FnoModel<T>& model, const Tensor<T>& x,
                             const DemoSet<T>& demos, const IclConfig& cfg) {
    return IclEngine<T>(model, demos, cfg).predict(x);
}

/// Least-squares slope of pred ~ a*target + b over all locations.
template <typename T>
double scale_slope(const Tensor<T>& pred, const Tensor<T>& target) {
    const std::size_t n = pred.data.size();
    if (n != target.data.size() || n < 2)
        throw std::invalid_argument("scale_slope: need >= 2 matching points");
    double mt = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mt += double(target[i]);
        mp += double(pred[i]);
    }
    mt /= double(n);
    mp /= double(n);
    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = double(target[i]) - mt;
        cov += dt * (double(pred[i]) - mp);
        var += dt * dt;
    }
    if (var == 0.0)
        throw std::invalid_argument("scale_slope: zero-variance target");
    return cov / var;
}

/// MSE after each side is normalized by its own largest magnitude.
template <typename T>
double shape_error(const Tensor<T>& pred, const Tensor<T>& target) {
    const std::size_t n = pred.data.size();
    if (n != target.data.size() || n == 0)
        throw std::invalid_argument("shape_error: shape mismatch");
    double map = 0.0, mat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        map = std::max(map, std::abs(double(pred[i])));
        mat = std::max(mat, std::abs(double(target[i])));
    }
    if (map == 0.0 || mat == 0.0)
        throw std::invalid_argument("shape_error: all-zero input");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(pred[i]) / map - double(target[i]) / mat;
        acc += d * d;
    }
    return acc / double(n);
}

struct IclRow {
    std::string pde;
    std::size_t j = 0;
    std::string source;
    std::uint64_t seed = 0;
    double rl2 = 0.0, scale = 0.0, shape = 0.0;
};

inline std::string icl_csv(const std::vector<IclRow>& rows) {
    std::ostringstream os;
    os << "pde,J,source,seed,rl2,scale,shape\n";
    for (const auto& r : rows)
        os << r.pde << "," << r.j << "," << r.source << "," << r.seed << ","
           << r.rl2 << "," << r.scale << "," << r.shape << "\n";
    return os.str();
}

/// Demo-count sweep over an OOD query set. For each J and seed, J demos are
/// drawn from the pool without replacement and evaluated with both
/// similarity sources; J = 0 is the plain model baseline.
template <typename T>
std::vector<IclRow> icl_sweep(FnoModel<T>& model, const std::string& pde,
                              const std::vector<Tensor<T>>& queries,
                              const std::vector<Tensor<T>>& truths,
                              const DemoSet<T>& pool, std::size_t k,
                              const std::vector<std::size_t>& j_list,
                              const std::vector<std::uint64_t>& seeds,
                              std::size_t chunk = 1024) {
    pool.validate();
    if (queries.empty() || queries.size() != truths.size())
        throw std::invalid_argument("icl_sweep: bad query set");
    std::vector<IclRow> rows;

    auto eval = [&](std::size_t j, std::uint64_t seed,
                    SimilaritySource source) {
        IclRow row{pde, j, source_name(source), seed};
        std::vector<double> rl2(queries.size());
        std::vector<Tensor<T>> preds(queries.size());
        if (j == 0) {
            parallel_for(queries.size(), [&](std::size_t q, std::size_t) {
                preds[q] = model.infer(queries[q]);
            });
        } else {
            if (j > pool.inputs.size())
                throw std::invalid_argument("icl_sweep: pool exhausted");
            std::vector<std::size_t> idx(pool.inputs.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            Rng rng(mix_seed(seed, 0x1C1));
            rng.shuffle(idx.begin(), idx.end());
            DemoSet<T> demos;
            demos.t_out = pool.t_out;
            demos.provenance = pool.provenance;
            for (std::size_t i = 0; i < j; ++i) {
                demos.inputs.push_back(pool.inputs[idx[i]]);
                demos.solutions.push_back(pool.solutions[idx[i]]);
            }
            IclConfig cfg{k, source, chunk};
            IclEngine<T> engine(model, demos, cfg);
            for (std::size_t q = 0; q < queries.size(); ++q)
                preds[q] = engine.predict(queries[q]);
        }
        double srl2 = 0.0, sscale = 0.0, sshape = 0.0;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            srl2 += relative_l2(preds[q], truths[q]);
            sscale += scale_slope(preds[q], truths[q]);
            sshape += shape_error(preds[q], truths[q]);
        }
        row.rl2 = srl2 / double(queries.size());
        row.scale = sscale / double(queries.size());
        row.shape = sshape / double(queries.size());
        rows.push_back(row);
    };

    for (std::size_t j : j_list)
        for (std::uint64_t seed : seeds) {
            eval(j, seed, SimilaritySource::ModelOutput);
            eval(j, seed, SimilaritySource::BackboneFeature);
        }
    return rows;
}

}  // namespace nopt
