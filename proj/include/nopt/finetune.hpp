#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nopt/dataset.hpp"
#include "nopt/fno.hpp"
#include "nopt/pretrain.hpp"
#include "nopt/threading.hpp"

namespace nopt {

/// Relative L2 of a single prediction: ||pred - truth|| / ||truth||.
template <typename T>
double relative_l2(const Tensor<T>& pred, const Tensor<T>& truth) {
    if (!pred.same_shape(truth))
        throw std::invalid_argument("relative_l2: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = double(pred[i]) - double(truth[i]);
        num += d * d;
        den += double(truth[i]) * double(truth[i]);
    }
    if (den == 0.0)
        throw std::invalid_argument("relative_l2: zero-norm target");
    return std::sqrt(num / den);
}

enum class InitMode { Random, Checkpoint, FrozenEncoder };

inline std::string init_mode_name(InitMode m) {
    return m == InitMode::Random       ? "random"
           : m == InitMode::Checkpoint ? "pretrained"
                                       : "frozen";
}

struct TrainRun {
    InitMode init = InitMode::Random;
    std::string checkpoint;  // for Checkpoint / FrozenEncoder modes
    std::size_t budget = 32;
    long epochs = 100;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::string pde = "poisson";

    std::size_t batch() const { return std::min<std::size_t>(32, budget); }
};

struct EvalReport {
    double train_rl2 = 0.0;
    double test_rl2 = 0.0;
    std::vector<double> rollout_rl2;  // per unrolled step, possibly empty
    double secs = 0.0;
    std::uint64_t seed = 0;

    double gap() const { return test_rl2 - train_rl2; }

    /// `pde,init,n,seed,train_rl2,test_rl2,gap,rollout_step,rollout_rl2,secs`
    /// — one row per rollout step, or a single row with empty step fields.
    std::string csv_rows(const std::string& pde, const std::string& init,
                         std::size_t n) const {
        std::ostringstream os;
        auto head = [&]() -> std::ostream& {
            os << pde << "," << init << "," << n << "," << seed << ","
               << train_rl2 << "," << test_rl2 << "," << gap() << ",";
            return os;
        };
        if (rollout_rl2.empty()) {
            head() << ",," << secs << "\n";
        } else {
            for (std::size_t s = 0; s < rollout_rl2.size(); ++s)
                head() << (s + 1) << "," << rollout_rl2[s] << "," << secs
                       << "\n";
        }
        return os.str();
    }
    static const char* csv_header() {
        return "pde,init,n,seed,train_rl2,test_rl2,gap,rollout_step,"
               "rollout_rl2,secs\n";
    }
};

namespace detail {

/// One supervised batch: mean relative-L2 objective, gradients accumulated
/// into the model (per-worker clones folded back in worker order).
template <typename T>
double supervised_step(FnoModel<T>& model,
                       const std::vector<const Tensor<T>*>& xs,
                       const std::vector<const Tensor<T>*>& ys) {
    const std::size_t b = xs.size();
    const std::size_t nw = std::min(max_workers(), b);
    std::vector<FnoModel<T>> clones;
    std::vector<FnoModel<T>*> models{&model};
    for (std::size_t w = 1; w < nw; ++w) clones.push_back(model.clone());
    for (auto& c : clones) models.push_back(&c);

    std::vector<double> losses(b, 0.0);
    parallel_for(
        b,
        [&](std::size_t i, std::size_t worker) {
            FnoModel<T>& m = *models[worker];
            Tape<T> tape;
            auto pred =
                m.forward(tape, tape.input(m.prepare_input(*xs[i])));
            auto loss = tape.rel_l2(pred, tape.input(*ys[i]));
            losses[i] = double(tape.value(loss)[0]);
            tape.backward(loss, T(1.0 / double(b)));
        },
        nw);
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

template <typename T>
double mean_rl2(FnoModel<T>& model, const std::vector<Tensor<T>>& xs,
                const std::vector<Tensor<T>>& ys) {
    std::vector<double> errs(xs.size());
    parallel_for(xs.size(), [&](std::size_t i, std::size_t) {
        errs[i] = relative_l2(model.infer(xs[i]), ys[i]);
    });
    double acc = 0.0;
    for (double e : errs) acc += e;
    return xs.empty() ? 0.0 : acc / double(xs.size());
}

}  // namespace detail

/// Supervised training under a labeled-sample budget. The model arrives
/// initialized per run.init (the caller loads checkpoints); FrozenEncoder
/// is applied here. Inputs are normalized with training-split statistics;
/// targets stay in physical units.
template <typename T>
EvalReport train_supervised(const Dataset& ds, FnoModel<T>& model,
                            const TrainRun& run) {
    const auto t0 = std::chrono::steady_clock::now();
    auto parts = split(ds, 0.8, 0.1, 0.1, run.seed);
    if (run.budget == 0 || run.budget > parts[0].size())
        throw std::invalid_argument("train_supervised: budget exceeds split");
    parts[0].samples.resize(run.budget);

    auto st = channel_stats(parts[0]);
    auto prep = [&](const Dataset& part, std::vector<Tensor<T>>& xs,
                    std::vector<Tensor<T>>& ys) {
        for (const auto& s : part.samples) {
            if (!s.labeled())
                throw std::invalid_argument(
                    "train_supervised: dataset not labeled");
            Trajectory in = s.input;
            for (auto& f : in.frames) normalize(f, st);
            xs.push_back(fold_time<T>(in));
            ys.push_back(fold_time<T>(*s.solution));
        }
    };
    std::vector<Tensor<T>> train_x, train_y, test_x, test_y;
    prep(parts[0], train_x, train_y);
    prep(parts[2], test_x, test_y);

    // Fix the model's output affine to the training targets' per-channel
    // statistics so the head trains at unit scale while the objective and
    // all reported errors stay in physical units.
    {
        const std::size_t cy = train_y[0].shape[0];
        const std::size_t hw = train_y[0].shape[1] * train_y[0].shape[2];
        std::vector<double> mu(cy, 0.0), var(cy, 0.0);
        for (const auto& y : train_y)
            for (std::size_t c = 0; c < cy; ++c)
                for (std::size_t i = 0; i < hw; ++i)
                    mu[c] += double(y[c * hw + i]);
        for (auto& v : mu) v /= double(train_y.size() * hw);
        for (const auto& y : train_y)
            for (std::size_t c = 0; c < cy; ++c)
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = double(y[c * hw + i]) - mu[c];
                    var[c] += d * d;
                }
        for (std::size_t c = 0; c < cy; ++c) {
            const double sd =
                std::sqrt(var[c] / double(train_y.size() * hw));
            model.out_scale[c] = T(sd > 0.0 ? sd : 1.0);
            model.out_shift[c] = T(mu[c]);
        }
    }

    if (run.init == InitMode::FrozenEncoder) model.freeze_encoder();

    Adam<T> opt(model.parameters(), run.lr);
    std::vector<std::size_t> order(train_x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t bs = run.batch();
    for (long e = 0; e < run.epochs; ++e) {
        Rng shuf(mix_seed(run.seed, 0xF17E + std::uint64_t(e)));
        shuf.shuffle(order.begin(), order.end());
        for (std::size_t at = 0; at < order.size(); at += bs) {
            std::vector<const Tensor<T>*> xs, ys;
            for (std::size_t i = at; i < std::min(at + bs, order.size()); ++i) {
                xs.push_back(&train_x[order[i]]);
                ys.push_back(&train_y[order[i]]);
            }
            detail::supervised_step(model, xs, ys);
            opt.step();
        }
    }

    EvalReport rep;
    rep.seed = run.seed;
    rep.train_rl2 = detail::mean_rl2(model, train_x, train_y);
    rep.test_rl2 = detail::mean_rl2(model, test_x, test_y);
    rep.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             t0)
                   .count();
    model.stage = "finetuned";
    model.epochs = run.epochs;
    model.dataset_fingerprint = dataset_fingerprint(ds);
    return rep;
}

/// Autoregressive forecasting: the window's oldest frame is dropped and the
/// prediction appended, `steps` times. The model maps T_in*C channels to C.
/// Returns the predicted trajectory (after the window) and the per-step
/// relative-L2 against ground truth.
template <typename T>
std::pair<Trajectory, std::vector<double>> rollout(
    FnoModel<T>& model, const Trajectory& window, const Trajectory& truth,
    std::size_t steps, const ChannelStats* stats = nullptr) {
    if (truth.frames.size() < steps)
        throw std::invalid_argument("rollout: ground truth shorter than steps");
    if (window.frames.empty())
        throw std::invalid_argument("rollout: empty window");
    const std::size_t c = window.frames[0].C;
    Grid2D grid = window.frames[0].grid;

    Trajectory cur = window;
    Trajectory out;
    out.dt_record = truth.dt_record;
    std::vector<double> errs;
    for (std::size_t s = 0; s < steps; ++s) {
        Trajectory fed = cur;
        if (stats)
            for (auto& f : fed.frames) normalize(f, *stats);
        auto pred = model.infer(fold_time<T>(fed));
        auto frame = unfold_time(pred, 1, c, grid).frames[0];
        errs.push_back(
            relative_l2(pred, fold_time<T>(Trajectory(truth.frames[s]))));
        cur.frames.erase(cur.frames.begin());
        cur.frames.push_back(frame);
        out.frames.push_back(std::move(frame));
    }
    return {std::move(out), std::move(errs)};
}

}  // namespace nopt
