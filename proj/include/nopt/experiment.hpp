#pragma once

#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nopt/finetune.hpp"
#include "nopt/generate.hpp"
#include "nopt/icl.hpp"
#include "nopt/pretrain.hpp"

namespace nopt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration document
// ---------------------------------------------------------------------------

/// Recursively rejects keys outside the schema, reporting the offending
/// dotted path. The schema maps object keys to sub-schemas; a null schema
/// value accepts any leaf.
inline void check_keys(const json& doc, const json& schema,
                       const std::string& path = "") {
    if (!doc.is_object()) return;
    for (const auto& [key, val] : doc.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!schema.contains(key))
            throw std::invalid_argument("unknown config key: " + here);
        if (val.is_object()) check_keys(val, schema.at(key), here);
    }
}

inline const json& config_schema() {
    static const json s = {
        {"out_dir", nullptr},
        {"pde", {{"name", nullptr}, {"h", nullptr}, {"w", nullptr}}},
        {"generate",
         {{"n", nullptr}, {"labeled", nullptr}, {"seed", nullptr},
          {"stage", nullptr}}},
        {"model",
         {{"width", nullptr}, {"modes1", nullptr}, {"modes2", nullptr},
          {"layers", nullptr}, {"seed", nullptr}}},
        {"pretrain",
         {{"mask_ratio", nullptr}, {"patch", nullptr}, {"blur_min", nullptr},
          {"blur_max", nullptr}, {"epochs", nullptr}, {"batch", nullptr},
          {"lr", nullptr}, {"seed", nullptr}}},
        {"finetune",
         {{"budgets", nullptr}, {"seeds", nullptr}, {"inits", nullptr},
          {"epochs", nullptr}, {"lr", nullptr}, {"rollout_steps", nullptr}}},
        {"icl",
         {{"j", nullptr}, {"k", nullptr}, {"sources", nullptr},
          {"chunk", nullptr}, {"seeds", nullptr}, {"n_query", nullptr},
          {"pool", nullptr}}},
    };
    return s;
}

struct ExperimentConfig {
    json doc;

    static ExperimentConfig from_json(const json& j) {
        check_keys(j, config_schema());
        ExperimentConfig c;
        c.doc = j;
        return c;
    }
    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config not found: " + path);
        return from_json(json::parse(f));
    }

    template <typename T>
    T get(const std::string& a, const std::string& b, T fallback) const {
        if (doc.contains(a) && doc.at(a).contains(b))
            return doc.at(a).at(b).template get<T>();
        return fallback;
    }
    std::string out_dir() const {
        return doc.value("out_dir", std::string("runs"));
    }
    std::string pde() const { return get<std::string>("pde", "name", "poisson"); }
    std::size_t h() const { return get<std::size_t>("pde", "h", 64); }
    std::size_t w() const { return get<std::size_t>("pde", "w", 64); }
};

/// FNV-1a over the canonical (sorted-key, whitespace-free) serialization, so
/// the hash is invariant to key order and formatting but sensitive to every
/// value.
inline std::string config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

// ---------------------------------------------------------------------------
// Run ledger
// ---------------------------------------------------------------------------

/// Append-only JSONL record of completed runs, used for idempotent reruns.
/// Appends take an exclusive flock so concurrent leaf runs stay well-formed.
class RunLedger {
public:
    explicit RunLedger(std::string path) : path_(std::move(path)) {}

    bool completed(const std::string& hash) const {
        std::ifstream f(path_);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.value("hash", "") == hash) return true;
        }
        return false;
    }

    void record(const std::string& hash, const std::string& stage,
                const std::vector<std::string>& artifacts, double secs) const {
        json j = {{"hash", hash},
                  {"stage", stage},
                  {"artifacts", artifacts},
                  {"secs", secs}};
        std::FILE* f = std::fopen(path_.c_str(), "a");
        if (!f) throw std::runtime_error("ledger: cannot open " + path_);
        flock(fileno(f), LOCK_EX);
        const std::string line = j.dump() + "\n";
        std::fwrite(line.data(), 1, line.size(), f);
        std::fflush(f);
        flock(fileno(f), LOCK_UN);
        std::fclose(f);
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// ---------------------------------------------------------------------------
// SVG line plots
// ---------------------------------------------------------------------------

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

/// Dependency-free SVG line plot: auto-scaled axes, tick labels, legend.
inline std::string svg_line_plot(const std::string& title,
                                 const std::string& xlabel,
                                 const std::string& ylabel,
                                 const std::vector<PlotSeries>& series) {
    const double W = 640, H = 440, ml = 70, mr = 20, mt = 40, mb = 50;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (x0 > x1) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
    if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
    if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
       << "' height='" << H << "' font-family='sans-serif' font-size='12'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' "
          "font-size='15'>" << title << "</text>\n";
    // axes
    os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr
       << "' y2='" << H - mb << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
       << H - mb << "' stroke='black'/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = x0 + (x1 - x0) * t / 4.0;
        const double fy = y0 + (y1 - y0) * t / 4.0;
        os << "<text x='" << px(fx) << "' y='" << H - mb + 18
           << "' text-anchor='middle'>" << fx << "</text>\n";
        os << "<text x='" << ml - 8 << "' y='" << py(fy) + 4
           << "' text-anchor='end'>" << fy << "</text>\n";
        os << "<line x1='" << px(fx) << "' y1='" << H - mb << "' x2='"
           << px(fx) << "' y2='" << H - mb + 5 << "' stroke='black'/>\n";
        os << "<line x1='" << ml - 5 << "' y1='" << py(fy) << "' x2='" << ml
           << "' y2='" << py(fy) << "' stroke='black'/>\n";
    }
    os << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
       << "' text-anchor='middle'>" << xlabel << "</text>\n";
    os << "<text x='16' y='" << (mt + H - mb) / 2
       << "' text-anchor='middle' transform='rotate(-90 16 "
       << (mt + H - mb) / 2 << ")'>" << ylabel << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* col = palette[si % 6];
        os << "<polyline fill='none' stroke='" << col << "' stroke-width='2' "
              "points='";
        for (auto [x, y] : series[si].points)
            os << px(x) << "," << py(y) << " ";
        os << "'/>\n";
        for (auto [x, y] : series[si].points)
            os << "<circle cx='" << px(x) << "' cy='" << py(y)
               << "' r='3' fill='" << col << "'/>\n";
        os << "<text x='" << W - mr - 150 << "' y='" << mt + 16 * double(si)
           << "' fill='" << col << "'>" << series[si].name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

/// Minimal CSV reader: header row + unquoted fields, as emitted by this
/// toolkit. Returns rows as header-keyed string maps.
inline std::vector<std::map<std::string, std::string>> read_csv(
    const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("csv not found: " + path);
    std::string line;
    auto split_line = [](const std::string& l) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : l) {
            if (c == ',') {
                out.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        out.push_back(cur);
        return out;
    };
    if (!std::getline(f, line)) throw std::runtime_error("empty csv: " + path);
    const auto header = split_line(line);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("ragged csv row in " + path);
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i)
            row[header[i]] = cells[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Orchestrator
// ---------------------------------------------------------------------------

/// Stage-by-stage experiment driver. Every command derives a config hash
/// from its own inputs; completed hashes are skipped unless forced.
class Orchestrator {
public:
    explicit Orchestrator(ExperimentConfig cfg, bool force = false)
        : cfg_(std::move(cfg)),
          force_(force),
          ledger_(cfg_.out_dir() + "/ledger.jsonl") {
        namespace fs = std::filesystem;
        for (const char* d : {"", "/datasets", "/checkpoints", "/reports"})
            fs::create_directories(cfg_.out_dir() + d);
    }

    const RunLedger& ledger() const { return ledger_; }

    /// Generates a dataset; returns its base path (without extension).
    std::string cmd_generate(std::size_t n, bool labeled, std::uint64_t seed,
                             const std::string& stage, bool* skipped = nullptr,
                             CostReport* cost = nullptr) {
        const Pde pde = pde_from_name(cfg_.pde());
        const json key = {{"cmd", "generate"}, {"pde", cfg_.pde()},
                          {"h", cfg_.h()},    {"w", cfg_.w()},
                          {"n", n},           {"labeled", labeled},
                          {"seed", seed},     {"stage", stage}};
        const std::string hash = config_hash(key);
        const std::string base = cfg_.out_dir() + "/datasets/" + cfg_.pde() +
                                 "-" + stage + (labeled ? "-lab" : "-unlab") +
                                 "-n" + std::to_string(n) + "-s" +
                                 std::to_string(seed);
        if (done(hash, skipped) && cost == nullptr) return base;
        const auto t0 = std::chrono::steady_clock::now();
        GenOptions opt;
        opt.H = cfg_.h();
        opt.W = cfg_.w();
        Dataset ds =
            generate(pde, n, stage_range(pde, stage), labeled, seed, opt, cost);
        write_dataset(ds, base);
        ledger_.record(hash, "generate", {base + ".json", base + ".bin"},
                       since(t0));
        return base;
    }

    /// Pretrains on an unlabeled dataset; returns the checkpoint base path.
    std::string cmd_pretrain(const std::string& dataset_base,
                             bool* skipped = nullptr) {
        PretrainConfig pc;
        pc.mask.ratio = cfg_.get<double>("pretrain", "mask_ratio", 0.7);
        pc.mask.patch = cfg_.get<std::size_t>("pretrain", "patch", 1);
        pc.blur.sigma_min = cfg_.get<double>("pretrain", "blur_min", 0.0);
        pc.blur.sigma_max = cfg_.get<double>("pretrain", "blur_max", 4.0);
        pc.epochs = cfg_.get<long>("pretrain", "epochs", 200);
        pc.batch = cfg_.get<std::size_t>("pretrain", "batch", 32);
        pc.lr = cfg_.get<double>("pretrain", "lr", 1e-3);
        pc.seed = cfg_.get<std::uint64_t>("pretrain", "seed", 0);
        return pretrain_at(dataset_base, pc, "", skipped);
    }

    /// Pretrain with explicit proxy-task knobs (used by cmd_sweep).
    std::string pretrain_at(const std::string& dataset_base,
                            const PretrainConfig& pc, const std::string& tag,
                            bool* skipped = nullptr) {
        const json key = {{"cmd", "pretrain"},
                          {"dataset", dataset_base},
                          {"mask_ratio", pc.mask.ratio},
                          {"patch", pc.mask.patch},
                          {"blur_min", pc.blur.sigma_min},
                          {"blur_max", pc.blur.sigma_max},
                          {"epochs", pc.epochs},
                          {"batch", pc.batch},
                          {"lr", pc.lr},
                          {"seed", pc.seed},
                          {"model", model_key()}};
        const std::string hash = config_hash(key);
        const std::string base = cfg_.out_dir() + "/checkpoints/pretrain-" +
                                 (tag.empty() ? hash.substr(0, 12) : tag);
        if (done(hash, skipped)) return base;
        const auto t0 = std::chrono::steady_clock::now();
        Dataset ds = read_dataset(dataset_base);
        auto model = make_model(ds.T * ds.C, out_channels_for(ds), true);
        train_pretrain(ds, model, pc, base + "-curve.csv");
        save_checkpoint(model, base);
        ledger_.record(hash, "pretrain",
                       {base + ".json", base + ".bin", base + "-curve.csv"},
                       since(t0));
        return base;
    }

    /// Budget x seed x init sweep on a labeled dataset; returns the CSV path.
    std::string cmd_finetune(const std::string& dataset_base,
                             const std::string& pretrain_ckpt,
                             bool* skipped = nullptr) {
        const json ft = cfg_.doc.value("finetune", json::object());
        const std::vector<std::size_t> budgets =
            ft.value("budgets", std::vector<std::size_t>{16, 32, 64});
        const std::vector<std::uint64_t> seeds =
            ft.value("seeds", std::vector<std::uint64_t>{1, 2, 3});
        const std::vector<std::string> inits =
            ft.value("inits", std::vector<std::string>{"random", "pretrained"});
        const json key = {{"cmd", "finetune"},  {"dataset", dataset_base},
                          {"ckpt", pretrain_ckpt}, {"ft", ft},
                          {"model", model_key()}};
        const std::string hash = config_hash(key);
        const std::string csv = cfg_.out_dir() + "/reports/finetune-" +
                                cfg_.pde() + ".csv";
        if (done(hash, skipped)) return csv;
        const auto t0 = std::chrono::steady_clock::now();
        Dataset ds = read_dataset(dataset_base);

        std::ofstream out(csv);
        out << EvalReport::csv_header();
        std::vector<std::string> artifacts{csv};
        for (const std::string& init : inits)
            for (std::size_t budget : budgets)
                for (std::uint64_t seed : seeds) {
                    TrainRun run;
                    run.init = init == "random" ? InitMode::Random
                               : init == "frozen" ? InitMode::FrozenEncoder
                                                  : InitMode::Checkpoint;
                    run.checkpoint =
                        run.init == InitMode::Random ? "" : pretrain_ckpt;
                    run.budget = budget;
                    run.epochs = ft.value("epochs", 100L);
                    run.lr = ft.value("lr", 1e-3);
                    run.seed = seed;
                    run.pde = cfg_.pde();
                    auto model = model_for(run, ds);
                    auto rep = train_supervised(ds, model, run);
                    out << rep.csv_rows(cfg_.pde(), init, budget);
                    if (init != "random" && budget == budgets.back() &&
                        seed == seeds.front()) {
                        const std::string ck = cfg_.out_dir() +
                                               "/checkpoints/finetune-" +
                                               cfg_.pde() + "-" + init;
                        save_checkpoint(model, ck);
                        artifacts.push_back(ck + ".json");
                    }
                }
        out.close();
        ledger_.record(hash, "finetune", artifacts, since(t0));
        return csv;
    }

    /// Evaluates a checkpoint on a labeled dataset's test split.
    EvalReport cmd_eval(const std::string& dataset_base,
                        const std::string& ckpt, std::uint64_t seed = 1) {
        Dataset ds = read_dataset(dataset_base);
        auto model = load_checkpoint<float>(ckpt);
        if (model.decoder) model.discard_decoder();
        auto parts = split(ds, 0.8, 0.1, 0.1, seed);
        auto st = channel_stats(parts[0]);
        std::vector<Tensor<float>> xs, ys;
        for (const auto& s : parts[2].samples) {
            Trajectory in = s.input;
            for (auto& f : in.frames) normalize(f, st);
            xs.push_back(fold_time<float>(in));
            ys.push_back(fold_time<float>(*s.solution));
        }
        EvalReport rep;
        rep.seed = seed;
        double acc = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i)
            acc += relative_l2(model.infer(xs[i]), ys[i]);
        rep.test_rl2 = acc / double(xs.size());
        return rep;
    }

    /// Demo-count sweep on an OOD set; returns the CSV path.
    std::string cmd_icl(const std::string& ckpt, const std::string& train_base,
                        bool* skipped = nullptr) {
        const json ic = cfg_.doc.value("icl", json::object());
        const json key = {{"cmd", "icl"}, {"ckpt", ckpt}, {"icl", ic},
                          {"train", train_base}};
        const std::string hash = config_hash(key);
        const std::string csv =
            cfg_.out_dir() + "/reports/icl-" + cfg_.pde() + ".csv";
        if (done(hash, skipped)) return csv;
        const auto t0 = std::chrono::steady_clock::now();

        const std::size_t nq = ic.value("n_query", std::size_t{16});
        const std::size_t npool = ic.value("pool", std::size_t{64});
        // OOD queries and the demo pool come from the same OOD range on
        // disjoint seed streams
        const std::string qbase =
            cmd_generate(nq, true, mix_seed(77, 1), "ood");
        const std::string pbase =
            cmd_generate(npool, true, mix_seed(77, 2), "ood");
        Dataset qds = read_dataset(qbase);
        Dataset pds = read_dataset(pbase);
        Dataset tds = read_dataset(train_base);
        auto st = channel_stats(split(tds, 0.8, 0.1, 0.1, 1)[0]);

        auto model = load_checkpoint<float>(ckpt);
        if (model.decoder) model.discard_decoder();
        auto prep = [&](const Dataset& ds, std::vector<Tensor<float>>& xs,
                        std::vector<Tensor<float>>& ys) {
            for (const auto& s : ds.samples) {
                Trajectory in = s.input;
                for (auto& f : in.frames) normalize(f, st);
                xs.push_back(fold_time<float>(in));
                ys.push_back(fold_time<float>(*s.solution));
            }
        };
        std::vector<Tensor<float>> qx, qy, px, py;
        prep(qds, qx, qy);
        prep(pds, px, py);
        DemoSet<float> pool;
        pool.inputs = px;
        pool.solutions = py;
        pool.t_out = pds.sol_T;
        pool.provenance = pds.param_ranges.dump();

        auto rows = icl_sweep(
            model, cfg_.pde(), qx, qy, pool,
            ic.value("k", std::size_t{5}),
            ic.value("j", std::vector<std::size_t>{0, 4, 16, 32}),
            ic.value("seeds", std::vector<std::uint64_t>{1, 2, 3}),
            ic.value("chunk", std::size_t{4096}));
        std::ofstream out(csv);
        out << icl_csv(rows);
        out.close();
        ledger_.record(hash, "icl", {csv}, since(t0));
        return csv;
    }

    /// Times unlabeled vs labeled generation; returns the CSV path.
    std::string cmd_cost(std::size_t n, bool* skipped = nullptr) {
        const json key = {{"cmd", "cost"}, {"pde", cfg_.pde()}, {"n", n},
                          {"h", cfg_.h()}, {"w", cfg_.w()}};
        const std::string hash = config_hash(key);
        const std::string csv =
            cfg_.out_dir() + "/reports/cost-" + cfg_.pde() + ".csv";
        if (done(hash, skipped)) return csv;
        const auto t0 = std::chrono::steady_clock::now();
        CostReport unlab, lab;
        cmd_generate(n, false, 900, "pretrain", nullptr, &unlab);
        cmd_generate(n, true, 901, "train", nullptr, &lab);
        CostReport rep;
        rep.pde = cfg_.pde();
        rep.n = n;
        rep.unlabeled_secs = unlab.unlabeled_secs;
        rep.labeled_secs = lab.labeled_secs;
        rep.host = host_descriptor();
        std::ofstream out(csv);
        out << CostReport::csv_header() << "\n" << rep.csv_row() << "\n";
        out.close();
        ledger_.record(hash, "cost", {csv}, since(t0));
        return csv;
    }

    /// Proxy-task grid: one pretrain run per (mask ratio, blur range) pair.
    std::vector<std::string> cmd_sweep(const std::string& dataset_base,
                                       const std::vector<double>& ratios,
                                       const std::vector<std::pair<double, double>>& blurs) {
        std::vector<std::string> out;
        for (double rho : ratios)
            for (auto [lo, hi] : blurs) {
                PretrainConfig pc;
                pc.mask.ratio = rho;
                pc.blur.sigma_min = lo;
                pc.blur.sigma_max = hi;
                pc.epochs = cfg_.get<long>("pretrain", "epochs", 200);
                pc.batch = cfg_.get<std::size_t>("pretrain", "batch", 32);
                pc.lr = cfg_.get<double>("pretrain", "lr", 1e-3);
                pc.seed = cfg_.get<std::uint64_t>("pretrain", "seed", 0);
                std::ostringstream tag;
                tag << "sweep-m" << rho << "-b" << lo << "-" << hi;
                out.push_back(pretrain_at(dataset_base, pc, tag.str()));
            }
        return out;
    }

    /// Renders SVG curves from the finetune / icl CSVs.
    std::vector<std::string> cmd_report() {
        namespace fs = std::filesystem;
        std::vector<std::string> outputs;
        const std::string rep = cfg_.out_dir() + "/reports";
        const std::string ft = rep + "/finetune-" + cfg_.pde() + ".csv";
        if (fs::exists(ft)) {
            auto rows = read_csv(ft);
            // mean over seeds per (init, budget)
            std::map<std::string, std::map<double, std::pair<double, int>>>
                err, gap, roll;
            for (const auto& r : rows) {
                const double n = std::stod(r.at("n"));
                auto& e = err[r.at("init")][n];
                e.first += std::stod(r.at("test_rl2"));
                e.second += 1;
                auto& g = gap[r.at("init")][n];
                g.first += std::stod(r.at("gap"));
                g.second += 1;
                if (!r.at("rollout_step").empty()) {
                    auto& rr = roll[r.at("init")][std::stod(r.at("rollout_step"))];
                    rr.first += std::stod(r.at("rollout_rl2"));
                    rr.second += 1;
                }
            }
            auto to_series = [](const auto& m) {
                std::vector<PlotSeries> out;
                for (const auto& [name, pts] : m) {
                    PlotSeries s{name, {}};
                    for (const auto& [x, acc] : pts)
                        s.points.push_back({x, acc.first / acc.second});
                    out.push_back(std::move(s));
                }
                return out;
            };
            outputs.push_back(write_svg(
                rep + "/error-vs-budget.svg",
                svg_line_plot("Test error vs labeled budget", "labeled samples",
                              "relative L2", to_series(err))));
            outputs.push_back(write_svg(
                rep + "/gap-vs-budget.svg",
                svg_line_plot("Generalization gap vs labeled budget",
                              "labeled samples", "test - train relative L2",
                              to_series(gap))));
            if (!roll.empty())
                outputs.push_back(write_svg(
                    rep + "/rollout.svg",
                    svg_line_plot("Rollout error per step", "step",
                                  "relative L2", to_series(roll))));
        }
        const std::string ic = rep + "/icl-" + cfg_.pde() + ".csv";
        if (fs::exists(ic)) {
            auto rows = read_csv(ic);
            std::map<std::string, std::map<double, std::pair<double, int>>> err;
            for (const auto& r : rows) {
                auto& e = err[r.at("source")][std::stod(r.at("J"))];
                e.first += std::stod(r.at("rl2"));
                e.second += 1;
            }
            std::vector<PlotSeries> series;
            for (const auto& [name, pts] : err) {
                PlotSeries s{name, {}};
                for (const auto& [x, acc] : pts)
                    s.points.push_back({x, acc.first / acc.second});
                series.push_back(std::move(s));
            }
            outputs.push_back(write_svg(
                rep + "/error-vs-demos.svg",
                svg_line_plot("OOD error vs number of demos", "demos J",
                              "relative L2", series)));
        }
        return outputs;
    }

private:
    json model_key() const {
        return {{"width", cfg_.get<std::size_t>("model", "width", 32)},
                {"modes1", cfg_.get<std::size_t>("model", "modes1", 12)},
                {"modes2", cfg_.get<std::size_t>("model", "modes2", 12)},
                {"layers", cfg_.get<std::size_t>("model", "layers", 4)},
                {"seed", cfg_.get<std::uint64_t>("model", "seed", 0)}};
    }
    FnoModel<float> make_model(std::size_t in_c, std::size_t out_c,
                               bool with_decoder) const {
        FnoConfig mc;
        mc.in_channels = in_c;
        mc.out_channels = out_c;
        mc.width = cfg_.get<std::size_t>("model", "width", 32);
        mc.modes1 = cfg_.get<std::size_t>("model", "modes1", 12);
        mc.modes2 = cfg_.get<std::size_t>("model", "modes2", 12);
        mc.layers = cfg_.get<std::size_t>("model", "layers", 4);
        return FnoModel<float>(mc, cfg_.get<std::uint64_t>("model", "seed", 0),
                               with_decoder);
    }
    std::size_t out_channels_for(const Dataset& ds) const {
        return ds.sol_T && ds.sol_C ? ds.sol_T * ds.sol_C : 1;
    }
    FnoModel<float> model_for(const TrainRun& run, const Dataset& ds) const {
        if (run.init == InitMode::Random)
            return make_model(ds.T * ds.C, ds.sol_T * ds.sol_C, false);
        auto m = load_checkpoint<float>(run.checkpoint);
        if (m.decoder) m.discard_decoder();
        return m;
    }
    bool done(const std::string& hash, bool* skipped) const {
        const bool hit = !force_ && ledger_.completed(hash);
        if (skipped) *skipped = hit;
        return hit;
    }
    static double since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             t0)
            .count();
    }
    static std::string write_svg(const std::string& path,
                                 const std::string& body) {
        std::ofstream f(path);
        f << body;
        return path;
    }

    ExperimentConfig cfg_;
    bool force_;
    RunLedger ledger_;
};

}  // namespace nopt
