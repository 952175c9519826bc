#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nopt/field.hpp"
#include "nopt/rng.hpp"

namespace nopt {

struct ChannelSpec {
    std::string name;
    std::string role;  // "physical" | "coordinate"
};

/// In-memory dataset plus the metadata persisted in the manifest. On disk the
/// container is <base>.json (manifest) + <base>.bin (little-endian f32
/// payload, sample-major, TCHW per trajectory, input then solution).
struct Dataset {
    std::string pde;
    std::size_t H = 0, W = 0, T = 1, C = 0;
    std::size_t sol_T = 0, sol_C = 0;  // zero when unlabeled
    Grid2D grid;
    std::vector<ChannelSpec> channels;
    std::uint64_t seed = 0;
    nlohmann::json param_ranges = nlohmann::json::object();
    std::vector<SampleRecord> samples;

    std::size_t size() const { return samples.size(); }

    void infer_shape() {
        if (samples.empty()) return;
        const auto& s = samples.front();
        T = s.input.T();
        C = s.input.frames[0].C;
        H = s.input.frames[0].grid.H;
        W = s.input.frames[0].grid.W;
        grid = s.input.frames[0].grid;
        if (s.solution) {
            sol_T = s.solution->T();
            sol_C = s.solution->frames[0].C;
        }
        for (const auto& r : samples) {
            if (r.input.T() != T || r.input.frames[0].C != C ||
                r.input.frames[0].grid.H != H || r.input.frames[0].grid.W != W)
                throw std::invalid_argument("dataset: heterogeneous samples");
            if (r.solution.has_value() != (sol_T > 0))
                throw std::invalid_argument("dataset: mixed labeling");
        }
    }
};

struct ChannelStats {
    std::vector<double> mean, std;
    std::vector<bool> degenerate;  // constant channel, passed through
};

namespace detail {

inline void append_traj(std::vector<float>& out, const Trajectory& tr) {
    for (const auto& f : tr.frames)
        out.insert(out.end(), f.values.begin(), f.values.end());
}

inline Trajectory read_traj(const float* p, std::size_t t, std::size_t c,
                            Grid2D g, double dt) {
    Trajectory tr;
    tr.dt_record = dt;
    for (std::size_t i = 0; i < t; ++i) {
        Field f(c, g);
        std::memcpy(f.values.data(), p + i * c * g.H * g.W,
                    c * g.H * g.W * sizeof(float));
        tr.frames.push_back(std::move(f));
    }
    return tr;
}

inline bool little_endian() {
    const std::uint16_t x = 1;
    return *reinterpret_cast<const std::uint8_t*>(&x) == 1;
}

}  // namespace detail

constexpr int kDatasetVersion = 1;

inline nlohmann::json write_dataset(const Dataset& ds_in,
                                    const std::string& base) {
    Dataset ds = ds_in;
    ds.infer_shape();
    if (!detail::little_endian())
        throw std::runtime_error("write_dataset: big-endian host unsupported");

    nlohmann::json man;
    man["version"] = kDatasetVersion;
    man["pde"] = ds.pde;
    man["H"] = ds.H;
    man["W"] = ds.W;
    man["T"] = ds.T;
    man["C"] = ds.C;
    man["sol_T"] = ds.sol_T;
    man["sol_C"] = ds.sol_C;
    man["dtype"] = "f32le";
    man["layout"] = "TCHW";
    man["n"] = ds.size();
    man["seed"] = ds.seed;
    man["param_ranges"] = ds.param_ranges;
    man["extent"] = {ds.grid.x0, ds.grid.x1, ds.grid.y0, ds.grid.y1};
    auto chans = nlohmann::json::array();
    for (const auto& c : ds.channels)
        chans.push_back({{"name", c.name}, {"role", c.role}});
    man["channels"] = chans;

    std::vector<float> payload;
    auto offsets = nlohmann::json::array();
    auto recs = nlohmann::json::array();
    for (const auto& s : ds.samples) {
        offsets.push_back(payload.size() * sizeof(float));
        detail::append_traj(payload, s.input);
        nlohmann::json rec;
        rec["params"] = s.params;
        rec["labeled"] = s.labeled();
        rec["dt"] = s.input.dt_record;
        if (s.solution) {
            rec["sol_dt"] = s.solution->dt_record;
            detail::append_traj(payload, *s.solution);
        }
        recs.push_back(std::move(rec));
    }
    man["offsets"] = offsets;
    man["samples"] = recs;

    std::ofstream jf(base + ".json");
    if (!jf) throw std::runtime_error("write_dataset: cannot open " + base);
    jf << man.dump(1) << "\n";
    std::ofstream bf(base + ".bin", std::ios::binary);
    bf.write(reinterpret_cast<const char*>(payload.data()),
             std::streamsize(payload.size() * sizeof(float)));
    if (!bf) throw std::runtime_error("write_dataset: payload write failed");
    return man;
}

inline Dataset read_dataset(const std::string& base) {
    std::ifstream jf(base + ".json");
    if (!jf) throw std::runtime_error("read_dataset: missing " + base + ".json");
    nlohmann::json man = nlohmann::json::parse(jf);
    if (int(man.at("version")) > kDatasetVersion)
        throw std::runtime_error("read_dataset: unsupported manifest version");
    if (man.at("dtype") != "f32le" || man.at("layout") != "TCHW")
        throw std::runtime_error("read_dataset: unsupported dtype/layout tag");

    Dataset ds;
    ds.pde = man.value("pde", "");
    ds.H = man.at("H");
    ds.W = man.at("W");
    ds.T = man.at("T");
    ds.C = man.at("C");
    ds.sol_T = man.value("sol_T", 0);
    ds.sol_C = man.value("sol_C", 0);
    ds.seed = man.value("seed", std::uint64_t(0));
    ds.param_ranges = man.value("param_ranges", nlohmann::json::object());
    ds.grid = Grid2D{ds.H, ds.W};
    if (man.contains("extent")) {
        ds.grid.x0 = man["extent"][0];
        ds.grid.x1 = man["extent"][1];
        ds.grid.y0 = man["extent"][2];
        ds.grid.y1 = man["extent"][3];
    }
    for (const auto& c : man.value("channels", nlohmann::json::array()))
        ds.channels.push_back({c.value("name", ""), c.value("role", "physical")});

    std::ifstream bf(base + ".bin", std::ios::binary | std::ios::ate);
    if (!bf) throw std::runtime_error("read_dataset: missing payload");
    const std::size_t bytes = std::size_t(bf.tellg());
    bf.seekg(0);
    std::vector<float> payload(bytes / sizeof(float));
    bf.read(reinterpret_cast<char*>(payload.data()), std::streamsize(bytes));

    const std::size_t n = man.at("n");
    const auto& offsets = man.at("offsets");
    const auto& recs = man.at("samples");
    if (offsets.size() != n || recs.size() != n)
        throw std::runtime_error("read_dataset: sample count mismatch");
    const std::size_t in_len = ds.T * ds.C * ds.H * ds.W;
    const std::size_t sol_len = ds.sol_T * ds.sol_C * ds.H * ds.W;
    std::size_t prev = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = std::size_t(offsets[i]) / sizeof(float);
        if (i > 0 && off <= prev)
            throw std::runtime_error("read_dataset: offsets not increasing");
        prev = off;
        if ((off + in_len + sol_len) * sizeof(float) > bytes)
            throw std::runtime_error("read_dataset: truncated payload");
        SampleRecord s;
        s.input = detail::read_traj(payload.data() + off, ds.T, ds.C, ds.grid,
                                    recs[i].value("dt", 0.0));
        if (sol_len)
            s.solution = detail::read_traj(payload.data() + off + in_len,
                                           ds.sol_T, ds.sol_C, ds.grid,
                                           recs[i].value("sol_dt", 0.0));
        for (auto it = recs[i]["params"].begin(); it != recs[i]["params"].end();
             ++it)
            s.params[it.key()] = double(it.value());
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

/// Concatenates datasets of equal resolution; channel count becomes the max
/// and missing channels are zero-filled. Provenance lands in params["_src"].
inline Dataset dataset_union(const std::vector<Dataset>& parts) {
    if (parts.empty()) throw std::invalid_argument("dataset_union: empty");
    Dataset out = parts.front();
    out.samples.clear();
    std::size_t cmax = 0;
    for (const auto& p : parts) {
        if (p.H != out.H || p.W != out.W || p.T != out.T)
            throw std::invalid_argument("dataset_union: resolution mismatch");
        cmax = std::max(cmax, p.C);
    }
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& p = parts[pi];
        for (const auto& s : p.samples) {
            SampleRecord r = s;
            r.solution.reset();  // union is a pretraining (unlabeled) pool
            for (auto& f : r.input.frames) {
                Field padded(cmax, f.grid);
                std::copy(f.values.begin(), f.values.end(),
                          padded.values.begin());
                f = std::move(padded);
            }
            r.params["_src"] = double(pi);
            out.samples.push_back(std::move(r));
        }
    }
    out.C = cmax;
    out.sol_T = out.sol_C = 0;
    out.channels.resize(cmax);
    for (auto& c : out.channels)
        if (c.role.empty()) c.role = "physical";
    out.pde = parts.size() > 1 ? "union" : parts.front().pde;
    out.infer_shape();
    return out;
}

/// Deterministic disjoint exhaustive partition by seeded shuffle.
inline std::array<Dataset, 3> split(const Dataset& ds, double ftrain,
                                    double fval, double ftest,
                                    std::uint64_t seed) {
    for (double f : {ftrain, fval, ftest})
        if (f < 0.0 || f > 1.0)
            throw std::invalid_argument("split: fraction out of [0,1]");
    if (std::abs(ftrain + fval + ftest - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x51C3ULL));
    rng.shuffle(idx.begin(), idx.end());
    const std::size_t n = ds.size();
    std::size_t ntrain = std::size_t(std::round(ftrain * double(n)));
    std::size_t nval = std::size_t(std::round(fval * double(n)));
    ntrain = std::min(ntrain, n);
    nval = std::min(nval, n - ntrain);
    std::array<Dataset, 3> out;
    for (auto& o : out) {
        o = ds;
        o.samples.clear();
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t part = i < ntrain ? 0 : (i < ntrain + nval ? 1 : 2);
        out[part].samples.push_back(ds.samples[idx[i]]);
    }
    return out;
}

/// Per-input-channel mean/std across samples and frames. Channels with
/// (near-)zero std are flagged and left untouched by normalize().
inline ChannelStats channel_stats(const Dataset& ds) {
    ChannelStats st;
    st.mean.assign(ds.C, 0.0);
    st.std.assign(ds.C, 0.0);
    st.degenerate.assign(ds.C, false);
    std::vector<double> sum(ds.C, 0.0), sq(ds.C, 0.0);
    std::size_t count = 0;
    for (const auto& s : ds.samples)
        for (const auto& f : s.input.frames) {
            for (std::size_t c = 0; c < ds.C; ++c)
                for (std::size_t i = 0; i < f.plane(); ++i) {
                    double v = f.values[c * f.plane() + i];
                    sum[c] += v;
                    sq[c] += v * v;
                }
            ++count;
        }
    const double denom = double(count) * double(ds.H * ds.W);
    for (std::size_t c = 0; c < ds.C; ++c) {
        st.mean[c] = sum[c] / denom;
        double var = sq[c] / denom - st.mean[c] * st.mean[c];
        st.std[c] = std::sqrt(std::max(var, 0.0));
        if (st.std[c] < 1e-12) {
            st.degenerate[c] = true;
            st.mean[c] = 0.0;
            st.std[c] = 1.0;
        }
    }
    return st;
}

inline void normalize(Field& f, const ChannelStats& st) {
    for (std::size_t c = 0; c < f.C; ++c) {
        if (st.degenerate[c]) continue;
        for (std::size_t i = 0; i < f.plane(); ++i) {
            float& v = f.values[c * f.plane() + i];
            v = float((double(v) - st.mean[c]) / st.std[c]);
        }
    }
}

inline void denormalize(Field& f, const ChannelStats& st) {
    for (std::size_t c = 0; c < f.C; ++c) {
        if (st.degenerate[c]) continue;
        for (std::size_t i = 0; i < f.plane(); ++i) {
            float& v = f.values[c * f.plane() + i];
            v = float(double(v) * st.std[c] + st.mean[c]);
        }
    }
}

/// Ingests raw little-endian f32 snapshots (n x T x C x H x W) into the
/// container format. No preprocessing is applied.
inline Dataset import_raw(const std::string& bin_path, std::size_t n,
                          std::size_t t, std::size_t c, std::size_t h,
                          std::size_t w, const std::string& pde = "raw") {
    std::ifstream bf(bin_path, std::ios::binary | std::ios::ate);
    if (!bf) throw std::runtime_error("import_raw: cannot open " + bin_path);
    const std::size_t bytes = std::size_t(bf.tellg());
    if (bytes != n * t * c * h * w * sizeof(float))
        throw std::runtime_error("import_raw: byte length mismatch");
    bf.seekg(0);
    std::vector<float> payload(bytes / sizeof(float));
    bf.read(reinterpret_cast<char*>(payload.data()), std::streamsize(bytes));
    Dataset ds;
    ds.pde = pde;
    ds.grid = Grid2D{h, w};
    for (std::size_t i = 0; i < n; ++i) {
        SampleRecord s;
        s.input = detail::read_traj(payload.data() + i * t * c * h * w, t, c,
                                    ds.grid, 0.0);
        s.params["_imported"] = 1.0;
        ds.samples.push_back(std::move(s));
    }
    ds.infer_shape();
    ds.channels.assign(c, {"raw", "physical"});
    return ds;
}

}  // namespace nopt
