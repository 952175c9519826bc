#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "nopt/dataset.hpp"
#include "nopt/grf.hpp"
#include "nopt/navier_stokes.hpp"
#include "nopt/reaction_diffusion.hpp"
#include "nopt/solvers.hpp"
#include "nopt/threading.hpp"

namespace nopt {

enum class Pde { Poisson, Helmholtz, ReactionDiffusion, NavierStokes };

inline Pde pde_from_name(const std::string& s) {
    if (s == "poisson") return Pde::Poisson;
    if (s == "helmholtz") return Pde::Helmholtz;
    if (s == "rd") return Pde::ReactionDiffusion;
    if (s == "ns") return Pde::NavierStokes;
    throw std::invalid_argument("unknown pde: " + s);
}

inline std::string pde_name(Pde p) {
    switch (p) {
        case Pde::Poisson: return "poisson";
        case Pde::Helmholtz: return "helmholtz";
        case Pde::ReactionDiffusion: return "rd";
        default: return "ns";
    }
}

/// Integer parameter range; NS uses the explicit value set.
struct ParamRange {
    long lo = 1, hi = 20;
    std::vector<long> set;

    void validate() const {
        if (set.empty() && hi < lo)
            throw std::invalid_argument("ParamRange: empty range");
    }
    long draw(Rng& rng) const {
        if (!set.empty())
            return set[std::size_t(rng.uniform_int(0, long(set.size()) - 1))];
        return rng.uniform_int(lo, hi);
    }
};

/// Stage presets from the parameter-range table: pretrain / train / OOD.
inline ParamRange stage_range(Pde pde, const std::string& stage) {
    if (pde == Pde::NavierStokes) {
        if (stage == "pretrain") return {0, 0, {100, 300, 500, 800, 1000}};
        if (stage == "train") return {0, 0, {300}};
        return {0, 0, {10000}};
    }
    if (stage == "pretrain") return {1, 20, {}};
    if (stage == "train") return {5, 15, {}};
    if (pde == Pde::Helmholtz) return {15, 20, {}};
    return {15, 50, {}};  // Poisson OOD
}

struct GenOptions {
    std::size_t H = 64, W = 64;
    GrfSpec grf;
    RdParams rd;
    NsParams ns;
    double rd_t_final = 5.0;
    std::size_t rd_frames = 16;   // recorded frames after t=0
    std::size_t rd_t_in = 10;     // input window length for labeled RD
    double ns_t_final = 1.0;
    std::size_t ns_frames = 8;    // recorded solution frames for labeled NS
};

struct CostReport {
    std::string pde;
    std::size_t n = 0;
    double unlabeled_secs = 0.0;
    double labeled_secs = 0.0;
    std::string host;

    std::string csv_row() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%s", pde.c_str(), n,
                      labeled_secs, unlabeled_secs, host.c_str());
        return buf;
    }
    static std::string csv_header() {
        return "pde,n,labeled_secs,unlabeled_secs,host";
    }
};

inline std::string host_descriptor() {
    char name[256] = "unknown";
#ifdef __linux__
    std::FILE* f = std::fopen("/proc/sys/kernel/hostname", "r");
    if (f) {
        if (std::fscanf(f, "%255s", name) != 1) name[0] = 0;
        std::fclose(f);
    }
#endif
    return name;
}

/// Draws physical parameters for one sample.
inline std::map<std::string, double> sample_params(Pde pde,
                                                   const ParamRange& range,
                                                   std::uint64_t seed) {
    range.validate();
    Rng rng(seed);
    std::map<std::string, double> p;
    switch (pde) {
        case Pde::Poisson: {
            const long e1 = range.draw(rng), e2 = range.draw(rng);
            const double theta = rng.uniform() * 3.14159265358979323846;
            auto k = PoissonParams::from_eigs(e1, e2, theta);
            p["eig1"] = double(e1);
            p["eig2"] = double(e2);
            p["theta"] = theta;
            p["K11"] = k.k11;
            p["K22"] = k.k22;
            p["K12"] = k.k12;
            break;
        }
        case Pde::Helmholtz:
            p["omega"] = double(range.draw(rng));
            break;
        case Pde::NavierStokes:
            p["Re"] = double(range.draw(rng));
            break;
        case Pde::ReactionDiffusion:
            break;  // Du, Dv, k are fixed physics, stamped by generate()
    }
    return p;
}

namespace gen_detail {

inline Field broadcast(double v, Grid2D g) {
    Field f(1, g);
    std::fill(f.values.begin(), f.values.end(), float(v));
    return f;
}

inline Field stack(const std::vector<Field>& parts) {
    std::size_t c = 0;
    for (const auto& f : parts) c += f.C;
    Field out(c, parts.front().grid);
    std::size_t off = 0;
    for (const auto& f : parts) {
        std::copy(f.values.begin(), f.values.end(), out.values.begin() + off);
        off += f.values.size();
    }
    return out;
}

inline Field from_f64(const std::vector<double>& v, Grid2D g) {
    Field f(1, g);
    for (std::size_t i = 0; i < v.size(); ++i) f.values[i] = float(v[i]);
    return f;
}

}  // namespace gen_detail

/// Generates n samples with per-sample derived seeds (order-independent).
/// Unlabeled mode bypasses solvers entirely; RD/NS unlabeled samples are
/// independently seeded single snapshots, shuffled on a dedicated stream.
inline Dataset generate(Pde pde, std::size_t n, const ParamRange& range,
                        bool labeled, std::uint64_t seed,
                        const GenOptions& opt, CostReport* cost = nullptr) {
    range.validate();
    Grid2D grid{opt.H, opt.W};
    grid.validate();
    if (pde == Pde::ReactionDiffusion) {
        grid.x0 = grid.y0 = -1.0;
        grid.x1 = grid.y1 = 1.0;
    }

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    // phase 1: inputs only (the unlabeled product)
    std::vector<SampleRecord> recs(n);
    parallel_for(n, [&](std::size_t i, std::size_t) {
        const std::uint64_t s = mix_seed(seed, i);
        SampleRecord& r = recs[i];
        r.params = sample_params(pde, range, mix_seed(s, 1));
        switch (pde) {
            case Pde::Poisson: {
                Field f = sample_grf(opt.grf, grid, mix_seed(s, 2));
                r.input = Trajectory(gen_detail::stack(
                    {f, gen_detail::broadcast(r.params["K11"], grid),
                     gen_detail::broadcast(r.params["K22"], grid),
                     gen_detail::broadcast(r.params["K12"], grid)}));
                break;
            }
            case Pde::Helmholtz: {
                Field f = sample_grf(opt.grf, grid, mix_seed(s, 2));
                r.input = Trajectory(gen_detail::stack(
                    {f, gen_detail::broadcast(r.params["omega"], grid)}));
                break;
            }
            case Pde::ReactionDiffusion: {
                Field u = sample_grf(opt.grf, grid, mix_seed(s, 2));
                Field v = sample_grf(opt.grf, grid, mix_seed(s, 3));
                r.params["Du"] = opt.rd.du;
                r.params["Dv"] = opt.rd.dv;
                r.params["k"] = opt.rd.k;
                r.input = Trajectory(gen_detail::stack({u, v}));
                break;
            }
            case Pde::NavierStokes: {
                r.input = Trajectory(
                    sample_grf(opt.grf, grid, mix_seed(s, 2)));
                break;
            }
        }
    });
    // snapshot pools carry no temporal ordering: shuffle on a dedicated stream
    if (!labeled &&
        (pde == Pde::ReactionDiffusion || pde == Pde::NavierStokes)) {
        Rng shuf(mix_seed(seed, 0x5Fu));
        shuf.shuffle(recs.begin(), recs.end());
    }
    const double unlabeled_secs =
        std::chrono::duration<double>(clock::now() - t0).count();

    // phase 2: solutions
    if (labeled) {
        parallel_for(n, [&](std::size_t i, std::size_t) {
            SampleRecord& r = recs[i];
            switch (pde) {
                case Pde::Poisson: {
                    std::vector<double> f(r.input.frames[0].values.begin(),
                                          r.input.frames[0].values.begin() +
                                              long(grid.H * grid.W));
                    PoissonParams kp;
                    kp.k11 = r.params["K11"];
                    kp.k22 = r.params["K22"];
                    kp.k12 = r.params["K12"];
                    r.solution = Trajectory(gen_detail::from_f64(
                        solve_poisson(kp, f, grid.H, grid.W), grid));
                    break;
                }
                case Pde::Helmholtz: {
                    std::vector<double> f(r.input.frames[0].values.begin(),
                                          r.input.frames[0].values.begin() +
                                              long(grid.H * grid.W));
                    r.solution = Trajectory(gen_detail::from_f64(
                        solve_helmholtz(r.params["omega"], f, grid.H, grid.W),
                        grid));
                    break;
                }
                case Pde::ReactionDiffusion: {
                    const auto& ic = r.input.frames[0];
                    Field u(1, grid), v(1, grid);
                    std::copy_n(ic.values.begin(), grid.H * grid.W,
                                u.values.begin());
                    std::copy_n(ic.values.begin() + long(grid.H * grid.W),
                                grid.H * grid.W, v.values.begin());
                    RdParams rp = opt.rd;
                    rp.dt = rp.stable_dt(2.0 / double(grid.W));
                    const std::size_t total_steps = std::size_t(
                        std::ceil(opt.rd_t_final / rp.dt));
                    const std::size_t stride =
                        std::max<std::size_t>(1, total_steps / opt.rd_frames);
                    Trajectory full =
                        simulate_rd(u, v, rp, opt.rd_t_final, stride);
                    // input window: first rd_t_in recorded frames,
                    // solution: the rest
                    Trajectory in, sol;
                    in.dt_record = sol.dt_record = full.dt_record;
                    for (std::size_t t = 0; t < full.T(); ++t)
                        (t < opt.rd_t_in ? in : sol)
                            .frames.push_back(std::move(full.frames[t]));
                    if (sol.frames.empty())
                        throw std::runtime_error(
                            "generate(rd): no solution frames recorded");
                    r.input = std::move(in);
                    r.solution = std::move(sol);
                    break;
                }
                case Pde::NavierStokes: {
                    Trajectory full = simulate_ns(r.input.frames[0], opt.ns,
                                                  opt.ns_t_final,
                                                  opt.ns_frames);
                    Trajectory sol;
                    sol.dt_record = full.dt_record;
                    for (std::size_t t = 1; t < full.T(); ++t)
                        sol.frames.push_back(std::move(full.frames[t]));
                    r.solution = std::move(sol);
                    break;
                }
            }
        });
    }
    const double labeled_secs =
        labeled ? std::chrono::duration<double>(clock::now() - t0).count()
                : 0.0;

    Dataset ds;
    ds.pde = pde_name(pde);
    ds.grid = grid;
    ds.seed = seed;
    ds.samples = std::move(recs);
    ds.param_ranges["lo"] = range.lo;
    ds.param_ranges["hi"] = range.hi;
    ds.param_ranges["set"] = range.set;
    switch (pde) {
        case Pde::Poisson:
            ds.channels = {{"f", "physical"}, {"K11", "physical"},
                           {"K22", "physical"}, {"K12", "physical"}};
            break;
        case Pde::Helmholtz:
            ds.channels = {{"f", "physical"}, {"omega", "physical"}};
            break;
        case Pde::ReactionDiffusion:
            ds.channels = {{"u", "physical"}, {"v", "physical"}};
            break;
        case Pde::NavierStokes:
            ds.channels = {{"w", "physical"}};
            break;
    }
    ds.infer_shape();
    if (cost) {
        cost->pde = pde_name(pde);
        cost->n = n;
        cost->unlabeled_secs = unlabeled_secs;
        cost->labeled_secs = labeled_secs;
        cost->host = host_descriptor();
    }
    return ds;
}

}  // namespace nopt
