// nopt: PDE operator-learning toolkit command line.
//
// Subcommands cover the full experiment pipeline: dataset generation,
// reconstruction pretraining, budgeted fine-tuning, evaluation, in-context
// demo sweeps, generation-cost timing, proxy-task grids, and SVG reports.
// Completed runs are recorded in <out_dir>/ledger.jsonl and skipped on
// rerun unless --force is given.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nopt/experiment.hpp"

namespace {

nopt::ExperimentConfig load_config(const std::string& path,
                                   const std::string& pde,
                                   const std::string& out_dir) {
    nopt::json doc = nopt::json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config not found: " + path);
        doc = nopt::json::parse(f);
    }
    if (!pde.empty()) doc["pde"]["name"] = pde;
    if (!out_dir.empty()) doc["out_dir"] = out_dir;
    return nopt::ExperimentConfig::from_json(doc);
}

std::vector<std::pair<double, double>> parse_blurs(
    const std::vector<std::string>& specs) {
    std::vector<std::pair<double, double>> out;
    for (const auto& s : specs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("blur spec must be lo:hi, got " + s);
        out.push_back({std::stod(s.substr(0, colon)),
                       std::stod(s.substr(colon + 1))});
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PDE operator-learning toolkit"};
    app.require_subcommand(1);

    std::string config_path, pde, out_dir;
    bool force = false;
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--pde", pde, "poisson | helmholtz | rd | ns");
    app.add_option("--out", out_dir, "output directory (default: runs)");
    app.add_flag("--force", force, "rerun even if the ledger has the run");

    // generate
    auto* gen = app.add_subcommand("generate", "generate a dataset");
    std::size_t gen_n = 64;
    bool gen_labeled = false;
    std::uint64_t gen_seed = 1;
    std::string gen_stage = "train";
    gen->add_option("--n", gen_n, "number of samples");
    gen->add_flag("--labeled", gen_labeled, "also simulate solutions");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--stage", gen_stage, "pretrain | train | ood");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "reconstruction pretraining");
    std::string pre_dataset;
    pre->add_option("--dataset", pre_dataset, "unlabeled dataset base path")
        ->required();

    // finetune
    auto* fin = app.add_subcommand("finetune", "budgeted supervised training");
    std::string fin_dataset, fin_ckpt;
    fin->add_option("--dataset", fin_dataset, "labeled dataset base path")
        ->required();
    fin->add_option("--checkpoint", fin_ckpt, "pretrained checkpoint base");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_dataset, ev_ckpt;
    std::uint64_t ev_seed = 1;
    ev->add_option("--dataset", ev_dataset, "labeled dataset base path")
        ->required();
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint base")->required();
    ev->add_option("--seed", ev_seed, "split seed");

    // icl
    auto* icl = app.add_subcommand("icl", "in-context demo sweep on OOD data");
    std::string icl_ckpt, icl_train;
    icl->add_option("--checkpoint", icl_ckpt, "checkpoint base")->required();
    icl->add_option("--train-dataset", icl_train,
                    "labeled training dataset (normalization statistics)")
        ->required();

    // cost
    auto* cost = app.add_subcommand("cost", "time unlabeled vs labeled generation");
    std::size_t cost_n = 50;
    cost->add_option("--n", cost_n, "samples per timing run");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "mask/blur proxy-task grid");
    std::string sweep_dataset;
    std::vector<double> sweep_masks{0.0, 0.05, 0.3, 0.7, 0.9};
    std::vector<std::string> sweep_blurs{"0:0", "0:1", "0:2", "0:4"};
    sweep->add_option("--dataset", sweep_dataset, "unlabeled dataset base")
        ->required();
    sweep->add_option("--mask", sweep_masks, "mask ratios");
    sweep->add_option("--blur", sweep_blurs, "blur ranges as lo:hi");

    // report
    app.add_subcommand("report", "render SVG curves from emitted CSVs");

    CLI11_PARSE(app, argc, argv);

    try {
        nopt::Orchestrator orch(load_config(config_path, pde, out_dir), force);
        bool skipped = false;
        if (gen->parsed()) {
            auto base =
                orch.cmd_generate(gen_n, gen_labeled, gen_seed, gen_stage,
                                  &skipped);
            std::printf("%s%s\n", skipped ? "skipped (ledger): " : "",
                        base.c_str());
        } else if (pre->parsed()) {
            auto base = orch.cmd_pretrain(pre_dataset, &skipped);
            std::printf("%s%s\n", skipped ? "skipped (ledger): " : "",
                        base.c_str());
        } else if (fin->parsed()) {
            auto csv = orch.cmd_finetune(fin_dataset, fin_ckpt, &skipped);
            std::printf("%s%s\n", skipped ? "skipped (ledger): " : "",
                        csv.c_str());
        } else if (ev->parsed()) {
            auto rep = orch.cmd_eval(ev_dataset, ev_ckpt, ev_seed);
            std::printf("test_rl2 %.6f\n", rep.test_rl2);
        } else if (icl->parsed()) {
            auto csv = orch.cmd_icl(icl_ckpt, icl_train, &skipped);
            std::printf("%s%s\n", skipped ? "skipped (ledger): " : "",
                        csv.c_str());
        } else if (cost->parsed()) {
            auto csv = orch.cmd_cost(cost_n, &skipped);
            std::printf("%s%s\n", skipped ? "skipped (ledger): " : "",
                        csv.c_str());
        } else if (sweep->parsed()) {
            for (const auto& ck : orch.cmd_sweep(sweep_dataset, sweep_masks,
                                                 parse_blurs(sweep_blurs)))
                std::printf("%s\n", ck.c_str());
        } else {  // report
            for (const auto& svg : orch.cmd_report())
                std::printf("%s\n", svg.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
