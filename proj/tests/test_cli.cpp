#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "nopt/experiment.hpp"

using namespace nopt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("nopt-cli-" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

ExperimentConfig tiny_config(const std::string& out) {
    json j = {
        {"out_dir", out},
        {"pde", {{"name", "poisson"}, {"h", 32}, {"w", 32}}},
        {"model",
         {{"width", 6}, {"modes1", 4}, {"modes2", 4}, {"layers", 1}}},
        {"pretrain",
         {{"mask_ratio", 0.5}, {"blur_min", 0.0}, {"blur_max", 1.0},
          {"epochs", 1}, {"batch", 8}, {"lr", 1e-3}, {"seed", 1}}},
        {"finetune",
         {{"budgets", {4}}, {"seeds", {1}}, {"inits", {"random"}},
          {"epochs", 1}, {"lr", 1e-3}}},
        {"icl",
         {{"j", {0, 2}}, {"k", 2}, {"seeds", {1}}, {"n_query", 2},
          {"pool", 4}, {"chunk", 512}}},
    };
    return ExperimentConfig::from_json(j);
}

}  // namespace

TEST_CASE("config hash is order/whitespace invariant, value sensitive") {
    auto a = json::parse(R"({"b": 2, "a": {"y": 1, "x": [1,2]}})");
    auto b = json::parse(R"({ "a":{"x":[1, 2],"y":1},   "b":2 })");
    CHECK(config_hash(a) == config_hash(b));
    auto c = a;
    c["a"]["y"] = 2;
    CHECK(config_hash(a) != config_hash(c));
    auto d = a;
    d["z"] = 0;
    CHECK(config_hash(a) != config_hash(d));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("unknown config keys are rejected with their path") {
    json bad = {{"pde", {{"name", "poisson"}, {"resolution", 64}}}};
    try {
        ExperimentConfig::from_json(bad);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("pde.resolution") !=
              std::string::npos);
    }
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"typo", 1}}),
                    std::invalid_argument);
    CHECK_NOTHROW(ExperimentConfig::from_json(tiny_config("x").doc));
}

TEST_CASE("ledger records runs and reports completion") {
    TempDir tmp;
    RunLedger led(tmp.str() + "/ledger.jsonl");
    CHECK_FALSE(led.completed("abc"));
    led.record("abc", "generate", {"a.json"}, 0.5);
    led.record("def", "pretrain", {}, 1.5);
    CHECK(led.completed("abc"));
    CHECK(led.completed("def"));
    CHECK_FALSE(led.completed("abd"));
    // append-only: re-open sees both lines
    RunLedger led2(tmp.str() + "/ledger.jsonl");
    CHECK(led2.completed("abc"));
}

TEST_CASE("generate is idempotent under the ledger; --force reruns") {
    TempDir tmp;
    Orchestrator orch(tiny_config(tmp.str()));
    bool skipped = true;
    auto base = orch.cmd_generate(3, true, 5, "train", &skipped);
    CHECK_FALSE(skipped);
    CHECK(fs::exists(base + ".json"));
    CHECK(fs::exists(base + ".bin"));
    auto base2 = orch.cmd_generate(3, true, 5, "train", &skipped);
    CHECK(skipped);
    CHECK(base2 == base);
    // a different parameterization is a fresh run
    orch.cmd_generate(3, false, 5, "train", &skipped);
    CHECK_FALSE(skipped);
    Orchestrator forced(tiny_config(tmp.str()), true);
    forced.cmd_generate(3, true, 5, "train", &skipped);
    CHECK_FALSE(skipped);
}

TEST_CASE("pipeline at toy scale: pretrain, finetune, icl, report") {
    TempDir tmp;
    Orchestrator orch(tiny_config(tmp.str()));
    auto unlab = orch.cmd_generate(8, false, 1, "pretrain");
    auto lab = orch.cmd_generate(8, true, 2, "train");

    bool skipped = false;
    auto ckpt = orch.cmd_pretrain(unlab, &skipped);
    CHECK_FALSE(skipped);
    CHECK(fs::exists(ckpt + ".json"));
    CHECK(fs::exists(ckpt + "-curve.csv"));
    orch.cmd_pretrain(unlab, &skipped);
    CHECK(skipped);

    auto csv = orch.cmd_finetune(lab, ckpt, &skipped);
    CHECK_FALSE(skipped);
    auto rows = read_csv(csv);
    REQUIRE(rows.size() == 1);  // 1 budget x 1 seed x 1 init
    CHECK(rows[0].at("pde") == "poisson");
    CHECK(rows[0].at("init") == "random");
    CHECK(std::stod(rows[0].at("test_rl2")) > 0.0);

    auto icl_csv_path = orch.cmd_icl(ckpt, lab, &skipped);
    CHECK_FALSE(skipped);
    auto icl_rows = read_csv(icl_csv_path);
    CHECK(icl_rows.size() == 2 * 2 * 1);  // J x source x seed
    orch.cmd_icl(ckpt, lab, &skipped);
    CHECK(skipped);

    auto svgs = orch.cmd_report();
    REQUIRE(svgs.size() >= 3);
    for (const auto& p : svgs) {
        std::ifstream f(p);
        std::string body((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
        CHECK(body.find("<svg") != std::string::npos);
        CHECK(body.find("polyline") != std::string::npos);
    }
}

TEST_CASE("cost command emits a parseable CSV row") {
    TempDir tmp;
    auto cfg = tiny_config(tmp.str());
    cfg.doc["pde"]["name"] = "rd";
    cfg.doc["pde"]["h"] = 16;
    cfg.doc["pde"]["w"] = 16;
    Orchestrator orch(ExperimentConfig::from_json(cfg.doc));
    auto csv = orch.cmd_cost(2);
    auto rows = read_csv(csv);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].at("pde") == "rd");
    CHECK(std::stod(rows[0].at("labeled_secs")) >
          std::stod(rows[0].at("unlabeled_secs")));
}

TEST_CASE("sweep enumerates the grid product") {
    TempDir tmp;
    auto cfg = tiny_config(tmp.str());
    cfg.doc["pretrain"]["epochs"] = 0;
    Orchestrator orch(ExperimentConfig::from_json(cfg.doc));
    auto unlab = orch.cmd_generate(4, false, 1, "pretrain");
    auto ckpts = orch.cmd_sweep(unlab, {0.0, 0.5}, {{0, 0}, {0, 1}, {0, 2}});
    CHECK(ckpts.size() == 6);
    std::sort(ckpts.begin(), ckpts.end());
    CHECK(std::adjacent_find(ckpts.begin(), ckpts.end()) == ckpts.end());
    for (const auto& c : ckpts) CHECK(fs::exists(c + ".json"));
}

TEST_CASE("svg plot handles degenerate inputs") {
    auto svg = svg_line_plot("t", "x", "y", {});
    CHECK(svg.find("<svg") != std::string::npos);
    auto one = svg_line_plot("t", "x", "y", {{"s", {{1.0, 2.0}}}});
    CHECK(one.find("circle") != std::string::npos);
}

TEST_CASE("csv reader round-trips toolkit output") {
    TempDir tmp;
    const std::string p = tmp.str() + "/t.csv";
    {
        std::ofstream f(p);
        f << "a,b,c\n1,,x\n2,3.5,y\n";
    }
    auto rows = read_csv(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].at("b").empty());
    CHECK(rows[1].at("c") == "y");
    {
        std::ofstream f(p);
        f << "a,b\n1\n";
    }
    CHECK_THROWS_AS(read_csv(p), std::runtime_error);
}
