#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "childgrad/cli.hpp"
#include "childgrad/config.hpp"
#include "childgrad/io.hpp"
#include "support.hpp"

using namespace childgrad;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "childgrad");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir) {
    const fs::path path = dir / "config.json";
    std::ofstream(path) << R"({
  "model": {"input_dim": 2, "hidden_dims": [6], "output": "classifier", "num_classes": 2},
  "data": {"generator": "two_moons", "n": 120, "noise": 0.2},
  "method": {"name": "child_d", "p": 0.3},
  "optim": {"eta": 0.01},
  "training": {"epochs": 2, "batch_size": 16},
  "seed": 1
})";
    return path;
}

}  // namespace

TEST_CASE("child_f with p=1 and vanilla give identical metric rows") {
    const auto dir = testing::temp_dir("cli_train");
    const auto cfg = write_config(dir).string();
    CHECK(run({"train", "--config", cfg, "--seed", "1,2", "--out", (dir / "f").string(), "method.name=child_f",
               "method.p=1"}) == 0);
    CHECK(run({"train", "--config", cfg, "--seed", "1,2", "--out", (dir / "v").string(), "method.name=vanilla"}) ==
          0);
    CHECK(run({"report", "--out", (dir / "r").string(), (dir / "f/run_seed1.json").string(),
               (dir / "f/run_seed2.json").string(), (dir / "v/run_seed1.json").string(),
               (dir / "v/run_seed2.json").string()}) == 0);
    std::istringstream table(slurp(dir / "r/report.csv"));
    std::string header, row_f, row_v;
    std::getline(table, header);
    std::getline(table, row_f);
    std::getline(table, row_v);
    CHECK(row_f.substr(0, 10) == "child_f(1)");
    CHECK(row_v.substr(0, 7) == "vanilla");
    CHECK(row_f.substr(row_f.find(',')) == row_v.substr(row_v.find(',')));
}

TEST_CASE("train writes reports, masks and aggregates; refuses to clobber") {
    const auto dir = testing::temp_dir("cli_clobber");
    const auto cfg = write_config(dir).string();
    const auto out = (dir / "out").string();
    CHECK(run({"train", "--config", cfg, "--seed", "4", "--out", out}) == 0);
    for (const char* f : {"run_seed4.json", "mask_seed4.json", "aggregate.csv", "aggregate.json", "summary.txt",
                          "timing.csv"}) {
        CHECK(fs::exists(fs::path(out) / f));
    }
    const Json report = read_json((fs::path(out) / "run_seed4.json").string());
    CHECK(report["mask"]["file"] == "mask_seed4.json");
    const std::string before = slurp(fs::path(out) / "run_seed4.json");
    CHECK(run({"train", "--config", cfg, "--seed", "4", "--out", out}) == 2);
    CHECK(run({"train", "--config", cfg, "--seed", "4", "--out", out, "--overwrite"}) == 0);
    CHECK(slurp(fs::path(out) / "run_seed4.json") == before);
}

TEST_CASE("seed comes from the environment when not given") {
    const auto dir = testing::temp_dir("cli_env");
    const auto cfg = write_config(dir).string();
    ::setenv("CHILDGRAD_SEED", "77", 1);
    CHECK(run({"train", "--config", cfg, "--out", (dir / "o").string()}) == 0);
    ::unsetenv("CHILDGRAD_SEED");
    CHECK(fs::exists(dir / "o/run_seed77.json"));
}

TEST_CASE("fisher, mask and overlap subcommands") {
    const auto dir = testing::temp_dir("cli_masks");
    const auto cfg = write_config(dir).string();
    CHECK(run({"fisher", "--config", cfg, "--out", (dir / "f").string()}) == 0);
    const auto fisher = (dir / "f/fisher.json").string();
    CHECK(run({"mask", "--config", cfg, "--kind", "fisher_d", "--p", "0.3", "--fisher", fisher, "--out",
               (dir / "m1").string()}) == 0);
    CHECK(run({"mask", "--config", cfg, "--kind", "fisher_d", "--p", "0.3", "--fisher", fisher, "--out",
               (dir / "m2").string()}) == 0);
    CHECK(run({"mask", "--config", cfg, "--kind", "random_d", "--p", "0.3", "--out", (dir / "m3").string()}) == 0);
    CHECK(run({"mask", "--config", cfg, "--kind", "topk_layers", "--k", "1", "--out", (dir / "m4").string()}) == 0);
    CHECK(run({"mask", "--config", cfg, "--kind", "bernoulli_f", "--p", "0.5", "--out", (dir / "m5").string()}) ==
          0);
    CHECK(run({"mask", "--config", cfg, "--kind", "lowest_d", "--out", (dir / "m6").string()}) == 2);

    CHECK(run({"overlap", "--out", (dir / "o").string(), (dir / "m1/mask.json").string(),
               (dir / "m2/mask.json").string()}) == 0);
    std::istringstream csv(slurp(dir / "o/overlap.csv"));
    std::string line;
    std::getline(csv, line);
    std::getline(csv, line);
    CHECK(line.substr(line.find(',')) == ",1,1");
    std::getline(csv, line);
    CHECK(line.substr(line.find(',')) == ",1,1");
}

TEST_CASE("theory grid stays within five percent") {
    const auto dir = testing::temp_dir("cli_theory");
    CHECK(run({"theory", "--out", dir.string(), "--overwrite"}) == 0);
    std::istringstream csv(slurp(dir / "update_covariance.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "p,B,eta,predicted,empirical,rel_error");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        CHECK(std::stod(line.substr(line.rfind(',') + 1)) < 0.05);
    }
    CHECK(rows == 9);
    CHECK(fs::exists(dir / "generalization_bound.csv"));
}

TEST_CASE("sharpness of a checkpoint") {
    const auto dir = testing::temp_dir("cli_sharp");
    const auto cfg = write_config(dir).string();
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_dims = {6};
    const auto ckpt = (dir / "w.json").string();
    save_checkpoint(ckpt, spec, init_params(spec, 3));
    CHECK(run({"sharpness", "--config", cfg, "--checkpoint", ckpt, "--iters", "20", "--out", dir.string()}) == 0);
    const Json j = read_json((dir / "sharpness.json").string());
    CHECK(std::isfinite(j["sharpness"].get<double>()));
}

TEST_CASE("exit codes for usage, config and numeric failures") {
    const auto dir = testing::temp_dir("cli_codes");
    const auto cfg = write_config(dir).string();
    CHECK(run({}) == 2);
    CHECK(run({"bogus"}) == 2);
    CHECK(run({"train", "--out", dir.string()}) == 2);
    CHECK(run({"train", "--config", (dir / "missing.json").string(), "--out", dir.string()}) == 2);
    CHECK(run({"train", "--config", cfg, "--out", (dir / "a").string(), "method.p=2"}) == 2);
    CHECK(run({"train", "--config", cfg, "--out", (dir / "b").string(), "training.nope=1"}) == 2);
    CHECK(run({"overlap", "--out", dir.string(), cfg}) == 2);

    ModelSpec reg;
    reg.input_dim = 2;
    reg.output = OutputKind::Regressor;
    ParamVector huge(make_registry(reg));
    for (auto& v : huge.values()) v = 1e300;
    const auto ckpt = (dir / "huge.json").string();
    save_checkpoint(ckpt, reg, huge);
    CHECK(run({"fisher", "--config", cfg, "--out", (dir / "n").string(), "model.output=regressor",
               "model.hidden_dims=[]", "data.generator=linear_regression", "pretrained.kind=checkpoint",
               "pretrained.path=" + ckpt}) == 3);
}
