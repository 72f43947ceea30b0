#include "stylealign/cli.hpp"
#include "stylealign/toy_world.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stylealign;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
};

// Runs the installed binary so stdout and the process exit code are real.
auto run(const std::string &args, const std::string &env = "") -> Run {
    const std::string cmd = env + " " + STYLEALIGN_BIN + " " + args + " 2>/dev/null";
    FILE *pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (const auto n = fread(buf, 1, sizeof buf, pipe)) {
        out.append(buf, n);
    }
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

auto slurp(const fs::path &p) -> std::string {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

auto scratch(const std::string &name) -> fs::path {
    auto dir = fs::temp_directory_path() / ("stylealign_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path &p, const std::string &text) {
    std::ofstream(p) << text;
}

const char *kSmallConfig = R"({
  "dataset": "toy-small",
  "world": {"n_examples": 120},
  "splits": {"train": 90, "validation": 15, "test": 15},
  "model": {"d_model": 16, "n_layers": 1},
  "trainer": {"sft": {"max_steps": 6}, "simpo": {"max_steps": 6}, "eval_interval": 3},
  "classifier": {"max_epochs": 2},
  "eval": {"max_tokens": 12},
  "sweep": {"grid": [25, 100], "subset_seeds": [0, 1]}
})";

}    // namespace

TEST_CASE("help and usage errors") {
    const auto help = run("--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("Usage") != std::string::npos);
    CHECK(help.out.find("gen-data") != std::string::npos);

    CHECK(run("frobnicate").code == 2);
    CHECK(run("").code == 2);
    CHECK(run("gen-data").code == 2);    // --out missing
    CHECK(run("sweep --jobs 0 --out /tmp/x").code == 2);
    CHECK(run("gen-data --preset nope --out /tmp/x.jsonl").code == 2);
    CHECK(run("gen-data --out /tmp/x.jsonl", "STYLEALIGN_LOG=chatty").code == 2);
    CHECK(parse_and_dispatch({"stylealign", "bogus"}) == kExitUsage);
}

TEST_CASE("gen-data") {
    const auto dir = scratch("gen");
    write(dir / "cfg.json", R"({"world": {"n_examples": 40}})");
    const auto out = dir / "data.jsonl";
    REQUIRE(run("gen-data --config " + (dir / "cfg.json").string() + " --seed 7 --out " + out.string()).code == 0);
    const auto data = read_jsonl(out);
    CHECK(data.size() == 40);
    WorldConfig w;
    w.n_examples = 40;
    CHECK(data == synthesize_dataset(w, 7));

    const auto again = dir / "nested" / "again.jsonl";    // parent created on demand
    REQUIRE(run("gen-data --config " + (dir / "cfg.json").string() + " --seed 7 --out " + again.string()).code == 0);
    CHECK(slurp(out) == slurp(again));

    write(dir / "bad.json", R"({"world": {"n_exampels": 40}})");
    CHECK(run("gen-data --config " + (dir / "bad.json").string() + " --out " + out.string()).code == 2);
    write(dir / "broken.json", "{");
    CHECK(run("gen-data --config " + (dir / "broken.json").string() + " --out " + out.string()).code == 2);
}

TEST_CASE("train, classifier, eval and sweep pipeline") {
    const auto dir = scratch("pipeline");
    const auto cfg = (dir / "cfg.json").string();
    write(cfg, kSmallConfig);
    const std::string base = " --config " + cfg;

    REQUIRE(run("train" + base + " --method sft --out " + (dir / "sft").string()).code == 0);
    CHECK(fs::exists(dir / "sft" / "model.json"));
    CHECK(slurp(dir / "sft" / "history.csv").starts_with("step,train_loss,val_loss,lr\n"));
    REQUIRE(run("train" + base + " --method sft --out " + (dir / "sft2").string()).code == 0);
    CHECK(slurp(dir / "sft" / "model.json") == slurp(dir / "sft2" / "model.json"));
    CHECK(run("train" + base + " --method dpo --out " + (dir / "x").string()).code == 2);

    REQUIRE(run("train-classifier" + base + " --out " + (dir / "clf").string()).code == 0);
    const auto clf = (dir / "clf" / "classifier.json").string();
    CHECK(slurp(dir / "clf" / "metrics.csv").starts_with("dataset,precision,recall,f1,accuracy\ntoy-small,"));

    REQUIRE(run("eval" + base + " --classifier " + clf + " --out " + (dir / "zs.csv").string()).code == 0);
    CHECK(slurp(dir / "zs.csv").starts_with("method,dataset,wr_logp,style_acc,n_test\nzero_shot,toy-small,0.0,"));
    REQUIRE(run("eval" + base + " --model " + (dir / "sft" / "model.json").string() + " --classifier " + clf
                + " --out " + (dir / "sft.csv").string())
                .code
            == 0);
    CHECK(slurp(dir / "sft.csv").find("\nsft,toy-small,") != std::string::npos);

    // Missing input files are runtime failures.
    write(dir / "empty.jsonl", "{\"oops\": 1}\n");
    CHECK(run("eval" + base + " --data " + (dir / "empty.jsonl").string() + " --out " + (dir / "e.csv").string())
              .code
          == 1);

    REQUIRE(run("sweep" + base + " --classifier " + clf + " --jobs 1 --out " + (dir / "s1").string()).code == 0);
    REQUIRE(run("sweep" + base + " --classifier " + clf + " --jobs 3 --out " + (dir / "s3").string()).code == 0);
    const auto csv = slurp(dir / "s1" / "curve.csv");
    CHECK(csv == slurp(dir / "s3" / "curve.csv"));
    CHECK(slurp(dir / "s1" / "curve.svg") == slurp(dir / "s3" / "curve.svg"));
    CHECK(slurp(dir / "s1" / "sweep_config.json") == slurp(dir / "s3" / "sweep_config.json"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    REQUIRE(run("report --in " + (dir / "s1").string() + " --out " + (dir / "r").string()).code == 0);
    CHECK(slurp(dir / "r" / "curve.csv") == csv);
    CHECK(slurp(dir / "r" / "curve.svg") == slurp(dir / "s1" / "curve.svg"));
    CHECK(run("report --in " + (dir / "nowhere").string()).code == 2);
    fs::remove_all(dir);
}
