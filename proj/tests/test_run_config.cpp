#include "stylealign/errors.hpp"
#include "stylealign/run_config.hpp"

#include <doctest.h>

using namespace stylealign;
using nlohmann::json;

TEST_CASE("dataset presets carry the reference hyperparameters") {
    struct Row {
        const char *name;
        double sft_lr;
        std::size_t sft_steps, simpo_steps, depth, n;
        SplitSizes splits;
        Style style;
    };
    const Row rows[] = {{"new_yorker", 1.0e-5, 270, 66, 2, 2601, {2340, 130, 131}, Style::humor},
                        {"flickr_humor", 1.6e-5, 600, 170, 4, 7000, {5400, 600, 1000}, Style::humor},
                        {"flickr_romantic", 0.8e-5, 600, 170, 4, 7000, {5400, 600, 1000}, Style::romantic}};
    for (const auto &r : rows) {
        CAPTURE(r.name);
        const auto c = preset(r.name);
        CHECK(c.trainer.sft == StageConfig{r.sft_lr, 16, Scheduler::linear_decay, r.sft_steps});
        CHECK(c.trainer.simpo == StageConfig{2e-5, 32, Scheduler::cosine, r.simpo_steps});
        CHECK(c.classifier.depth == r.depth);
        CHECK(c.classifier.max_epochs == 20);
        CHECK(c.classifier.learning_rate == 2e-4);
        CHECK(c.classifier.batch_size == 32);
        CHECK(c.decode.temperature == 0.7);
        CHECK(c.decode.max_tokens == 128);
        CHECK(c.decode.beam == 1);
        CHECK(c.world.n_examples == r.n);
        CHECK(c.world.style == r.style);
        CHECK(c.splits.train == r.splits.train);
        CHECK(c.splits.validation == r.splits.validation);
        CHECK(c.splits.test == r.splits.test);
        CHECK_NOTHROW(validate_run(c));
    }
    CHECK_THROWS_AS(preset("imagenet"), ConfigError);
}

TEST_CASE("json overlay") {
    RunConfig c;
    apply_json(c, json::parse(R"({"trainer": {"sft": {"learning_rate": 0.5}, "patience": 0},
                                  "world": {"seed": 9}, "sweep": {"grid": [10, 100]}})"));
    CHECK(c.trainer.sft.learning_rate == 0.5);
    CHECK(c.trainer.sft.max_steps == 270);
    CHECK(c.trainer.patience == 0);
    CHECK(c.world_seed == 9);
    CHECK(c.sweep.grid == std::vector<double>{10, 100});

    CHECK_THROWS_AS(apply_json(c, json::parse(R"({"wrld": {}})")), ConfigError);
    CHECK_THROWS_AS(apply_json(c, json::parse(R"({"trainer": {"sft": {"lr": 1}}})")), ConfigError);
    CHECK_THROWS_AS(apply_json(c, json::parse(R"({"trainer": {"patience": -1}})")), ConfigError);
    CHECK_THROWS_AS(apply_json(c, json::parse(R"({"objective": {"method": "dpo"}})")), ConfigError);
    CHECK_THROWS_AS(apply_json(c, json::parse(R"({"world": {"style": "factual"}})")), ConfigError);
    CHECK_THROWS_AS(apply_json(c, json::parse(R"([1, 2])")), ConfigError);
    try {
        apply_json(c, json::parse(R"({"classifier": {"depth": 2, "widht": 3}})"));
        FAIL("expected ConfigError");
    } catch (const ConfigError &e) {
        CHECK(std::string(e.what()).find("classifier.widht") != std::string::npos);
    }
}

TEST_CASE("config json round trip") {
    for (const auto &name : preset_names()) {
        const auto c = preset(name);
        const auto j = run_config_to_json(c);
        RunConfig d;
        apply_json(d, j);
        CHECK(run_config_to_json(d) == j);
    }
}

TEST_CASE("cross-section validation") {
    auto c = preset("desk");
    c.model.vocab_size = 32;
    CHECK_THROWS_AS(validate_run(c), ConfigError);
    c = preset("desk");
    c.trainer.budget_percent = 0.0;
    CHECK_THROWS_AS(validate_run(c), ConfigError);
    c = preset("desk");
    c.trainer.simpo.batch_size = 0;
    CHECK_THROWS_AS(validate_run(c), ConfigError);
}

TEST_CASE("train_config assembles stage and seeds") {
    auto c = preset("new_yorker");
    c.split_seed = 4;
    c.init.seed = 5;
    c.trainer.subset_seed = 6;
    const auto t = train_config(c, Objective::simpo);
    CHECK(t.learning_rate == 2e-5);
    CHECK(t.batch_size == 32);
    CHECK(t.scheduler == Scheduler::cosine);
    CHECK(t.max_steps == 66);
    CHECK(t.split_seed == 4);
    CHECK(t.init_seed == 5);
    CHECK(t.subset_seed == 6);
    CHECK(t.objective == Objective::simpo);
}
