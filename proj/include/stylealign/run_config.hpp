#pragma once

// The single JSON document that drives every CLI subcommand. Sections:
// world, splits, model, objective, trainer, classifier, eval, sweep, plus a
// dataset tag used in reports. Unknown keys are rejected; every key is
// optional and overrides the preset (or default) value.

#include "stylealign/captioner.hpp"
#include "stylealign/objectives.hpp"
#include "stylealign/style_classifier.hpp"
#include "stylealign/sweep.hpp"
#include "stylealign/toy_world.hpp"
#include "stylealign/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stylealign {

struct StageConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    Scheduler scheduler = Scheduler::linear_decay;
    std::size_t max_steps = 270;

    friend auto operator==(const StageConfig &, const StageConfig &) -> bool = default;
};

struct TrainerSection {
    StageConfig sft{1e-3, 16, Scheduler::linear_decay, 270};
    StageConfig simpo{1e-3, 32, Scheduler::cosine, 66};
    std::size_t eval_interval = 10;
    std::size_t patience = 5;
    double clip_norm = 1.0;
    std::uint64_t subset_seed = 0;
    double budget_percent = 100.0;
};

struct RunConfig {
    std::string dataset = "toy-newyorker";
    WorldConfig world;
    std::uint64_t world_seed = 0;
    SplitSizes splits{2340, 130, 131};
    std::uint64_t split_seed = 0;
    CaptionerConfig model;
    InitOptions init;
    Objective method = Objective::simpo;
    SimPOHyper simpo;
    TrainerSection trainer;
    ClassifierTrainConfig classifier;
    DecodeConfig decode;
    std::uint64_t decode_seed = 0;
    SweepConfig sweep;
};

// "desk" (the default) plus three dataset presets with the reference
// training hyperparameters: new_yorker, flickr_humor, flickr_romantic.
auto preset_names() -> std::vector<std::string>;
auto preset(std::string_view name) -> RunConfig;

// Overlays `j` onto `config`. Throws ConfigError on unknown keys or bad types.
void apply_json(RunConfig &config, const nlohmann::json &j);
auto run_config_to_json(const RunConfig &config) -> nlohmann::json;
auto load_run_config(const std::optional<std::string> &preset_name, const std::optional<std::filesystem::path> &path)
    -> RunConfig;

// Cross-section consistency; throws ConfigError.
void validate_run(const RunConfig &config);

auto train_config(const RunConfig &config, Objective method) -> TrainConfig;
auto classifier_config(const RunConfig &config) -> ClassifierTrainConfig;

}    // namespace stylealign
