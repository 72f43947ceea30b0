#include "stylealign/run_config.hpp"

#include "stylealign/errors.hpp"

#include <fstream>
#include <set>

namespace stylealign {

namespace {

using nlohmann::json;

// Reads keys from one JSON object and reports any it did not consume.
class Section {
  public:
    Section(const json &j, std::string path)
        : j_(j), path_(std::move(path)) {
        if (!j.is_object()) {
            throw ConfigError("config: \"" + path_ + "\" must be an object");
        }
    }

    auto has(const char *key) -> bool {
        if (!j_.contains(key)) {
            return false;
        }
        used_.insert(key);
        return true;
    }

    auto at(const char *key) -> const json & {
        used_.insert(key);
        return j_.at(key);
    }

    auto where(const char *key) const -> std::string {
        return path_.empty() ? key : path_ + "." + key;
    }

    void size(const char *key, std::size_t &out) {
        if (has(key)) {
            const auto &v = j_.at(key);
            if (!v.is_number_unsigned()) {
                throw ConfigError("config: \"" + where(key) + "\" must be a non-negative integer");
            }
            out = v.get<std::size_t>();
        }
    }

    void seed(const char *key, std::uint64_t &out) {
        if (has(key)) {
            const auto &v = j_.at(key);
            if (!v.is_number_unsigned()) {
                throw ConfigError("config: \"" + where(key) + "\" must be a non-negative integer");
            }
            out = v.get<std::uint64_t>();
        }
    }

    void number(const char *key, double &out) {
        if (has(key)) {
            const auto &v = j_.at(key);
            if (!v.is_number()) {
                throw ConfigError("config: \"" + where(key) + "\" must be a number");
            }
            out = v.get<double>();
        }
    }

    void boolean(const char *key, bool &out) {
        if (has(key)) {
            const auto &v = j_.at(key);
            if (!v.is_boolean()) {
                throw ConfigError("config: \"" + where(key) + "\" must be true or false");
            }
            out = v.get<bool>();
        }
    }

    template <class T, class Parse>
    void choice(const char *key, T &out, Parse parse, const char *allowed) {
        if (has(key)) {
            const auto &v = j_.at(key);
            const auto parsed = v.is_string() ? parse(v.get<std::string>()) : std::nullopt;
            if (!parsed) {
                throw ConfigError("config: \"" + where(key) + "\" must be one of " + allowed);
            }
            out = *parsed;
        }
    }

    void string(const char *key, std::string &out) {
        if (has(key)) {
            const auto &v = j_.at(key);
            if (!v.is_string()) {
                throw ConfigError("config: \"" + where(key) + "\" must be a string");
            }
            out = v.get<std::string>();
        }
    }

    void done() const {
        for (const auto &[key, value] : j_.items()) {
            if (!used_.contains(key)) {
                throw ConfigError("config: unknown key \"" + (path_.empty() ? key : path_ + "." + key) + "\"");
            }
        }
    }

  private:
    const json &j_;
    std::string path_;
    std::set<std::string> used_;
};

auto parse_world_style(std::string_view s) -> std::optional<Style> {
    const auto style = parse_style(s);
    return style && *style != Style::factual ? style : std::nullopt;
}

auto parse_decode_mode(std::string_view s) -> std::optional<DecodeMode> {
    if (s == "greedy") {
        return DecodeMode::greedy;
    }
    if (s == "sample") {
        return DecodeMode::sample;
    }
    return std::nullopt;
}

void read_stage(Section &parent, const char *key, StageConfig &stage) {
    if (!parent.has(key)) {
        return;
    }
    Section s(parent.at(key), parent.where(key));
    s.number("learning_rate", stage.learning_rate);
    s.size("batch_size", stage.batch_size);
    s.choice("scheduler", stage.scheduler, parse_scheduler, "\"linear_decay\", \"cosine\"");
    s.size("max_steps", stage.max_steps);
    s.done();
}

auto stage_json(const StageConfig &s) -> json {
    return {{"learning_rate", s.learning_rate},
            {"batch_size", s.batch_size},
            {"scheduler", scheduler_name(s.scheduler)},
            {"max_steps", s.max_steps}};
}

auto dataset_preset(std::string dataset, std::size_t n, Style style, SplitSizes splits, double sft_lr,
                  std::size_t sft_steps, std::size_t simpo_steps, std::size_t depth) -> RunConfig {
    RunConfig c;
    c.dataset = std::move(dataset);
    c.world.n_examples = n;
    c.world.style = style;
    c.splits = splits;
    c.trainer.sft = {sft_lr, 16, Scheduler::linear_decay, sft_steps};
    c.trainer.simpo = {2e-5, 32, Scheduler::cosine, simpo_steps};
    c.classifier.depth = depth;
    return c;
}

}    // namespace

auto preset_names() -> std::vector<std::string> {
    return {"desk", "new_yorker", "flickr_humor", "flickr_romantic"};
}

auto preset(std::string_view name) -> RunConfig {
    if (name == "desk") {
        return RunConfig{};
    }
    if (name == "new_yorker") {
        return dataset_preset("toy-newyorker", 2601, Style::humor, {2340, 130, 131}, 1.0e-5, 270, 66, 2);
    }
    if (name == "flickr_humor") {
        return dataset_preset("toy-flickr-humor", 7000, Style::humor, {5400, 600, 1000}, 1.6e-5, 600, 170, 4);
    }
    if (name == "flickr_romantic") {
        return dataset_preset("toy-flickr-romantic", 7000, Style::romantic, {5400, 600, 1000}, 0.8e-5, 600, 170, 4);
    }
    std::string known;
    for (const auto &p : preset_names()) {
        known += (known.empty() ? "" : ", ") + p;
    }
    throw ConfigError("unknown preset \"" + std::string(name) + "\" (known: " + known + ")");
}

void apply_json(RunConfig &c, const json &j) {
    Section root(j, "");
    root.string("dataset", c.dataset);
    if (root.has("world")) {
        Section s(root.at("world"), "world");
        s.seed("seed", c.world_seed);
        s.size("n_examples", c.world.n_examples);
        s.choice("style", c.world.style, parse_world_style, "\"humor\", \"romantic\"");
        s.size("n_subjects", c.world.n_subjects);
        s.size("n_actions", c.world.n_actions);
        s.size("n_settings", c.world.n_settings);
        s.size("markers_per_style", c.world.markers_per_style);
        s.size("min_markers", c.world.min_markers);
        s.size("max_markers", c.world.max_markers);
        s.size("vocab_size", c.world.vocab_size);
        s.size("feature_dim", c.world.feature_dim);
        s.number("noise_sigma", c.world.noise_sigma);
        s.done();
    }
    if (root.has("splits")) {
        Section s(root.at("splits"), "splits");
        s.size("train", c.splits.train);
        s.size("validation", c.splits.validation);
        s.size("test", c.splits.test);
        s.seed("split_seed", c.split_seed);
        s.done();
    }
    if (root.has("model")) {
        Section s(root.at("model"), "model");
        s.size("vocab_size", c.model.vocab_size);
        s.size("d_model", c.model.d_model);
        s.size("n_layers", c.model.n_layers);
        s.size("feature_dim", c.model.feature_dim);
        s.size("ffn_mult", c.model.ffn_mult);
        s.seed("init_seed", c.init.seed);
        s.number("init_stddev", c.init.stddev);
        s.boolean("zero_output_head", c.init.zero_output_head);
        s.done();
    }
    if (root.has("objective")) {
        Section s(root.at("objective"), "objective");
        s.choice("method", c.method, parse_objective, "\"sft\", \"simpo\"");
        s.number("beta", c.simpo.beta);
        s.number("gamma", c.simpo.gamma);
        s.done();
    }
    if (root.has("trainer")) {
        Section s(root.at("trainer"), "trainer");
        read_stage(s, "sft", c.trainer.sft);
        read_stage(s, "simpo", c.trainer.simpo);
        s.size("eval_interval", c.trainer.eval_interval);
        s.size("patience", c.trainer.patience);
        s.number("clip_norm", c.trainer.clip_norm);
        s.seed("subset_seed", c.trainer.subset_seed);
        s.number("budget_percent", c.trainer.budget_percent);
        s.done();
    }
    if (root.has("classifier")) {
        Section s(root.at("classifier"), "classifier");
        s.size("depth", c.classifier.depth);
        s.size("hidden", c.classifier.hidden);
        s.size("embed_dim", c.classifier.embed_dim);
        s.size("max_epochs", c.classifier.max_epochs);
        s.number("learning_rate", c.classifier.learning_rate);
        s.size("batch_size", c.classifier.batch_size);
        s.seed("embedding_seed", c.classifier.embedding_seed);
        s.seed("init_seed", c.classifier.init_seed);
        s.seed("shuffle_seed", c.classifier.shuffle_seed);
        s.done();
    }
    if (root.has("eval")) {
        Section s(root.at("eval"), "eval");
        s.number("temperature", c.decode.temperature);
        s.size("max_tokens", c.decode.max_tokens);
        s.size("beam", c.decode.beam);
        s.choice("mode", c.decode.mode, parse_decode_mode, "\"greedy\", \"sample\"");
        s.seed("seed", c.decode_seed);
        s.done();
    }
    if (root.has("sweep")) {
        Section s(root.at("sweep"), "sweep");
        if (s.has("grid")) {
            const auto &g = s.at("grid");
            if (!g.is_array() || !std::all_of(g.begin(), g.end(), [](const json &v) { return v.is_number(); })) {
                throw ConfigError("config: \"sweep.grid\" must be an array of numbers");
            }
            c.sweep.grid = g.get<std::vector<double>>();
        }
        if (s.has("subset_seeds")) {
            const auto &g = s.at("subset_seeds");
            if (!g.is_array()
                || !std::all_of(g.begin(), g.end(), [](const json &v) { return v.is_number_unsigned(); })) {
                throw ConfigError("config: \"sweep.subset_seeds\" must be an array of non-negative integers");
            }
            c.sweep.subset_seeds = g.get<std::vector<std::uint64_t>>();
        }
        s.number("epsilon", c.sweep.epsilon);
        s.done();
    }
    root.done();
}

auto run_config_to_json(const RunConfig &c) -> json {
    const auto &w = c.world;
    return {
        {"dataset", c.dataset},
        {"world",
         {{"seed", c.world_seed},
          {"n_examples", w.n_examples},
          {"style", style_name(w.style)},
          {"n_subjects", w.n_subjects},
          {"n_actions", w.n_actions},
          {"n_settings", w.n_settings},
          {"markers_per_style", w.markers_per_style},
          {"min_markers", w.min_markers},
          {"max_markers", w.max_markers},
          {"vocab_size", w.vocab_size},
          {"feature_dim", w.feature_dim},
          {"noise_sigma", w.noise_sigma}}},
        {"splits",
         {{"train", c.splits.train},
          {"validation", c.splits.validation},
          {"test", c.splits.test},
          {"split_seed", c.split_seed}}},
        {"model",
         {{"vocab_size", c.model.vocab_size},
          {"d_model", c.model.d_model},
          {"n_layers", c.model.n_layers},
          {"feature_dim", c.model.feature_dim},
          {"ffn_mult", c.model.ffn_mult},
          {"init_seed", c.init.seed},
          {"init_stddev", c.init.stddev},
          {"zero_output_head", c.init.zero_output_head}}},
        {"objective", {{"method", objective_name(c.method)}, {"beta", c.simpo.beta}, {"gamma", c.simpo.gamma}}},
        {"trainer",
         {{"sft", stage_json(c.trainer.sft)},
          {"simpo", stage_json(c.trainer.simpo)},
          {"eval_interval", c.trainer.eval_interval},
          {"patience", c.trainer.patience},
          {"clip_norm", c.trainer.clip_norm},
          {"subset_seed", c.trainer.subset_seed},
          {"budget_percent", c.trainer.budget_percent}}},
        {"classifier",
         {{"depth", c.classifier.depth},
          {"hidden", c.classifier.hidden},
          {"embed_dim", c.classifier.embed_dim},
          {"max_epochs", c.classifier.max_epochs},
          {"learning_rate", c.classifier.learning_rate},
          {"batch_size", c.classifier.batch_size},
          {"embedding_seed", c.classifier.embedding_seed},
          {"init_seed", c.classifier.init_seed},
          {"shuffle_seed", c.classifier.shuffle_seed}}},
        {"eval",
         {{"temperature", c.decode.temperature},
          {"max_tokens", c.decode.max_tokens},
          {"beam", c.decode.beam},
          {"mode", c.decode.mode == DecodeMode::sample ? "sample" : "greedy"},
          {"seed", c.decode_seed}}},
        {"sweep", {{"grid", c.sweep.grid}, {"subset_seeds", c.sweep.subset_seeds}, {"epsilon", c.sweep.epsilon}}},
    };
}

auto load_run_config(const std::optional<std::string> &preset_name, const std::optional<std::filesystem::path> &path)
    -> RunConfig {
    RunConfig c = preset(preset_name.value_or("desk"));
    if (path) {
        std::ifstream in(*path);
        if (!in) {
            throw ConfigError("cannot open config " + path->string());
        }
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error &e) {
            throw ConfigError("config " + path->string() + " is not valid JSON: " + e.what());
        }
        apply_json(c, j);
    }
    validate_run(c);
    return c;
}

void validate_run(const RunConfig &c) {
    if (c.dataset.empty() || c.dataset.find_first_of(",\n\r") != std::string::npos) {
        throw ConfigError("dataset tag must be non-empty and free of commas");
    }
    validate_world(c.world);
    if (c.model.vocab_size != c.world.vocab_size) {
        throw ConfigError("model.vocab_size " + std::to_string(c.model.vocab_size) + " differs from world.vocab_size "
                          + std::to_string(c.world.vocab_size));
    }
    if (c.model.feature_dim != c.world.feature_dim) {
        throw ConfigError("model.feature_dim " + std::to_string(c.model.feature_dim)
                          + " differs from world.feature_dim " + std::to_string(c.world.feature_dim));
    }
    if (c.splits.train < 1 || c.splits.validation < 1 || c.splits.test < 1) {
        throw ConfigError("every split must hold at least one example");
    }
    if (!(c.trainer.budget_percent > 0.0 && c.trainer.budget_percent <= 100.0)) {
        throw ConfigError("trainer.budget_percent must be in (0, 100]");
    }
    validate_train(train_config(c, Objective::sft));
    validate_train(train_config(c, Objective::simpo));
    validate_classifier_train(classifier_config(c));
    validate_decode(c.decode);
    validate_sweep(c.sweep);
}

auto train_config(const RunConfig &c, Objective method) -> TrainConfig {
    const StageConfig &stage = method == Objective::simpo ? c.trainer.simpo : c.trainer.sft;
    TrainConfig t;
    t.learning_rate = stage.learning_rate;
    t.batch_size = stage.batch_size;
    t.scheduler = stage.scheduler;
    t.max_steps = stage.max_steps;
    t.eval_interval = c.trainer.eval_interval;
    t.patience = c.trainer.patience;
    t.split_seed = c.split_seed;
    t.init_seed = c.init.seed;
    t.subset_seed = c.trainer.subset_seed;
    t.objective = method;
    t.simpo = c.simpo;
    t.clip_norm = c.trainer.clip_norm;
    return t;
}

auto classifier_config(const RunConfig &c) -> ClassifierTrainConfig {
    ClassifierTrainConfig k = c.classifier;
    k.vocab_size = c.world.vocab_size;
    return k;
}

}    // namespace stylealign
