#include "stylealign/toy_world.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace stylealign {

namespace {
constexpr std::uint64_t kSplitTag = 0x5350'4C49'54ULL;     // "SPLIT"
constexpr std::uint64_t kSubsetTag = 0x5355'4253'4554ULL;  // "SUBSET"
}    // namespace

auto style_name(Style s) -> std::string_view {
    switch (s) {
    case Style::factual: return "factual";
    case Style::humor: return "humor";
    case Style::romantic: return "romantic";
    }
    return "?";
}

auto parse_style(std::string_view name) -> std::optional<Style> {
    if (name == "factual") {
        return Style::factual;
    }
    if (name == "humor") {
        return Style::humor;
    }
    if (name == "romantic") {
        return Style::romantic;
    }
    return std::nullopt;
}

// ----------------------------------------------------------------------------
// Lexicon

Lexicon::Lexicon(const WorldConfig &config)
    : subjects_(config.n_subjects), actions_(config.n_actions), settings_(config.n_settings),
      markers_(config.markers_per_style) {}

auto Lexicon::subject_token(std::size_t id) const -> TokenId {
    return 1 + id;
}
auto Lexicon::action_token(std::size_t id) const -> TokenId {
    return 1 + subjects_ + id;
}
auto Lexicon::setting_token(std::size_t id) const -> TokenId {
    return 1 + subjects_ + actions_ + id;
}

auto Lexicon::marker_token(Style style, std::size_t k) const -> TokenId {
    const std::size_t base = 1 + subjects_ + actions_ + settings_;
    if (style == Style::factual) {
        throw ContractError("factual style has no marker lexicon");
    }
    return base + (style == Style::romantic ? markers_ : 0) + k;
}

auto Lexicon::is_marker(TokenId t) const -> bool {
    const std::size_t base = 1 + subjects_ + actions_ + settings_;
    return t >= base && t < base + 2 * markers_;
}

auto Lexicon::is_marker(TokenId t, Style style) const -> bool {
    if (style == Style::factual) {
        return false;
    }
    const TokenId first = marker_token(style, 0);
    return t >= first && t < first + markers_;
}

auto Lexicon::scene_of(const Caption &factual) const -> SceneAttributes {
    if (factual.size() < 3) {
        throw ContractError("factual caption shorter than the scene template");
    }
    return {factual[0] - subject_token(0), factual[1] - action_token(0), factual[2] - setting_token(0)};
}

// ----------------------------------------------------------------------------
// synthesis

void validate_world(const WorldConfig &c) {
    if (c.n_examples < 1) {
        throw ConfigError("world.n_examples must be >= 1");
    }
    if (c.n_subjects < 1 || c.n_actions < 1 || c.n_settings < 1 || c.markers_per_style < 1) {
        throw ConfigError("world: every lexicon needs at least one entry");
    }
    const std::size_t needed = 1 + c.n_subjects + c.n_actions + c.n_settings + 2 * c.markers_per_style;
    if (needed > c.vocab_size) {
        throw ConfigError("world: vocabulary of " + std::to_string(c.vocab_size) + " tokens cannot host the "
                          + std::to_string(needed) + " reserved ids");
    }
    if (c.n_subjects + c.n_actions + c.n_settings > c.feature_dim) {
        throw ConfigError("world: feature_dim " + std::to_string(c.feature_dim)
                          + " is smaller than the one-hot attribute blocks");
    }
    if (c.min_markers < 1 || c.min_markers > c.max_markers || 3 + c.max_markers > kMaxCaptionTokens) {
        throw ConfigError("world: marker count range is invalid");
    }
    if (c.style == Style::factual) {
        throw ConfigError("world.style must be a non-factual style");
    }
    if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma)) {
        throw ConfigError("world.noise_sigma must be finite and >= 0");
    }
}

auto synthesize_dataset(const WorldConfig &config, std::uint64_t seed) -> std::vector<PreferenceTriplet> {
    validate_world(config);
    const Lexicon lex(config);
    std::vector<PreferenceTriplet> out;
    out.reserve(config.n_examples);
    for (std::size_t i = 0; i < config.n_examples; ++i) {
        CounterRng rng(derive_key(seed, i));
        const SceneAttributes scene{static_cast<std::size_t>(rng.below(config.n_subjects)),
                                    static_cast<std::size_t>(rng.below(config.n_actions)),
                                    static_cast<std::size_t>(rng.below(config.n_settings))};

        ImageFeatures image(config.feature_dim, 0.0);
        image[scene.subject_id] = 1.0;
        image[config.n_subjects + scene.action_id] = 1.0;
        image[config.n_subjects + config.n_actions + scene.setting_id] = 1.0;
        for (auto &v : image) {
            v += rng.normal(0.0, config.noise_sigma);
        }

        const Caption body = {lex.subject_token(scene.subject_id), lex.action_token(scene.action_id),
                              lex.setting_token(scene.setting_id)};
        Caption factual = body;
        factual.push_back(kEos);

        Caption stylized = body;
        const auto n_markers =
            config.min_markers + static_cast<std::size_t>(rng.below(config.max_markers - config.min_markers + 1));
        for (std::size_t m = 0; m < n_markers; ++m) {
            stylized.push_back(lex.marker_token(config.style, rng.below(config.markers_per_style)));
        }
        stylized.push_back(kEos);

        char id[64];
        std::snprintf(id, sizeof id, "%s-%llu-%05zu", std::string(style_name(config.style)).c_str(),
                      static_cast<unsigned long long>(seed), i);
        out.push_back({id, std::move(image), std::move(factual), std::move(stylized), config.style});
    }
    return out;
}

// ----------------------------------------------------------------------------
// splits and budgets

auto split_dataset(const std::vector<PreferenceTriplet> &data, SplitSizes sizes, std::uint64_t split_seed)
    -> DatasetSplits {
    const std::size_t total = sizes.train + sizes.validation + sizes.test;
    if (total != data.size()) {
        throw ConfigError("split sizes sum to " + std::to_string(total) + " but the dataset has "
                          + std::to_string(data.size()) + " examples");
    }
    const auto perm = seeded_permutation(data.size(), derive_key(split_seed, kSplitTag));
    DatasetSplits out;
    out.split_seed = split_seed;
    out.train.reserve(sizes.train);
    out.validation.reserve(sizes.validation);
    out.test.reserve(sizes.test);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto &t = data[perm[i]];
        if (i < sizes.train) {
            out.train.push_back(t);
        } else if (i < sizes.train + sizes.validation) {
            out.validation.push_back(t);
        } else {
            out.test.push_back(t);
        }
    }
    return out;
}

auto budget_size(double budget_percent, std::size_t n) -> std::size_t {
    if (!(budget_percent > 0.0 && budget_percent <= 100.0)) {
        throw RangeError("budget_percent must lie in (0, 100], got " + std::to_string(budget_percent));
    }
    return static_cast<std::size_t>(std::llround(budget_percent * static_cast<double>(n) / 100.0));
}

auto truncate_train(const std::vector<PreferenceTriplet> &train, double budget_percent, std::uint64_t subset_seed)
    -> std::vector<PreferenceTriplet> {
    const std::size_t keep = budget_size(budget_percent, train.size());
    const auto perm = seeded_permutation(train.size(), derive_key(subset_seed, kSubsetTag));
    std::vector<PreferenceTriplet> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        out.push_back(train[perm[i]]);
    }
    return out;
}

// ----------------------------------------------------------------------------
// JSONL

auto triplet_to_json_line(const PreferenceTriplet &t) -> std::string {
    nlohmann::json j;
    j["id"] = t.example_id;
    j["features"] = t.image;
    j["factual"] = t.factual;
    j["stylized"] = t.stylized;
    j["style"] = std::string(style_name(t.style));
    return j.dump();
}

namespace {

auto require_field(const nlohmann::json &j, const char *field, std::size_t line_no) -> const nlohmann::json & {
    if (!j.contains(field)) {
        throw SchemaError("line " + std::to_string(line_no) + ": missing field \"" + field + "\"");
    }
    return j.at(field);
}

auto read_caption(const nlohmann::json &j, const char *field, std::size_t line_no) -> Caption {
    const auto &arr = require_field(j, field, line_no);
    if (!arr.is_array() || arr.empty()) {
        throw SchemaError("line " + std::to_string(line_no) + ": field \"" + field
                          + "\" must be a non-empty array of token ids");
    }
    Caption c;
    c.reserve(arr.size());
    for (const auto &v : arr) {
        if (!v.is_number_unsigned()) {
            throw SchemaError("line " + std::to_string(line_no) + ": field \"" + field
                              + "\" holds a non-token value");
        }
        c.push_back(v.get<TokenId>());
    }
    return c;
}

}    // namespace

auto triplet_from_json_line(std::string_view line, std::size_t line_no) -> PreferenceTriplet {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) {
        throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
    }
    PreferenceTriplet t;
    const auto &id = require_field(j, "id", line_no);
    if (!id.is_string()) {
        throw SchemaError("line " + std::to_string(line_no) + ": field \"id\" must be a string");
    }
    t.example_id = id.get<std::string>();

    const auto &features = require_field(j, "features", line_no);
    if (!features.is_array() || features.empty()) {
        throw SchemaError("line " + std::to_string(line_no) + ": field \"features\" must be a non-empty array");
    }
    for (const auto &v : features) {
        if (!v.is_number()) {
            throw SchemaError("line " + std::to_string(line_no) + ": field \"features\" holds a non-number");
        }
        t.image.push_back(v.get<double>());
    }
    t.factual = read_caption(j, "factual", line_no);
    t.stylized = read_caption(j, "stylized", line_no);

    const auto &style = require_field(j, "style", line_no);
    const auto parsed = style.is_string() ? parse_style(style.get<std::string>()) : std::nullopt;
    if (!parsed || *parsed == Style::factual) {
        throw SchemaError("line " + std::to_string(line_no) + ": field \"style\" must be \"humor\" or \"romantic\", got "
                          + style.dump());
    }
    t.style = *parsed;
    for (const auto &[key, value] : j.items()) {
        if (key != "id" && key != "features" && key != "factual" && key != "stylized" && key != "style") {
            throw SchemaError("line " + std::to_string(line_no) + ": unknown field \"" + key + "\"");
        }
    }
    return t;
}

void write_jsonl(const std::vector<PreferenceTriplet> &triplets, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    for (const auto &t : triplets) {
        out << triplet_to_json_line(t) << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

auto read_jsonl(const std::filesystem::path &path) -> std::vector<PreferenceTriplet> {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::vector<PreferenceTriplet> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        out.push_back(triplet_from_json_line(line, line_no));
    }
    return out;
}

}    // namespace stylealign
