#pragma once

// Synthetic stylistic-captioning worlds. Each example is a latent scene
// (subject, action, setting) rendered as a noisy feature vector, a factual
// caption "SUBJ ACT SETTING <eos>" and a stylized caption that appends
// 2-4 marker tokens from the style's lexicon before <eos>.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stylealign {

enum class Style { factual, humor, romantic };

// Absent means no instruction slot.
using Instruction = std::optional<Style>;

auto style_name(Style s) -> std::string_view;
auto parse_style(std::string_view name) -> std::optional<Style>;

using TokenId = std::size_t;
using Caption = std::vector<TokenId>;
using ImageFeatures = std::vector<double>;

inline constexpr TokenId kEos = 0;
inline constexpr std::size_t kMaxCaptionTokens = 128;

struct SceneAttributes {
    std::size_t subject_id = 0;
    std::size_t action_id = 0;
    std::size_t setting_id = 0;
};

struct WorldConfig {
    std::size_t n_examples = 2601;
    Style style = Style::humor;
    std::size_t n_subjects = 5;
    std::size_t n_actions = 5;
    std::size_t n_settings = 5;
    std::size_t markers_per_style = 16;
    std::size_t min_markers = 2;
    std::size_t max_markers = 4;
    std::size_t vocab_size = 64;
    std::size_t feature_dim = 16;
    double noise_sigma = 0.1;
};

// Token-id layout: <eos>, subjects, actions, settings, humor markers,
// romantic markers, then unused ids up to vocab_size.
class Lexicon {
  public:
    explicit Lexicon(const WorldConfig &config);

    [[nodiscard]] auto subject_token(std::size_t id) const -> TokenId;
    [[nodiscard]] auto action_token(std::size_t id) const -> TokenId;
    [[nodiscard]] auto setting_token(std::size_t id) const -> TokenId;
    [[nodiscard]] auto marker_token(Style style, std::size_t k) const -> TokenId;
    [[nodiscard]] auto is_marker(TokenId t) const -> bool;
    [[nodiscard]] auto is_marker(TokenId t, Style style) const -> bool;
    [[nodiscard]] auto markers_per_style() const -> std::size_t {
        return markers_;
    }
    // Scene recovered from a factual caption's first three tokens.
    [[nodiscard]] auto scene_of(const Caption &factual) const -> SceneAttributes;

  private:
    std::size_t subjects_;
    std::size_t actions_;
    std::size_t settings_;
    std::size_t markers_;
};

struct PreferenceTriplet {
    std::string example_id;
    ImageFeatures image;
    Caption factual;     // negative
    Caption stylized;    // positive
    Style style = Style::humor;

    friend auto operator==(const PreferenceTriplet &, const PreferenceTriplet &) -> bool = default;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};

struct DatasetSplits {
    std::vector<PreferenceTriplet> train;
    std::vector<PreferenceTriplet> validation;
    std::vector<PreferenceTriplet> test;
    std::uint64_t split_seed = 0;
};

// Throws ConfigError when the vocabulary or feature width cannot host the
// configured lexicons.
void validate_world(const WorldConfig &config);

auto synthesize_dataset(const WorldConfig &config, std::uint64_t seed) -> std::vector<PreferenceTriplet>;

auto split_dataset(const std::vector<PreferenceTriplet> &data, SplitSizes sizes, std::uint64_t split_seed)
    -> DatasetSplits;

// Number of examples a budget keeps: round(budget * n / 100).
auto budget_size(double budget_percent, std::size_t n) -> std::size_t;

// Prefix of a subset_seed-keyed permutation; nested across budgets.
auto truncate_train(const std::vector<PreferenceTriplet> &train, double budget_percent, std::uint64_t subset_seed)
    -> std::vector<PreferenceTriplet>;

void write_jsonl(const std::vector<PreferenceTriplet> &triplets, const std::filesystem::path &path);
auto read_jsonl(const std::filesystem::path &path) -> std::vector<PreferenceTriplet>;

// Single-line codec used by the file functions; `line_no` is 1-based and
// only used for error messages.
auto triplet_to_json_line(const PreferenceTriplet &t) -> std::string;
auto triplet_from_json_line(std::string_view line, std::size_t line_no) -> PreferenceTriplet;

}    // namespace stylealign
