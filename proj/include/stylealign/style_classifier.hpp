#pragma once

// Evaluation-side binary style classifier. A (image, caption) pair is
// embedded as [image features | mean of frozen random token vectors] and fed
// to a small GELU feedforward head with a sigmoid output.

#include "stylealign/autodiff.hpp"
#include "stylealign/checkpoint.hpp"
#include "stylealign/toy_world.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stylealign {

struct EmbedderConfig {
    std::size_t vocab_size = 64;
    std::size_t feature_dim = 16;
    std::size_t embed_dim = 16;
    std::uint64_t embedding_seed = 0;

    friend auto operator==(const EmbedderConfig &, const EmbedderConfig &) -> bool = default;
};

class CaptionEmbedder {
  public:
    explicit CaptionEmbedder(const EmbedderConfig &config);

    [[nodiscard]] auto config() const -> const EmbedderConfig & {
        return config_;
    }
    [[nodiscard]] auto width() const -> std::size_t {
        return config_.feature_dim + config_.embed_dim;
    }
    // Joint embedding of width feature_dim + embed_dim.
    [[nodiscard]] auto embed(std::span<const double> image, std::span<const TokenId> caption) const
        -> std::vector<double>;

  private:
    EmbedderConfig config_;
    Tensor table_;
};

// Convenience wrapper that builds the table on every call.
auto embed_pair(std::span<const double> image, std::span<const TokenId> caption, const EmbedderConfig &config)
    -> std::vector<double>;

struct HeadConfig {
    std::size_t depth = 2;    // number of affine layers: 2 or 4
    std::size_t hidden = 64;
    EmbedderConfig embedder;

    friend auto operator==(const HeadConfig &, const HeadConfig &) -> bool = default;
};

class StyleClassifier {
  public:
    StyleClassifier(const HeadConfig &config, std::uint64_t init_seed);

    [[nodiscard]] auto config() const -> const HeadConfig & {
        return config_;
    }
    [[nodiscard]] auto embedder() const -> const CaptionEmbedder & {
        return embedder_;
    }
    [[nodiscard]] auto params() const -> const ParameterSet & {
        return params_;
    }
    auto params() -> ParameterSet & {
        return params_;
    }

    // x is [n x width]; returns logits [n x 1].
    auto forward(Tape &tape, Var x) const -> Var;
    [[nodiscard]] auto logit(std::span<const double> joint) const -> double;

    [[nodiscard]] auto to_checkpoint() const -> Checkpoint;
    static auto from_checkpoint(const Checkpoint &ckpt) -> StyleClassifier;
    void save(const std::filesystem::path &path) const;
    static auto load(const std::filesystem::path &path) -> StyleClassifier;

    friend auto operator==(const StyleClassifier &a, const StyleClassifier &b) -> bool {
        return a.config_ == b.config_ && a.params_ == b.params_;
    }

  private:
    StyleClassifier(const HeadConfig &config, ParameterSet params);

    HeadConfig config_;
    CaptionEmbedder embedder_;
    ParameterSet params_;
};

struct Classification {
    double probability = 0.5;
    int label = 1;
};

inline constexpr double kDecisionThreshold = 0.5;

// label = 1 iff probability >= 0.5.
auto classify_logit(double logit) -> Classification;
auto classify(const StyleClassifier &head, std::span<const double> joint) -> Classification;
auto classify_caption(const StyleClassifier &head, std::span<const double> image, std::span<const TokenId> caption)
    -> Classification;

struct LabeledPair {
    ImageFeatures image;
    Caption caption;
    int label = 0;
};

// Each triplet yields (image, stylized, 1) and (image, factual, 0).
auto labeled_pairs(std::span<const PreferenceTriplet> triplets) -> std::vector<LabeledPair>;

// Binary cross-entropy of probability p against label y.
auto bce(double probability, int label) -> double;
// Mean BCE of logits [n x 1] against labels, computed as -log_sigmoid(+-z).
auto bce_with_logits(Var logits, std::span<const int> labels) -> Var;

struct ClassifierTrainConfig {
    std::size_t max_epochs = 20;
    double learning_rate = 2e-4;
    std::size_t batch_size = 32;
    std::size_t depth = 2;
    std::size_t hidden = 64;
    std::size_t embed_dim = 16;
    std::size_t vocab_size = 64;
    std::uint64_t embedding_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t shuffle_seed = 0;
};

void validate_classifier_train(const ClassifierTrainConfig &config);

struct ClassifierTrainResult {
    StyleClassifier head;
    std::size_t best_epoch = 0;
    std::vector<double> val_losses;    // index 0 is the untrained head
};

auto classifier_loss(const StyleClassifier &head, std::span<const LabeledPair> data) -> double;

auto train_classifier(std::span<const LabeledPair> train, std::span<const LabeledPair> validation,
                      const ClassifierTrainConfig &config) -> ClassifierTrainResult;

struct ClassifierMetrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

// Percentages with the target style as the positive class.
auto classifier_metrics(std::span<const int> predictions, std::span<const int> labels) -> ClassifierMetrics;
auto evaluate_classifier(const StyleClassifier &head, std::span<const LabeledPair> data) -> ClassifierMetrics;

// `dataset,precision,recall,f1,accuracy` header and a one-decimal row.
auto metrics_csv(const std::string &dataset, const ClassifierMetrics &m) -> std::string;

}    // namespace stylealign
