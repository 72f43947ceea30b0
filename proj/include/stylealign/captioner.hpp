#pragma once

// A tiny image-conditioned causal decoder. The input sequence is
//   [image slot][instruction slot, if any][caption tokens...]
// where the image slot is a linear projection of the feature vector and the
// instruction slot is a learned per-style vector. Each block is pre-norm
// single-head attention followed by a GELU feedforward, both residual.

#include "stylealign/autodiff.hpp"
#include "stylealign/checkpoint.hpp"
#include "stylealign/toy_world.hpp"

#include <cstdint>
#include <filesystem>
#include <span>

namespace stylealign {

struct CaptionerConfig {
    std::size_t vocab_size = 64;
    std::size_t d_model = 32;
    std::size_t n_layers = 2;
    std::size_t feature_dim = 16;
    std::size_t ffn_mult = 4;

    friend auto operator==(const CaptionerConfig &, const CaptionerConfig &) -> bool = default;
};

struct InitOptions {
    std::uint64_t seed = 0;
    double stddev = 0.02;
    bool zero_output_head = true;
};

// Two conditioning slots plus the longest caption.
inline constexpr std::size_t kMaxPositions = 2 + kMaxCaptionTokens;

class TinyCaptioner {
  public:
    TinyCaptioner(const CaptionerConfig &config, const InitOptions &init);

    [[nodiscard]] auto config() const -> const CaptionerConfig & {
        return config_;
    }
    [[nodiscard]] auto params() const -> const ParameterSet & {
        return params_;
    }
    auto params() -> ParameterSet & {
        return params_;
    }

    // Logits predicting tokens[0..n-1] and the token after them: row 0 comes
    // from the last conditioning slot, row i+1 from token i. Shape
    // [(n + 1) x V].
    auto forward(Tape &tape, std::span<const double> image, Instruction instruction,
                 std::span<const TokenId> tokens) const -> Var;

    void save(const std::filesystem::path &path) const;
    static auto load(const std::filesystem::path &path) -> TinyCaptioner;
    [[nodiscard]] auto to_checkpoint() const -> Checkpoint;
    static auto from_checkpoint(const Checkpoint &ckpt) -> TinyCaptioner;

    friend auto operator==(const TinyCaptioner &a, const TinyCaptioner &b) -> bool {
        return a.config_ == b.config_ && a.params_ == b.params_;
    }

  private:
    TinyCaptioner(const CaptionerConfig &config, ParameterSet params);
    void bind_ids();

    struct BlockIds {
        ParamId ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2;
    };

    CaptionerConfig config_;
    ParameterSet params_;
    ParamId tok_emb_ = 0, pos_emb_ = 0, img_w_ = 0, img_b_ = 0, style_emb_ = 0;
    ParamId lnf_gain_ = 0, lnf_bias_ = 0, head_w_ = 0, head_b_ = 0;
    std::vector<BlockIds> blocks_;
};

// Next-token logits after each prefix token, shape [len(prefix) x V].
auto forward_logits(const TinyCaptioner &model, std::span<const double> image, Instruction instruction,
                    std::span<const TokenId> prefix) -> Tensor;

// Logits for the token following `prefix` (which may be empty), shape [V].
auto next_token_logits(const TinyCaptioner &model, std::span<const double> image, Instruction instruction,
                       std::span<const TokenId> prefix) -> Tensor;

// Teacher-forced sum of gold-token log-probabilities, <eos> included.
auto sequence_logprob(Tape &tape, const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                      Instruction instruction) -> Var;
auto sequence_logprob(const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                      Instruction instruction) -> double;

// sequence_logprob divided by the token count (<eos> included).
auto normalized_logprob(Tape &tape, const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                        Instruction instruction) -> Var;
auto normalized_logprob(const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                        Instruction instruction) -> double;

enum class DecodeMode { greedy, sample };

// Decoding defaults: temperature 0.7, at most 128 tokens, beam 1. Greedy is
// the default mode; temperature only matters when sampling.
struct DecodeConfig {
    double temperature = 0.7;
    std::size_t max_tokens = kMaxCaptionTokens;
    std::size_t beam = 1;
    DecodeMode mode = DecodeMode::greedy;
};

void validate_decode(const DecodeConfig &decode);

// Autoregressive decoding. Greedy takes the argmax with ties broken toward
// the lowest id; sampling draws from softmax(logits / temperature). The
// returned caption always ends in <eos>.
auto generate(const TinyCaptioner &model, std::span<const double> image, Instruction instruction,
              const DecodeConfig &decode, std::uint64_t seed) -> Caption;

}    // namespace stylealign
