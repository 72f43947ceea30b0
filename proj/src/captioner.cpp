#include "stylealign/captioner.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/rng.hpp"

#include <cmath>
#include <string>

namespace stylealign {

namespace {

constexpr double kLayerNormEps = 1e-5;

auto gaussian(Shape shape, std::uint64_t key, double stddev) -> Tensor {
    CounterRng rng(key);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto &v : t.data()) {
        v = rng.normal(0.0, stddev);
    }
    return t;
}

auto style_row(Style s) -> std::size_t {
    switch (s) {
    case Style::factual: return 0;
    case Style::humor: return 1;
    case Style::romantic: return 2;
    }
    return 0;
}

auto config_to_json(const CaptionerConfig &c) -> nlohmann::json {
    return {{"vocab_size", c.vocab_size},
            {"d_model", c.d_model},
            {"n_layers", c.n_layers},
            {"feature_dim", c.feature_dim},
            {"ffn_mult", c.ffn_mult}};
}

}    // namespace

TinyCaptioner::TinyCaptioner(const CaptionerConfig &config, const InitOptions &init)
    : config_(config) {
    if (config.vocab_size < 2 || config.d_model < 1 || config.n_layers < 1 || config.feature_dim < 1
        || config.ffn_mult < 1) {
        throw ConfigError("captioner config needs positive sizes and a vocabulary of at least 2");
    }
    const std::size_t v = config.vocab_size;
    const std::size_t d = config.d_model;
    const std::size_t f = config.ffn_mult * d;
    std::uint64_t counter = 0;
    auto normal = [&](Shape shape) { return gaussian(std::move(shape), derive_key(init.seed, counter++), init.stddev); };
    auto zeros = [&](Shape shape) {
        ++counter;
        return Tensor::zeros(std::move(shape));
    };
    auto ones = [&](Shape shape) {
        ++counter;
        return Tensor::filled(std::move(shape), 1.0);
    };

    params_.add("tok_emb", normal({v, d}));
    params_.add("pos_emb", normal({kMaxPositions, d}));
    params_.add("img_proj.w", normal({config.feature_dim, d}));
    params_.add("img_proj.b", zeros({d}));
    params_.add("style_emb", normal({3, d}));
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        params_.add(p + "ln1.gain", ones({d}));
        params_.add(p + "ln1.bias", zeros({d}));
        params_.add(p + "attn.wq", normal({d, d}));
        params_.add(p + "attn.wk", normal({d, d}));
        params_.add(p + "attn.wv", normal({d, d}));
        params_.add(p + "attn.wo", normal({d, d}));
        params_.add(p + "ln2.gain", ones({d}));
        params_.add(p + "ln2.bias", zeros({d}));
        params_.add(p + "ffn.w1", normal({d, f}));
        params_.add(p + "ffn.b1", zeros({f}));
        params_.add(p + "ffn.w2", normal({f, d}));
        params_.add(p + "ffn.b2", zeros({d}));
    }
    params_.add("ln_f.gain", ones({d}));
    params_.add("ln_f.bias", zeros({d}));
    params_.add("head.w", init.zero_output_head ? zeros({d, v}) : normal({d, v}));
    params_.add("head.b", zeros({v}));
    bind_ids();
}

TinyCaptioner::TinyCaptioner(const CaptionerConfig &config, ParameterSet params)
    : config_(config), params_(std::move(params)) {
    bind_ids();
}

void TinyCaptioner::bind_ids() {
    auto id = [&](const std::string &name, const Shape &shape) {
        const auto found = params_.find(name);
        if (!found) {
            throw SchemaError("captioner parameter \"" + name + "\" missing");
        }
        if (params_[*found].shape() != shape) {
            throw SchemaError("captioner parameter \"" + name + "\" has shape "
                              + shape_to_string(params_[*found].shape()) + ", expected " + shape_to_string(shape));
        }
        return *found;
    };
    const std::size_t v = config_.vocab_size;
    const std::size_t d = config_.d_model;
    const std::size_t f = config_.ffn_mult * d;
    tok_emb_ = id("tok_emb", {v, d});
    pos_emb_ = id("pos_emb", {kMaxPositions, d});
    img_w_ = id("img_proj.w", {config_.feature_dim, d});
    img_b_ = id("img_proj.b", {d});
    style_emb_ = id("style_emb", {3, d});
    blocks_.clear();
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        blocks_.push_back({id(p + "ln1.gain", {d}), id(p + "ln1.bias", {d}), id(p + "attn.wq", {d, d}),
                           id(p + "attn.wk", {d, d}), id(p + "attn.wv", {d, d}), id(p + "attn.wo", {d, d}),
                           id(p + "ln2.gain", {d}), id(p + "ln2.bias", {d}), id(p + "ffn.w1", {d, f}),
                           id(p + "ffn.b1", {f}), id(p + "ffn.w2", {f, d}), id(p + "ffn.b2", {d})});
    }
    lnf_gain_ = id("ln_f.gain", {d});
    lnf_bias_ = id("ln_f.bias", {d});
    head_w_ = id("head.w", {d, v});
    head_b_ = id("head.b", {v});
}

auto TinyCaptioner::forward(Tape &tape, std::span<const double> image, Instruction instruction,
                            std::span<const TokenId> tokens) const -> Var {
    if (image.size() != config_.feature_dim) {
        throw InputError("image has " + std::to_string(image.size()) + " features, model expects "
                         + std::to_string(config_.feature_dim));
    }
    if (tokens.size() > kMaxCaptionTokens) {
        throw InputError("prefix of " + std::to_string(tokens.size()) + " tokens exceeds the limit of "
                         + std::to_string(kMaxCaptionTokens));
    }
    for (TokenId t : tokens) {
        if (t >= config_.vocab_size) {
            throw InputError("token id " + std::to_string(t) + " outside vocabulary of "
                             + std::to_string(config_.vocab_size));
        }
    }
    auto p = [&](ParamId id) { return tape.parameter(params_, id); };

    std::vector<Var> slots;
    auto img = tape.constant(Tensor({1, image.size()}, std::vector<double>(image.begin(), image.end())));
    slots.push_back(add_bias(matmul(img, p(img_w_)), p(img_b_)));
    if (instruction) {
        const std::size_t row = style_row(*instruction);
        slots.push_back(gather_rows(p(style_emb_), std::span<const std::size_t>(&row, 1)));
    }
    const std::size_t cond = slots.size();
    if (!tokens.empty()) {
        slots.push_back(gather_rows(p(tok_emb_), tokens));
    }
    const std::size_t len = cond + tokens.size();
    Var h = add(concat_rows(slots), slice_rows(p(pos_emb_), 0, len));

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
    for (const auto &b : blocks_) {
        Var a = layer_norm(h, p(b.ln1_gain), p(b.ln1_bias), kLayerNormEps);
        Var q = matmul(a, p(b.wq));
        Var k = matmul(a, p(b.wk));
        Var v = matmul(a, p(b.wv));
        Var weights = exp(log_softmax(causal_mask(scale(matmul(q, transpose(k)), attn_scale)), 1));
        h = add(h, matmul(matmul(weights, v), p(b.wo)));
        Var f = layer_norm(h, p(b.ln2_gain), p(b.ln2_bias), kLayerNormEps);
        f = add_bias(matmul(gelu(add_bias(matmul(f, p(b.w1)), p(b.b1))), p(b.w2)), p(b.b2));
        h = add(h, f);
    }
    Var out = layer_norm(h, p(lnf_gain_), p(lnf_bias_), kLayerNormEps);
    Var logits = add_bias(matmul(out, p(head_w_)), p(head_b_));
    return slice_rows(logits, cond - 1, tokens.size() + 1);
}

auto TinyCaptioner::to_checkpoint() const -> Checkpoint {
    return {"captioner", config_to_json(config_), params_};
}

auto TinyCaptioner::from_checkpoint(const Checkpoint &ckpt) -> TinyCaptioner {
    if (ckpt.kind != "captioner") {
        throw SchemaError("checkpoint kind \"" + ckpt.kind + "\" is not a captioner");
    }
    CaptionerConfig c;
    try {
        c.vocab_size = ckpt.config.at("vocab_size").get<std::size_t>();
        c.d_model = ckpt.config.at("d_model").get<std::size_t>();
        c.n_layers = ckpt.config.at("n_layers").get<std::size_t>();
        c.feature_dim = ckpt.config.at("feature_dim").get<std::size_t>();
        c.ffn_mult = ckpt.config.at("ffn_mult").get<std::size_t>();
    } catch (const nlohmann::json::exception &e) {
        throw SchemaError(std::string("captioner config: ") + e.what());
    }
    return {c, ckpt.params};
}

void TinyCaptioner::save(const std::filesystem::path &path) const {
    write_checkpoint(path, to_checkpoint());
}

auto TinyCaptioner::load(const std::filesystem::path &path) -> TinyCaptioner {
    return from_checkpoint(read_checkpoint(path));
}

// ----------------------------------------------------------------------------

auto forward_logits(const TinyCaptioner &model, std::span<const double> image, Instruction instruction,
                    std::span<const TokenId> prefix) -> Tensor {
    if (prefix.empty()) {
        throw ContractError("forward_logits needs a non-empty prefix; use next_token_logits for the first token");
    }
    Tape tape;
    Var rows = model.forward(tape, image, instruction, prefix);
    return slice_rows(rows, 1, prefix.size()).value();
}

auto next_token_logits(const TinyCaptioner &model, std::span<const double> image, Instruction instruction,
                       std::span<const TokenId> prefix) -> Tensor {
    Tape tape;
    Var rows = model.forward(tape, image, instruction, prefix);
    const Tensor &all = rows.value();
    const std::size_t v = all.cols();
    const auto first = all.values().begin() + static_cast<std::ptrdiff_t>(prefix.size() * v);
    return Tensor::vector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(v)));
}

auto sequence_logprob(Tape &tape, const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                      Instruction instruction) -> Var {
    if (caption.empty()) {
        throw ContractError("sequence_logprob: empty caption");
    }
    const std::span<const TokenId> inputs(caption.data(), caption.size() - 1);
    Var logits = model.forward(tape, image, instruction, inputs);
    return sum(pick(log_softmax(logits, 1), caption));
}

auto sequence_logprob(const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                      Instruction instruction) -> double {
    Tape tape;
    return sequence_logprob(tape, model, image, caption, instruction).value().item();
}

auto normalized_logprob(Tape &tape, const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                        Instruction instruction) -> Var {
    if (caption.empty()) {
        throw ContractError("normalized_logprob: empty caption");
    }
    const std::span<const TokenId> inputs(caption.data(), caption.size() - 1);
    Var logits = model.forward(tape, image, instruction, inputs);
    return mean(pick(log_softmax(logits, 1), caption));
}

auto normalized_logprob(const TinyCaptioner &model, std::span<const double> image, const Caption &caption,
                        Instruction instruction) -> double {
    Tape tape;
    return normalized_logprob(tape, model, image, caption, instruction).value().item();
}

// ----------------------------------------------------------------------------

void validate_decode(const DecodeConfig &decode) {
    if (decode.beam != 1) {
        throw ConfigError("decode.beam must be 1, got " + std::to_string(decode.beam));
    }
    if (decode.max_tokens < 1 || decode.max_tokens > kMaxCaptionTokens) {
        throw ConfigError("decode.max_tokens must lie in [1, 128]");
    }
    if (decode.mode == DecodeMode::sample && !(decode.temperature > 0.0)) {
        throw ConfigError("decode.temperature must be > 0 when sampling");
    }
}

auto generate(const TinyCaptioner &model, std::span<const double> image, Instruction instruction,
              const DecodeConfig &decode, std::uint64_t seed) -> Caption {
    validate_decode(decode);
    CounterRng rng(seed);
    Caption out;
    while (out.size() < decode.max_tokens) {
        const Tensor logits = next_token_logits(model, image, instruction, out);
        TokenId next = 0;
        if (decode.mode == DecodeMode::greedy) {
            for (TokenId t = 1; t < logits.size(); ++t) {
                if (logits[t] > logits[next]) {
                    next = t;
                }
            }
        } else {
            double mx = logits[0] / decode.temperature;
            for (std::size_t t = 1; t < logits.size(); ++t) {
                mx = std::max(mx, logits[t] / decode.temperature);
            }
            std::vector<double> weights(logits.size());
            double total = 0.0;
            for (std::size_t t = 0; t < logits.size(); ++t) {
                weights[t] = std::exp(logits[t] / decode.temperature - mx);
                total += weights[t];
            }
            const double u = rng.uniform() * total;
            double acc = 0.0;
            next = logits.size() - 1;
            for (std::size_t t = 0; t < logits.size(); ++t) {
                acc += weights[t];
                if (u < acc) {
                    next = t;
                    break;
                }
            }
        }
        if (next == kEos) {
            break;
        }
        out.push_back(next);
    }
    out.push_back(kEos);
    return out;
}

}    // namespace stylealign
