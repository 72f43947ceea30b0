#include "stylealign/style_classifier.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/rng.hpp"
#include "stylealign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace stylealign {

namespace {

constexpr std::uint64_t kTableTag = 0x454d'4245ULL;     // "EMBE"
constexpr std::uint64_t kShuffleTag = 0x434c'5346ULL;   // "CLSF"

auto embedder_to_json(const EmbedderConfig &c) -> nlohmann::json {
    return {{"vocab_size", c.vocab_size},
            {"feature_dim", c.feature_dim},
            {"embed_dim", c.embed_dim},
            {"embedding_seed", c.embedding_seed}};
}

auto layer_prefix(std::size_t i) -> std::string {
    return "layer" + std::to_string(i) + ".";
}

auto joint_matrix(const CaptionEmbedder &embedder, std::span<const LabeledPair> data) -> Tensor {
    Tensor x = Tensor::zeros({data.size(), embedder.width()});
    auto out = x.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto row = embedder.embed(data[i].image, data[i].caption);
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(i * row.size()));
    }
    return x;
}

}    // namespace

// ----------------------------------------------------------------------------
// embedding

CaptionEmbedder::CaptionEmbedder(const EmbedderConfig &config)
    : config_(config) {
    if (config.vocab_size < 1 || config.feature_dim < 1 || config.embed_dim < 1) {
        throw ConfigError("classifier embedder needs positive vocab_size, feature_dim and embed_dim");
    }
    table_ = Tensor::zeros({config.vocab_size, config.embed_dim});
    CounterRng rng(derive_key(config.embedding_seed, kTableTag));
    for (auto &v : table_.data()) {
        v = rng.normal(0.0, 1.0);
    }
}

auto CaptionEmbedder::embed(std::span<const double> image, std::span<const TokenId> caption) const
    -> std::vector<double> {
    if (caption.empty()) {
        throw ContractError("embed_pair: caption must be non-empty");
    }
    if (image.size() != config_.feature_dim) {
        throw ContractError("embed_pair: image has " + std::to_string(image.size()) + " features, expected "
                            + std::to_string(config_.feature_dim));
    }
    const std::size_t d = config_.embed_dim;
    std::vector<double> out(image.begin(), image.end());
    out.resize(config_.feature_dim + d, 0.0);
    for (TokenId t : caption) {
        if (t >= config_.vocab_size) {
            throw ContractError("embed_pair: token " + std::to_string(t) + " outside vocabulary of "
                                + std::to_string(config_.vocab_size));
        }
    }
    // Accumulate per dimension in a fixed (sorted-token) order so the mean is
    // exactly invariant to token order.
    std::vector<TokenId> sorted(caption.begin(), caption.end());
    std::sort(sorted.begin(), sorted.end());
    const double inv = 1.0 / static_cast<double>(sorted.size());
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (TokenId t : sorted) {
            s += table_.at(t, k);
        }
        out[config_.feature_dim + k] = s * inv;
    }
    return out;
}

auto embed_pair(std::span<const double> image, std::span<const TokenId> caption, const EmbedderConfig &config)
    -> std::vector<double> {
    return CaptionEmbedder(config).embed(image, caption);
}

// ----------------------------------------------------------------------------
// head

StyleClassifier::StyleClassifier(const HeadConfig &config, std::uint64_t init_seed)
    : config_(config), embedder_(config.embedder) {
    if (config.depth != 2 && config.depth != 4) {
        throw ConfigError("classifier depth must be 2 or 4, got " + std::to_string(config.depth));
    }
    if (config.hidden < 1) {
        throw ConfigError("classifier hidden width must be >= 1");
    }
    std::size_t fan_in = embedder_.width();
    for (std::size_t i = 0; i < config.depth; ++i) {
        const std::size_t fan_out = i + 1 == config.depth ? 1 : config.hidden;
        CounterRng rng(derive_key(init_seed, i));
        Tensor w = Tensor::zeros({fan_in, fan_out});
        const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto &v : w.data()) {
            v = rng.normal(0.0, stddev);
        }
        params_.add(layer_prefix(i) + "w", std::move(w));
        params_.add(layer_prefix(i) + "b", Tensor::zeros({fan_out}));
        fan_in = fan_out;
    }
}

StyleClassifier::StyleClassifier(const HeadConfig &config, ParameterSet params)
    : config_(config), embedder_(config.embedder), params_(std::move(params)) {
    if (config.depth != 2 && config.depth != 4) {
        throw SchemaError("classifier depth must be 2 or 4, got " + std::to_string(config.depth));
    }
    std::size_t fan_in = embedder_.width();
    if (params_.size() != 2 * config.depth) {
        throw SchemaError("classifier checkpoint has " + std::to_string(params_.size()) + " tensors, expected "
                          + std::to_string(2 * config.depth));
    }
    for (std::size_t i = 0; i < config.depth; ++i) {
        const std::size_t fan_out = i + 1 == config.depth ? 1 : config.hidden;
        const auto w = params_.find(layer_prefix(i) + "w");
        const auto b = params_.find(layer_prefix(i) + "b");
        if (!w || !b || params_[*w].shape() != Shape{fan_in, fan_out} || params_[*b].shape() != Shape{fan_out}) {
            throw SchemaError("classifier checkpoint: layer " + std::to_string(i) + " missing or misshapen");
        }
        fan_in = fan_out;
    }
}

auto StyleClassifier::forward(Tape &tape, Var x) const -> Var {
    if (x.value().rank() != 2 || x.value().cols() != embedder_.width()) {
        throw ContractError("classifier input " + shape_to_string(x.shape()) + " does not match width "
                            + std::to_string(embedder_.width()));
    }
    Var h = x;
    for (std::size_t i = 0; i < config_.depth; ++i) {
        h = add_bias(matmul(h, tape.parameter(params_, 2 * i)), tape.parameter(params_, 2 * i + 1));
        if (i + 1 < config_.depth) {
            h = gelu(h);
        }
    }
    return h;
}

auto StyleClassifier::logit(std::span<const double> joint) const -> double {
    if (joint.size() != embedder_.width()) {
        throw ContractError("classify: joint embedding width " + std::to_string(joint.size())
                            + " does not match head input " + std::to_string(embedder_.width()));
    }
    Tape tape;
    Var x = tape.constant(Tensor({1, joint.size()}, std::vector<double>(joint.begin(), joint.end())));
    return forward(tape, x).value().values()[0];
}

auto StyleClassifier::to_checkpoint() const -> Checkpoint {
    return {"classifier",
            {{"depth", config_.depth}, {"hidden", config_.hidden}, {"embedder", embedder_to_json(config_.embedder)}},
            params_};
}

auto StyleClassifier::from_checkpoint(const Checkpoint &ckpt) -> StyleClassifier {
    if (ckpt.kind != "classifier") {
        throw SchemaError("checkpoint kind \"" + ckpt.kind + "\" is not a classifier");
    }
    HeadConfig c;
    try {
        c.depth = ckpt.config.at("depth").get<std::size_t>();
        c.hidden = ckpt.config.at("hidden").get<std::size_t>();
        const auto &e = ckpt.config.at("embedder");
        c.embedder.vocab_size = e.at("vocab_size").get<std::size_t>();
        c.embedder.feature_dim = e.at("feature_dim").get<std::size_t>();
        c.embedder.embed_dim = e.at("embed_dim").get<std::size_t>();
        c.embedder.embedding_seed = e.at("embedding_seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception &e) {
        throw SchemaError(std::string("classifier config: ") + e.what());
    }
    return {c, ckpt.params};
}

void StyleClassifier::save(const std::filesystem::path &path) const {
    write_checkpoint(path, to_checkpoint());
}

auto StyleClassifier::load(const std::filesystem::path &path) -> StyleClassifier {
    return from_checkpoint(read_checkpoint(path));
}

// ----------------------------------------------------------------------------

auto classify_logit(double logit) -> Classification {
    const double p = sigmoid_scalar(logit);
    return {p, p >= kDecisionThreshold ? 1 : 0};
}

auto classify(const StyleClassifier &head, std::span<const double> joint) -> Classification {
    return classify_logit(head.logit(joint));
}

auto classify_caption(const StyleClassifier &head, std::span<const double> image, std::span<const TokenId> caption)
    -> Classification {
    return classify(head, head.embedder().embed(image, caption));
}

auto labeled_pairs(std::span<const PreferenceTriplet> triplets) -> std::vector<LabeledPair> {
    std::vector<LabeledPair> out;
    out.reserve(2 * triplets.size());
    for (const auto &t : triplets) {
        out.push_back({t.image, t.stylized, 1});
        out.push_back({t.image, t.factual, 0});
    }
    return out;
}

auto bce(double probability, int label) -> double {
    return label == 1 ? -std::log(probability) : -std::log1p(-probability);
}

auto bce_with_logits(Var logits, std::span<const int> labels) -> Var {
    const auto &shape = logits.value().shape();
    if (logits.value().size() != labels.size()) {
        throw ContractError("bce: " + std::to_string(labels.size()) + " labels for logits "
                            + shape_to_string(shape));
    }
    Tensor signs = Tensor::zeros(shape);
    auto s = signs.data();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        s[i] = labels[i] == 1 ? 1.0 : -1.0;
    }
    Var signed_logits = mul(logits, logits.tape()->constant(std::move(signs)));
    return scale(mean(log_sigmoid(signed_logits)), -1.0);
}

// ----------------------------------------------------------------------------
// training

void validate_classifier_train(const ClassifierTrainConfig &c) {
    if (c.max_epochs < 1) {
        throw ConfigError("classifier max_epochs must be >= 1");
    }
    if (!(c.learning_rate > 0.0)) {
        throw ConfigError("classifier learning_rate must be > 0");
    }
    if (c.batch_size < 1) {
        throw ConfigError("classifier batch_size must be >= 1");
    }
    if (c.depth != 2 && c.depth != 4) {
        throw ConfigError("classifier depth must be 2 or 4, got " + std::to_string(c.depth));
    }
    if (c.hidden < 1 || c.embed_dim < 1) {
        throw ConfigError("classifier hidden and embed_dim must be >= 1");
    }
}

namespace {

auto labels_of(std::span<const LabeledPair> data) -> std::vector<int> {
    std::vector<int> y;
    y.reserve(data.size());
    for (const auto &p : data) {
        y.push_back(p.label);
    }
    return y;
}

auto matrix_loss(const StyleClassifier &head, const Tensor &x, std::span<const int> labels) -> double {
    Tape tape;
    return bce_with_logits(head.forward(tape, tape.constant(x)), labels).value().item();
}

}    // namespace

auto classifier_loss(const StyleClassifier &head, std::span<const LabeledPair> data) -> double {
    if (data.empty()) {
        throw ContractError("classifier_loss: empty data");
    }
    const auto y = labels_of(data);
    return matrix_loss(head, joint_matrix(head.embedder(), data), y);
}

auto train_classifier(std::span<const LabeledPair> train, std::span<const LabeledPair> validation,
                      const ClassifierTrainConfig &config) -> ClassifierTrainResult {
    validate_classifier_train(config);
    if (train.empty() || validation.empty()) {
        throw ContractError("train_classifier: train and validation data must be non-empty");
    }
    std::size_t positives = 0;
    for (const auto &p : train) {
        if (p.label != 0 && p.label != 1) {
            throw ContractError("train_classifier: labels must be 0 or 1");
        }
        positives += static_cast<std::size_t>(p.label);
    }
    if (positives == 0 || positives == train.size()) {
        throw ContractError("train_classifier: training data contains a single class");
    }

    HeadConfig hc;
    hc.depth = config.depth;
    hc.hidden = config.hidden;
    hc.embedder = {config.vocab_size, train.front().image.size(), config.embed_dim, config.embedding_seed};
    StyleClassifier head(hc, config.init_seed);
    const Tensor x_train = joint_matrix(head.embedder(), train);
    const Tensor x_val = joint_matrix(head.embedder(), validation);
    const auto y_train = labels_of(train);
    const auto y_val = labels_of(validation);
    const std::size_t width = head.embedder().width();

    ClassifierTrainResult result{head, 0, {}};
    result.val_losses.push_back(matrix_loss(head, x_val, y_val));
    double best = result.val_losses.front();
    OptState opt = OptState::for_params(head.params());
    const std::uint64_t shuffle_key = derive_key(config.shuffle_seed, kShuffleTag);

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto order = seeded_permutation(train.size(), derive_key(shuffle_key, epoch));
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            Tensor xb = Tensor::zeros({n, width});
            std::vector<int> yb(n);
            auto dst = xb.data();
            const auto src = x_train.data();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t row = order[start + i];
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(row * width), width,
                            dst.begin() + static_cast<std::ptrdiff_t>(i * width));
                yb[i] = y_train[row];
            }
            Tape tape;
            Var loss = bce_with_logits(head.forward(tape, tape.constant(std::move(xb))), yb);
            adam_step(head.params(), tape.backward(loss), opt, config.learning_rate);
        }
        const double val = matrix_loss(head, x_val, y_val);
        result.val_losses.push_back(val);
        if (val < best) {
            best = val;
            result.best_epoch = epoch;
            result.head = head;
        }
    }
    return result;
}

// ----------------------------------------------------------------------------
// metrics

auto classifier_metrics(std::span<const int> predictions, std::span<const int> labels) -> ClassifierMetrics {
    if (predictions.size() != labels.size()) {
        throw ContractError("classifier_metrics: " + std::to_string(predictions.size()) + " predictions but "
                            + std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) {
        throw ContractError("classifier_metrics: no predictions");
    }
    ClassifierMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        m.tp += p && y;
        m.fp += p && !y;
        m.fn += !p && y;
        m.tn += !p && !y;
    }
    const auto pct = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = pct(m.tp, m.tp + m.fp);
    m.recall = pct(m.tp, m.tp + m.fn);
    m.f1 = pct(2 * m.tp, 2 * m.tp + m.fp + m.fn);
    m.accuracy = pct(m.tp + m.tn, labels.size());
    return m;
}

auto evaluate_classifier(const StyleClassifier &head, std::span<const LabeledPair> data) -> ClassifierMetrics {
    if (data.empty()) {
        throw ContractError("evaluate_classifier: empty data");
    }
    Tape tape;
    Var logits = head.forward(tape, tape.constant(joint_matrix(head.embedder(), data)));
    std::vector<int> predictions;
    for (double z : logits.value().values()) {
        predictions.push_back(classify_logit(z).label);
    }
    return classifier_metrics(predictions, labels_of(data));
}

auto metrics_csv(const std::string &dataset, const ClassifierMetrics &m) -> std::string {
    char buf[256];
    std::snprintf(buf, sizeof buf, "dataset,precision,recall,f1,accuracy\n%s,%.1f,%.1f,%.1f,%.1f\n", dataset.c_str(),
                  m.precision, m.recall, m.f1, m.accuracy);
    return buf;
}

}    // namespace stylealign
