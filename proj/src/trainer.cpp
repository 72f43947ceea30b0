#include "stylealign/trainer.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

namespace stylealign {

namespace {
constexpr std::uint64_t kShuffleTag = 0x5348'5546ULL;    // "SHUF"
}

auto scheduler_name(Scheduler s) -> std::string_view {
    return s == Scheduler::cosine ? "cosine" : "linear_decay";
}

auto parse_scheduler(std::string_view name) -> std::optional<Scheduler> {
    if (name == "linear_decay") {
        return Scheduler::linear_decay;
    }
    if (name == "cosine") {
        return Scheduler::cosine;
    }
    return std::nullopt;
}

auto objective_name(Objective o) -> std::string_view {
    return o == Objective::simpo ? "simpo" : "sft";
}

auto parse_objective(std::string_view name) -> std::optional<Objective> {
    if (name == "sft") {
        return Objective::sft;
    }
    if (name == "simpo") {
        return Objective::simpo;
    }
    return std::nullopt;
}

auto stop_reason_name(StopReason r) -> std::string_view {
    return r == StopReason::early_stop ? "early_stop" : "max_steps";
}

auto parse_stop_reason(std::string_view name) -> std::optional<StopReason> {
    if (name == "early_stop") {
        return StopReason::early_stop;
    }
    if (name == "max_steps") {
        return StopReason::max_steps;
    }
    return std::nullopt;
}

auto lr_at(Scheduler scheduler, std::size_t step, double base_lr, std::size_t max_steps) -> double {
    if (step > max_steps) {
        throw RangeError("lr_at: step " + std::to_string(step) + " beyond max_steps " + std::to_string(max_steps));
    }
    const double frac = static_cast<double>(step) / static_cast<double>(max_steps);
    switch (scheduler) {
    case Scheduler::linear_decay:
        return base_lr * (1.0 - frac);
    case Scheduler::cosine:
        // cos(pi/2) is not exactly zero in floating point; pin the midpoint
        // and endpoint to their closed forms.
        if (2 * step == max_steps) {
            return base_lr * 0.5;
        }
        if (step == max_steps) {
            return 0.0;
        }
        return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    }
    return 0.0;
}

// ----------------------------------------------------------------------------
// Adam

auto OptState::for_params(const ParameterSet &params) -> OptState {
    OptState s;
    for (const auto &p : params.entries()) {
        s.m.push_back(Tensor::zeros(p.value.shape()));
        s.v.push_back(Tensor::zeros(p.value.shape()));
    }
    return s;
}

void adam_step(ParameterSet &params, const std::vector<Tensor> &grads, OptState &state, double lr) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam_step: " + std::to_string(params.size()) + " parameters but "
                            + std::to_string(grads.size()) + " gradients / " + std::to_string(state.m.size())
                            + " moments");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
            throw ContractError("adam_step: gradient shape " + shape_to_string(grads[i].shape())
                                + " does not match parameter \"" + params.name(i) + "\" "
                                + shape_to_string(params[i].shape()));
        }
    }
    const auto &c = state.constants;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        auto g = grads[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

void adam_step(ParameterSet &params, const GradientMap &grads, OptState &state, double lr) {
    adam_step(params, grads.to_vector(params), state, lr);
}

auto clip_global_norm(std::vector<Tensor> &grads, double max_norm) -> double {
    double sq = 0.0;
    for (const auto &g : grads) {
        for (double x : g.data()) {
            sq += x * x;
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto &g : grads) {
            for (auto &x : g.data()) {
                x *= factor;
            }
        }
    }
    return norm;
}

// ----------------------------------------------------------------------------
// training loop

void validate_train(const TrainConfig &c) {
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
        throw ConfigError("trainer learning_rate must be > 0");
    }
    if (c.batch_size < 1) {
        throw ConfigError("trainer batch_size must be >= 1");
    }
    if (c.max_steps < 1) {
        throw ConfigError("trainer max_steps must be >= 1");
    }
    if (c.eval_interval < 1) {
        throw ConfigError("trainer eval_interval must be >= 1");
    }
    if (c.objective == Objective::simpo) {
        validate_simpo(c.simpo);
    }
}

auto split_loss(const TinyCaptioner &model, std::span<const PreferenceTriplet> data, const TrainConfig &config,
                Instruction instruction) -> double {
    if (config.objective == Objective::simpo) {
        return simpo_loss(model, data, config.simpo, instruction);
    }
    return sft_loss(model, data, instruction);
}

namespace {

// Sequential draws from per-epoch permutations of [0, n).
class EpochSampler {
  public:
    EpochSampler(std::size_t n, std::uint64_t key)
        : n_(n), key_(key) {
        reshuffle();
    }

    auto next() -> std::size_t {
        if (pos_ == perm_.size()) {
            ++epoch_;
            reshuffle();
        }
        return perm_[pos_++];
    }

  private:
    void reshuffle() {
        perm_ = seeded_permutation(n_, derive_key(key_, epoch_));
        pos_ = 0;
    }

    std::size_t n_;
    std::uint64_t key_;
    std::uint64_t epoch_ = 0;
    std::vector<std::size_t> perm_;
    std::size_t pos_ = 0;
};

auto batch_loss(Tape &tape, const TinyCaptioner &model, std::span<const PreferenceTriplet> batch,
                const TrainConfig &config, Instruction instruction) -> Var {
    if (config.objective == Objective::simpo) {
        return simpo_loss(tape, model, batch, config.simpo, instruction);
    }
    return sft_loss(tape, model, batch, instruction);
}

}    // namespace

auto train(const TinyCaptioner &initial, const DatasetSplits &splits, const TrainConfig &config) -> TrainResult {
    validate_train(config);
    if (splits.train.empty() || splits.validation.empty()) {
        throw ContractError("train: train and validation splits must be non-empty (got "
                            + std::to_string(splits.train.size()) + " / " + std::to_string(splits.validation.size())
                            + ")");
    }
    const Instruction instruction = splits.train.front().style;

    TinyCaptioner model = initial;
    TrainResult result{initial, {}};
    TrainHistory &history = result.history;
    OptState opt = OptState::for_params(model.params());
    EpochSampler sampler(splits.train.size(),
                         derive_key(derive_key(config.subset_seed, config.stream_tag), kShuffleTag));
    std::set<std::string> visited;

    double best_val = split_loss(model, splits.validation, config, instruction);
    std::size_t stale = 0;
    double loss_acc = 0.0;
    std::size_t loss_count = 0;
    history.best_step = 0;

    std::vector<PreferenceTriplet> batch;
    for (std::size_t step = 0; step < config.max_steps; ++step) {
        batch.clear();
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const auto &t = splits.train[sampler.next()];
            visited.insert(t.example_id);
            batch.push_back(t);
        }
        const double lr = lr_at(config.scheduler, step, config.learning_rate, config.max_steps);

        std::vector<Tensor> grads;
        {
            Tape tape;
            Var loss = batch_loss(tape, model, batch, config, instruction);
            const double value = loss.value().item();
            if (step == 0) {
                history.records.push_back({0, value, best_val, lr});
            }
            loss_acc += value;
            ++loss_count;
            grads = tape.backward(loss).to_vector(model.params());
        }
        clip_global_norm(grads, config.clip_norm);
        adam_step(model.params(), grads, opt, lr);

        const std::size_t done = step + 1;
        if (done % config.eval_interval != 0 && done != config.max_steps) {
            continue;
        }
        const double val = split_loss(model, splits.validation, config, instruction);
        const double next_lr = lr_at(config.scheduler, done, config.learning_rate, config.max_steps);
        history.records.push_back({done, loss_acc / static_cast<double>(loss_count), val, next_lr});
        loss_acc = 0.0;
        loss_count = 0;
        if (val < best_val) {
            best_val = val;
            history.best_step = done;
            result.model = model;
            stale = 0;
        } else {
            ++stale;
            if (config.patience > 0 && stale >= config.patience) {
                history.stop_reason = StopReason::early_stop;
                break;
            }
        }
    }
    history.visited_ids.assign(visited.begin(), visited.end());
    return result;
}

// ----------------------------------------------------------------------------

auto history_csv(const TrainHistory &history) -> std::string {
    std::string out = "step,train_loss,val_loss,lr\n";
    char buf[128];
    for (const auto &r : history.records) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.step, r.train_loss, r.val_loss, r.lr);
        out += buf;
    }
    return out;
}

void write_history_csv(const TrainHistory &history, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << history_csv(history);
}

}    // namespace stylealign
