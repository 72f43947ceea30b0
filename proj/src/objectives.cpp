#include "stylealign/objectives.hpp"

#include "stylealign/errors.hpp"

#include <cmath>

namespace stylealign {

void validate_simpo(const SimPOHyper &hyper) {
    if (!(hyper.beta > 0.0) || !std::isfinite(hyper.beta)) {
        throw ConfigError("simpo beta must be > 0");
    }
    if (!(hyper.gamma >= 0.0) || !std::isfinite(hyper.gamma)) {
        throw ConfigError("simpo gamma must be >= 0");
    }
}

auto token_nll(std::span<const Var> gold_logprobs) -> Var {
    if (gold_logprobs.empty()) {
        throw ContractError("token_nll: empty batch");
    }
    return scale(mean(concat(gold_logprobs)), -1.0);
}

auto sft_loss(Tape &tape, const TinyCaptioner &model, std::span<const PreferenceTriplet> batch,
              Instruction instruction) -> Var {
    if (batch.empty()) {
        throw ContractError("sft_loss: empty batch");
    }
    std::vector<Var> gold;
    gold.reserve(batch.size());
    for (const auto &t : batch) {
        const Caption &c = t.stylized;
        if (c.empty()) {
            throw ContractError("sft_loss: empty caption in " + t.example_id);
        }
        const std::span<const TokenId> inputs(c.data(), c.size() - 1);
        gold.push_back(pick(log_softmax(model.forward(tape, t.image, instruction, inputs), 1), c));
    }
    return token_nll(gold);
}

auto sft_loss(const TinyCaptioner &model, std::span<const PreferenceTriplet> batch, Instruction instruction)
    -> double {
    Tape tape;
    return sft_loss(tape, model, batch, instruction).value().item();
}

auto simpo_term(Var chosen, Var rejected, const SimPOHyper &hyper) -> Var {
    return scale(log_sigmoid(add_scalar(scale(sub(chosen, rejected), hyper.beta), -hyper.gamma)), -1.0);
}

auto simpo_term(double chosen, double rejected, const SimPOHyper &hyper) -> double {
    return -log_sigmoid_scalar(hyper.beta * (chosen - rejected) - hyper.gamma);
}

auto simpo_loss(Tape &tape, const TinyCaptioner &model, std::span<const PreferenceTriplet> batch,
                const SimPOHyper &hyper, Instruction instruction) -> Var {
    if (batch.empty()) {
        throw ContractError("simpo_loss: empty batch");
    }
    validate_simpo(hyper);
    std::vector<Var> terms;
    terms.reserve(batch.size());
    for (const auto &t : batch) {
        Var chosen = normalized_logprob(tape, model, t.image, t.stylized, instruction);
        Var rejected = normalized_logprob(tape, model, t.image, t.factual, instruction);
        terms.push_back(simpo_term(chosen, rejected, hyper));
    }
    return mean(concat(terms));
}

auto simpo_loss(const TinyCaptioner &model, std::span<const PreferenceTriplet> batch, const SimPOHyper &hyper,
                Instruction instruction) -> double {
    Tape tape;
    return simpo_loss(tape, model, batch, hyper, instruction).value().item();
}

}    // namespace stylealign
