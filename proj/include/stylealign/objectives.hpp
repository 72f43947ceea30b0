#pragma once

// Training objectives.
//
// SFT: mean negative log-likelihood of the stylized captions, pooled over
// every token of the batch.
//
// SimPO: mean over triplets of -ln sigmoid(beta * (s_w - s_l) - gamma) where
// s_w and s_l are the length-normalized log-probabilities of the stylized
// and factual captions under the same instruction. No reference model.

#include "stylealign/autodiff.hpp"
#include "stylealign/captioner.hpp"
#include "stylealign/toy_world.hpp"

#include <span>

namespace stylealign {

struct SimPOHyper {
    double beta = 2.0;
    double gamma = 0.5;
};

void validate_simpo(const SimPOHyper &hyper);

// -mean of the concatenated per-token gold log-probabilities.
auto token_nll(std::span<const Var> gold_logprobs) -> Var;

auto sft_loss(Tape &tape, const TinyCaptioner &model, std::span<const PreferenceTriplet> batch,
              Instruction instruction) -> Var;
auto sft_loss(const TinyCaptioner &model, std::span<const PreferenceTriplet> batch, Instruction instruction)
    -> double;

// Per-triplet SimPO term from already computed normalized log-probs.
auto simpo_term(Var chosen, Var rejected, const SimPOHyper &hyper) -> Var;
auto simpo_term(double chosen, double rejected, const SimPOHyper &hyper) -> double;

auto simpo_loss(Tape &tape, const TinyCaptioner &model, std::span<const PreferenceTriplet> batch,
                const SimPOHyper &hyper, Instruction instruction) -> Var;
auto simpo_loss(const TinyCaptioner &model, std::span<const PreferenceTriplet> batch, const SimPOHyper &hyper,
                Instruction instruction) -> double;

}    // namespace stylealign
