#pragma once

#include "stylealign/autodiff.hpp"
#include "stylealign/captioner.hpp"
#include "stylealign/objectives.hpp"
#include "stylealign/toy_world.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stylealign {

enum class Scheduler { linear_decay, cosine };
enum class Objective { sft, simpo };
enum class StopReason { early_stop, max_steps };

auto scheduler_name(Scheduler s) -> std::string_view;
auto parse_scheduler(std::string_view name) -> std::optional<Scheduler>;
auto objective_name(Objective o) -> std::string_view;
auto parse_objective(std::string_view name) -> std::optional<Objective>;
auto stop_reason_name(StopReason r) -> std::string_view;
auto parse_stop_reason(std::string_view name) -> std::optional<StopReason>;

// linear_decay: base * (1 - t/T); cosine: base * (1 + cos(pi t/T)) / 2.
auto lr_at(Scheduler scheduler, std::size_t step, double base_lr, std::size_t max_steps) -> double;

struct AdamConstants {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
    AdamConstants constants;

    static auto for_params(const ParameterSet &params) -> OptState;
};

// One bias-corrected Adam update of every parameter.
void adam_step(ParameterSet &params, const std::vector<Tensor> &grads, OptState &state, double lr);
void adam_step(ParameterSet &params, const GradientMap &grads, OptState &state, double lr);

// Scales grads in place so their global L2 norm is at most max_norm and
// returns the norm before clipping. max_norm <= 0 disables clipping.
auto clip_global_norm(std::vector<Tensor> &grads, double max_norm) -> double;

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 16;
    Scheduler scheduler = Scheduler::linear_decay;
    std::size_t max_steps = 200;
    std::size_t eval_interval = 10;
    std::size_t patience = 5;    // 0 disables early stopping
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t subset_seed = 0;
    // Extra salt for the shuffling stream; the sweep sets it per budget.
    std::uint64_t stream_tag = 0;
    Objective objective = Objective::sft;
    SimPOHyper simpo;
    double clip_norm = 1.0;
};

void validate_train(const TrainConfig &config);

struct HistoryRecord {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRecord> records;
    std::size_t best_step = 0;
    StopReason stop_reason = StopReason::max_steps;
    // Sorted unique ids of every training triplet drawn into a batch.
    std::vector<std::string> visited_ids;
};

struct TrainResult {
    TinyCaptioner model;
    TrainHistory history;
};

// Objective-specific loss over a whole split, as used for validation.
auto split_loss(const TinyCaptioner &model, std::span<const PreferenceTriplet> data, const TrainConfig &config,
                Instruction instruction) -> double;

// Mini-batch training from `initial`. The validation split is scored at
// step 0 and every eval_interval steps (and at the last step); the
// parameters of the best-scoring evaluation are returned.
auto train(const TinyCaptioner &initial, const DatasetSplits &splits, const TrainConfig &config) -> TrainResult;

// `step,train_loss,val_loss,lr` with 9 significant digits.
auto history_csv(const TrainHistory &history) -> std::string;
void write_history_csv(const TrainHistory &history, const std::filesystem::path &path);

}    // namespace stylealign
