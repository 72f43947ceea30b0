#pragma once

// Data-efficiency sweep: train once per (budget, subset seed) cell on a
// truncated train split, score every cell on the fixed test split and find
// the budget where the curve saturates.

#include "stylealign/captioner.hpp"
#include "stylealign/errors.hpp"
#include "stylealign/style_classifier.hpp"
#include "stylealign/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace stylealign {

inline const std::vector<double> kDefaultGrid{1, 2, 5, 10, 25, 50, 100};
inline constexpr std::size_t kMaxSubsetSeeds = 3;

// Strictly increasing, each in (0, 100], containing 100.
void validate_grid(const std::vector<double> &grid);

struct SweepConfig {
    std::vector<double> grid = kDefaultGrid;
    std::vector<std::uint64_t> subset_seeds{0, 1, 2};
    double epsilon = 0.05;
};

void validate_sweep(const SweepConfig &config);

// Everything that stays fixed across cells.
struct SweepInputs {
    DatasetSplits splits;
    TinyCaptioner initial;
    StyleClassifier head;
    TrainConfig trainer;    // objective selects the method
    DecodeConfig decode;
};

struct CurvePoint {
    double budget_percent = 0.0;
    std::uint64_t subset_seed = 0;
    double wr_logp = 0.0;
    double style_acc = 0.0;
    std::size_t train_size = 0;
    StopReason stop_reason = StopReason::max_steps;

    friend auto operator==(const CurvePoint &, const CurvePoint &) -> bool = default;
};

struct BudgetMean {
    double budget_percent = 0.0;
    double wr_logp = 0.0;
    double style_acc = 0.0;
    std::size_t n_seeds = 0;
};

struct SweepReport {
    std::vector<CurvePoint> points;    // ordered by (budget, seed)
    std::vector<BudgetMean> means;
    double saturation_budget = 0.0;
    nlohmann::json fingerprint;
};

class SweepCellError : public Error {
  public:
    SweepCellError(double budget, std::uint64_t seed, const std::string &what);

    [[nodiscard]] auto budget() const -> double {
        return budget_;
    }
    [[nodiscard]] auto seed() const -> std::uint64_t {
        return seed_;
    }

  private:
    double budget_;
    std::uint64_t seed_;
};

// Trainer settings for one cell: the subset seed plus a shuffling stream
// derived from the budget, so adding grid points leaves other cells alone.
auto cell_train_config(const TrainConfig &base, double budget, std::uint64_t subset_seed) -> TrainConfig;
auto run_cell(const SweepInputs &inputs, double budget, std::uint64_t subset_seed) -> CurvePoint;

auto budget_means(const std::vector<CurvePoint> &points) -> std::vector<BudgetMean>;

// Smallest budget whose metric reaches (1 - epsilon) of the maximum.
auto detect_saturation(const std::vector<std::pair<double, double>> &curve, double epsilon = 0.05) -> double;
auto detect_saturation(const std::vector<BudgetMean> &means, double epsilon = 0.05) -> double;

// Cells run on `jobs` OpenMP threads; the result does not depend on it.
// `provenance` is copied into the report fingerprint.
auto run_sweep(const SweepInputs &inputs, const SweepConfig &config, std::size_t jobs,
               const nlohmann::json &provenance = nlohmann::json::object()) -> SweepReport;

inline constexpr std::string_view kCurveHeader = "budget_percent,subset_seed,wr_logp,style_acc,train_size,stop_reason";
auto curve_csv(const std::vector<CurvePoint> &points) -> std::string;
auto parse_curve_csv(std::string_view text) -> std::vector<CurvePoint>;
auto curve_svg(const SweepReport &report) -> std::string;

// Writes curve.csv, curve.svg and sweep_config.json into out_dir.
void emit_report(const SweepReport &report, const std::filesystem::path &out_dir);

}    // namespace stylealign
