#pragma once

#include "stylealign/captioner.hpp"
#include "stylealign/style_classifier.hpp"
#include "stylealign/toy_world.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stylealign {

enum class Execution { serial, parallel };

struct PairScore {
    double stylized = 0.0;
    double factual = 0.0;

    [[nodiscard]] auto win() const -> bool {
        return stylized > factual;    // ties are losses
    }
};

// Length-normalized log-probabilities of both captions of every triplet.
auto score_pairs(const TinyCaptioner &model, std::span<const PreferenceTriplet> test, Instruction instruction,
                 Execution exec = Execution::parallel) -> std::vector<PairScore>;

// Percentage of triplets whose stylized caption out-scores the factual one.
auto wr_logp(const TinyCaptioner &model, std::span<const PreferenceTriplet> test, Instruction instruction,
             Execution exec = Execution::parallel) -> double;

// Greedy (or seeded sampled) captions under each triplet's style
// instruction, classified by `head`; percentage labelled as the style.
auto generate_captions(const TinyCaptioner &model, std::span<const PreferenceTriplet> test,
                       const DecodeConfig &decode, std::uint64_t seed = 0, Execution exec = Execution::parallel)
    -> std::vector<Caption>;
auto style_acc(const TinyCaptioner &model, const StyleClassifier &head, std::span<const PreferenceTriplet> test,
               const DecodeConfig &decode, std::uint64_t seed = 0, Execution exec = Execution::parallel) -> double;

enum class Method { zero_shot, sft, simpo };

auto method_name(Method m) -> std::string_view;
auto parse_method(std::string_view name) -> std::optional<Method>;

struct EvalReport {
    Method method = Method::zero_shot;
    std::string dataset;
    double wr_logp = 0.0;
    double style_acc = 0.0;
    std::size_t n_test = 0;

    friend auto operator==(const EvalReport &, const EvalReport &) -> bool = default;
};

auto make_report(Method method, std::string dataset, double wr, double acc, std::size_t n) -> EvalReport;

// `method,dataset,wr_logp,style_acc,n_test` with one-decimal percentages.
inline constexpr std::string_view kReportHeader = "method,dataset,wr_logp,style_acc,n_test";
auto report_row(const EvalReport &r) -> std::string;
auto report_csv(std::span<const EvalReport> reports) -> std::string;
auto parse_report_csv(std::string_view text) -> std::vector<EvalReport>;

}    // namespace stylealign
