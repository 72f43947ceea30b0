// End-to-end acceptance suite: prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "fd_check.hpp"
#include "oracles.hpp"

#include "stylealign/evalsuite.hpp"
#include "stylealign/objectives.hpp"
#include "stylealign/run_config.hpp"
#include "stylealign/sweep.hpp"
#include "stylealign/trainer.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

using namespace stylealign;
using fdcheck::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

auto fmt(const char *f, auto... args) -> std::string {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

using Clock = std::chrono::steady_clock;

auto seconds_since(Clock::time_point t0) -> double {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. gradient suite

auto gradient_suite() -> Outcome {
    const auto t0 = Clock::now();
    using fdcheck::Builder;
    const auto a = random_tensor({3, 4}, 100);
    const auto b = random_tensor({4, 5}, 101);
    const auto c = random_tensor({3, 4}, 102);
    const auto v4 = random_tensor({4}, 103);
    const auto sq = random_tensor({4, 4}, 104);
    auto weighted = [](Tape &t, Var y) { return sum(mul(y, t.constant(random_tensor(y.shape(), 999)))); };
    using X = const std::vector<Var> &;
    const std::vector<std::pair<const char *, std::pair<std::vector<Tensor>, Builder>>> cases = {
        {"matmul", {{a, b}, [&](Tape &t, X x) { return weighted(t, matmul(x[0], x[1])); }}},
        {"add", {{a, c}, [&](Tape &t, X x) { return weighted(t, add(x[0], x[1])); }}},
        {"sub", {{a, c}, [&](Tape &t, X x) { return weighted(t, sub(x[0], x[1])); }}},
        {"mul", {{a, c}, [&](Tape &t, X x) { return weighted(t, mul(x[0], x[1])); }}},
        {"add_bias", {{a, v4}, [&](Tape &t, X x) { return weighted(t, add_bias(x[0], x[1])); }}},
        {"scale", {{a}, [&](Tape &t, X x) { return weighted(t, scale(x[0], -1.7)); }}},
        {"add_scalar", {{a}, [&](Tape &t, X x) { return weighted(t, add_scalar(x[0], 0.3)); }}},
        {"transpose", {{a}, [&](Tape &t, X x) { return weighted(t, transpose(x[0])); }}},
        {"gelu", {{a}, [&](Tape &t, X x) { return weighted(t, gelu(x[0])); }}},
        {"sigmoid", {{a}, [&](Tape &t, X x) { return weighted(t, sigmoid(x[0])); }}},
        {"log_sigmoid", {{a}, [&](Tape &t, X x) { return weighted(t, log_sigmoid(x[0])); }}},
        {"exp", {{a}, [&](Tape &t, X x) { return weighted(t, exp(x[0])); }}},
        {"log_softmax/1", {{a}, [&](Tape &t, X x) { return weighted(t, log_softmax(x[0], 1)); }}},
        {"log_softmax/0", {{a}, [&](Tape &t, X x) { return weighted(t, log_softmax(x[0], 0)); }}},
        {"layer_norm",
         {{a, v4, random_tensor({4}, 106)},
          [&](Tape &t, X x) { return weighted(t, layer_norm(x[0], x[1], x[2], 1e-5)); }}},
        {"concat_rows",
         {{a, random_tensor({2, 4}, 107)},
          [&](Tape &t, X x) {
              const std::vector<Var> parts = {x[0], x[1]};
              return weighted(t, concat_rows(parts));
          }}},
        {"concat",
         {{v4, a},
          [&](Tape &t, X x) {
              const std::vector<Var> parts = {x[0], x[1]};
              return weighted(t, concat(parts));
          }}},
        {"slice_rows", {{a}, [&](Tape &t, X x) { return weighted(t, slice_rows(x[0], 1, 2)); }}},
        {"gather_rows",
         {{a},
          [&](Tape &t, X x) {
              const std::vector<std::size_t> ids = {2, 0, 2, 1};
              return weighted(t, gather_rows(x[0], ids));
          }}},
        {"pick",
         {{a},
          [&](Tape &t, X x) {
              const std::vector<std::size_t> ids = {3, 0, 1};
              return weighted(t, pick(x[0], ids));
          }}},
        {"sum", {{a}, [&](Tape &, X x) { return sum(mul(x[0], x[0])); }}},
        {"mean", {{a}, [&](Tape &, X x) { return mean(mul(x[0], x[0])); }}},
        {"causal_mask",
         {{sq}, [&](Tape &t, X x) { return weighted(t, exp(log_softmax(causal_mask(x[0]), 1))); }}},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto &[name, io] : cases) {
        const double e = fdcheck::max_gradient_error(io.second, io.first);
        if (e > worst) {
            worst = e;
            worst_name = name;
        }
    }

    // Full two-block captioner and both objectives.
    CaptionerConfig cfg;
    cfg.vocab_size = 32;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    InitOptions init;
    init.seed = 21;
    init.stddev = 0.3;
    init.zero_output_head = false;
    TinyCaptioner model(cfg, init);
    WorldConfig w;
    w.n_examples = 2;
    w.vocab_size = 32;
    w.markers_per_style = 8;
    const auto batch = synthesize_dataset(w, 21);
    const SimPOHyper hp;
    auto check_params = [&](const char *name, auto tape_loss, auto value_loss) {
        Tape tape;
        const auto g = tape.backward(tape_loss(tape)).to_vector(model.params());
        const double e = fdcheck::max_param_gradient_error(model.params(), g, value_loss);
        if (e > worst) {
            worst = e;
            worst_name = name;
        }
    };
    const auto &caption = batch[0].stylized;
    const auto &image = batch[0].image;
    check_params(
        "captioner", [&](Tape &t) { return sequence_logprob(t, model, image, caption, Style::humor); },
        [&] { return sequence_logprob(model, image, caption, Style::humor); });
    check_params(
        "sft_loss", [&](Tape &t) { return sft_loss(t, model, batch, Style::humor); },
        [&] { return sft_loss(model, batch, Style::humor); });
    check_params(
        "simpo_loss", [&](Tape &t) { return simpo_loss(t, model, batch, hp, Style::humor); },
        [&] { return simpo_loss(model, batch, hp, Style::humor); });

    const double secs = seconds_since(t0);
    return {worst < 1e-3 && secs < 60.0,
            fmt("%zu primitives + captioner(V=32,d=16,L=2) + 2 objectives; max scaled error %.2e (%s); %.1f s",
                cases.size(), worst, worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 2. analytic values

auto analytic_values() -> Outcome {
    SimPOHyper zero_gamma;
    zero_gamma.gamma = 0.0;
    const double tie = simpo_term(-1.3, -1.3, zero_gamma);
    const double margin = simpo_term(0.5, -0.5, zero_gamma);    // beta 2, delta 1

    const TinyCaptioner uniform(CaptionerConfig{}, InitOptions{});
    const double ln_v = std::log(64.0);
    const auto batch = synthesize_dataset(WorldConfig{.n_examples = 8}, 5);
    auto same = batch;
    for (auto &t : same) {
        t.factual = t.stylized;
    }
    const double sft = sft_loss(uniform, batch, Style::humor);
    const double simpo_same = simpo_loss(uniform, same, zero_gamma, Style::humor);
    const std::vector<double> image(16, 0.4);
    Caption c3{1, 2, kEos}, c30;
    for (std::size_t i = 0; i < 29; ++i) {
        c30.push_back(1 + i % 40);
    }
    c30.push_back(kEos);
    const double n3 = normalized_logprob(uniform, image, c3, Style::humor);
    const double n30 = normalized_logprob(uniform, image, c30, Style::humor);

    const bool ok = std::abs(tie - std::numbers::ln2) < 1e-12 && std::abs(simpo_same - std::numbers::ln2) < 1e-12
                    && std::abs(margin - std::log1p(std::exp(-2.0))) < 1e-9 && std::abs(sft - ln_v) < 1e-12
                    && n3 == n30 && n3 == -ln_v;
    return {ok, fmt("simpo tie %.15f, margin %.9f (ln(1+e^-2)=%.9f), sft %.15f (ln 64=%.15f), "
                    "norm logp len3 %.17g len30 %.17g",
                    tie, margin, std::log1p(std::exp(-2.0)), sft, ln_v, n3, n30)};
}

// ---------------------------------------------------------------------------
// 3. metric oracles

auto metric_oracles() -> Outcome {
    InitOptions init;
    init.seed = 8;
    init.stddev = 0.3;
    init.zero_output_head = false;
    const TinyCaptioner model(CaptionerConfig{}, init);
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const auto image = random_tensor({16}, 500 + i).values();
        CounterRng rng(900 + i);
        Caption cap;
        const std::size_t len = 1 + rng.below(12);
        for (std::size_t j = 0; j + 1 < len; ++j) {
            cap.push_back(1 + rng.below(63));
        }
        cap.push_back(kEos);
        const auto instr = i % 3 == 0 ? Instruction{} : Instruction{Style::humor};
        const double got = normalized_logprob(model, image, cap, instr);
        const double want = oracles::oracle_logprob(model, image, cap, instr) / static_cast<double>(cap.size());
        worst = std::max(worst, std::abs(got - want));
    }

    WorldConfig w;
    w.n_examples = 131;
    const auto test = synthesize_dataset(w, 17);
    const double wr_uniform = wr_logp(TinyCaptioner(CaptionerConfig{}, InitOptions{}), test, Style::humor);
    const auto scores = score_pairs(model, test, Style::humor);
    const bool tie_free =
        std::none_of(scores.begin(), scores.end(), [](const PairScore &s) { return s.stylized == s.factual; });
    auto swapped = test;
    for (auto &t : swapped) {
        std::swap(t.stylized, t.factual);
    }
    const double wr = wr_logp(model, test, Style::humor);
    const double wr_sw = wr_logp(model, swapped, Style::humor);
    const bool ok = worst < 1e-9 && wr_uniform == 0.0 && tie_free && std::abs(wr + wr_sw - 100.0) < 1e-9;
    return {ok, fmt("oracle max |diff| %.2e over 50 pairs; zero-head WR %.1f; WR %.4f + swapped %.4f = %.4f",
                    worst, wr_uniform, wr, wr_sw, wr + wr_sw)};
}

// ---------------------------------------------------------------------------
// 4. method ordering

auto method_ordering() -> Outcome {
    const auto t0 = Clock::now();
    const RunConfig cfg = preset("desk");
    const auto splits = split_dataset(synthesize_dataset(cfg.world, cfg.world_seed), cfg.splits, cfg.split_seed);
    const auto head =
        train_classifier(labeled_pairs(splits.train), labeled_pairs(splits.validation), classifier_config(cfg)).head;
    const TinyCaptioner zero_shot(cfg.model, cfg.init);
    const auto sft = train(zero_shot, splits, train_config(cfg, Objective::sft)).model;
    const auto simpo = train(zero_shot, splits, train_config(cfg, Objective::simpo)).model;
    const auto &test = splits.test;
    const Style style = cfg.world.style;
    const double wr0 = wr_logp(zero_shot, test, style), wr1 = wr_logp(sft, test, style),
                 wr2 = wr_logp(simpo, test, style);
    const double acc0 = style_acc(zero_shot, head, test, cfg.decode), acc1 = style_acc(sft, head, test, cfg.decode),
                 acc2 = style_acc(simpo, head, test, cfg.decode);
    const double secs = seconds_since(t0);
    const bool ok = wr0 < wr1 && wr1 < wr2 && acc0 < acc1 && secs < 600.0;
    return {ok, fmt("%zu/%zu/%zu split; WR-LogP zero_shot %.1f < SFT %.1f < SimPO %.1f; Style-Acc zero_shot %.1f < "
                    "SFT %.1f (SimPO %.1f); %.1f s",
                    splits.train.size(), splits.validation.size(), test.size(), wr0, wr1, wr2, acc0, acc1, acc2,
                    secs)};
}

// ---------------------------------------------------------------------------
// 5. saturation

auto saturation() -> Outcome {
    const auto t0 = Clock::now();
    const RunConfig cfg = preset("desk");
    const auto splits = split_dataset(synthesize_dataset(cfg.world, cfg.world_seed), cfg.splits, cfg.split_seed);
    const auto head =
        train_classifier(labeled_pairs(splits.train), labeled_pairs(splits.validation), classifier_config(cfg)).head;
    const SweepInputs inputs{splits, TinyCaptioner(cfg.model, cfg.init), head, train_config(cfg, Objective::simpo),
                             cfg.decode};
    SweepConfig sc;
    sc.grid = kDefaultGrid;
    sc.subset_seeds = {0, 1, 2};
    sc.epsilon = 0.05;
    const auto report = run_sweep(inputs, sc, 1);
    const double secs = seconds_since(t0);
    std::string curve;
    for (const auto &m : report.means) {
        curve += fmt("%s%g:%.1f", curve.empty() ? "" : " ", m.budget_percent, m.wr_logp);
    }
    const bool ok = report.points.size() == 21 && report.saturation_budget <= 10.0 && secs < 2700.0;
    return {ok, fmt("%zu cells serial; mean WR-LogP by budget {%s}; saturation %g%%; %.1f s", report.points.size(),
                    curve.c_str(), report.saturation_budget, secs)};
}

// ---------------------------------------------------------------------------
// 6. classifier

auto classifier() -> Outcome {
    const RunConfig cfg = preset("new_yorker");    // depth 2, 20 epochs, lr 2e-4, batch 32
    const auto splits = split_dataset(synthesize_dataset(cfg.world, cfg.world_seed), cfg.splits, cfg.split_seed);
    const auto kc = classifier_config(cfg);
    const auto r = train_classifier(labeled_pairs(splits.train), labeled_pairs(splits.validation), kc);
    const auto m = evaluate_classifier(r.head, labeled_pairs(splits.test));

    std::vector<int> pred, label;
    auto push = [&](int p, int y, int n) {
        pred.insert(pred.end(), n, p);
        label.insert(label.end(), n, y);
    };
    push(1, 1, 12);
    push(1, 0, 2);
    push(0, 1, 3);
    push(0, 0, 13);
    const auto h = classifier_metrics(pred, label);
    const std::string hand = fmt("%.2f/%.2f/%.2f/%.2f", h.precision, h.recall, h.f1, h.accuracy);
    const bool ok = kc.depth == 2 && kc.max_epochs <= 20 && kc.learning_rate == 2e-4 && kc.batch_size == 32
                    && m.accuracy >= 90.0 && hand == "85.71/80.00/82.76/83.33";
    return {ok, fmt("depth %zu, %zu epochs (best %zu), test accuracy %.2f%% on %zu pairs; hand matrix %s", kc.depth,
                    kc.max_epochs, r.best_epoch, m.accuracy, 2 * splits.test.size(), hand.c_str())};
}

// ---------------------------------------------------------------------------
// 7. determinism through the CLI

auto slurp(const fs::path &p) -> std::string {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

auto cli_determinism() -> Outcome {
    const auto t0 = Clock::now();
    const fs::path dir = fs::temp_directory_path() / "stylealign_acceptance_sweep";
    fs::remove_all(dir);
    auto sweep = [&](const std::string &name, int jobs) {
        const std::string cmd = std::string(STYLEALIGN_BIN) + " sweep --preset desk --jobs " + std::to_string(jobs)
                                + " --out " + (dir / name).string() + " 2>/dev/null";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    const int c1 = sweep("run1", 1), c2 = sweep("run2", 1), c4 = sweep("jobs4", 4);
    const auto csv1 = slurp(dir / "run1" / "curve.csv");
    bool same_reports = true;
    for (const char *f : {"curve.csv", "curve.svg", "sweep_config.json"}) {
        same_reports = same_reports && slurp(dir / "run1" / f) == slurp(dir / "jobs4" / f);
    }
    const bool reruns_match = !csv1.empty() && csv1 == slurp(dir / "run2" / "curve.csv");
    const bool ok = c1 == 0 && c2 == 0 && c4 == 0 && reruns_match && same_reports;
    const auto rows = std::count(csv1.begin(), csv1.end(), '\n');
    fs::remove_all(dir);
    return {ok, fmt("exit codes %d/%d/%d; curve.csv %ld lines identical across reruns: %s; --jobs 1 vs 4 reports "
                    "identical: %s; %.1f s",
                    c1, c2, c4, static_cast<long>(rows), reruns_match ? "yes" : "no",
                    same_reports ? "yes" : "no", seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 8. schedulers and optimizer

auto schedulers_optimizer() -> Outcome {
    const double lin_mid = lr_at(Scheduler::linear_decay, 135, 1.0e-5, 270);
    const double cos_mid = lr_at(Scheduler::cosine, 135, 1.0e-5, 270);
    bool endpoints = true;
    for (auto s : {Scheduler::linear_decay, Scheduler::cosine}) {
        endpoints = endpoints && lr_at(s, 0, 1.0e-5, 270) == 1.0e-5 && lr_at(s, 270, 1.0e-5, 270) == 0.0;
        endpoints = endpoints && lr_at(s, 0, 2e-5, 66) == 2e-5 && lr_at(s, 66, 2e-5, 66) == 0.0;
    }
    const bool cos_simpo_mid = lr_at(Scheduler::cosine, 33, 2e-5, 66) == 1e-5;

    // Two Adam steps on f(x) = 1.5 (x - 2)^2 against a plain scalar Adam.
    ParameterSet p;
    p.add("x", Tensor::scalar(-0.75));
    auto st = OptState::for_params(p);
    double x = -0.75, m = 0.0, v = 0.0, worst = 0.0;
    for (int t = 1; t <= 2; ++t) {
        adam_step(p, std::vector<Tensor>{Tensor::scalar(3.0 * (p[0].item() - 2.0))}, st, 0.1);
        const double g = 3.0 * (x - 2.0);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
        worst = std::max(worst, std::abs(p[0].item() - x));
    }
    const bool ok = lin_mid == 5.0e-6 && cos_mid == 5.0e-6 && cos_simpo_mid && endpoints && worst < 1e-12;
    return {ok, fmt("linear(135/270, 1e-5) = %.17g; cosine midpoint = %.17g; endpoints exact: %s; "
                    "Adam vs scalar oracle max |diff| %.1e",
                    lin_mid, cos_mid, endpoints ? "yes" : "no", worst)};
}

}    // namespace

auto main() -> int {
    const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
        {"gradient suite", gradient_suite},
        {"analytic values", analytic_values},
        {"metric oracles", metric_oracles},
        {"method ordering", method_ordering},
        {"saturation", saturation},
        {"classifier", classifier},
        {"determinism", cli_determinism},
        {"schedulers/optimizer", schedulers_optimizer},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
    return failures == 0 ? 0 : 1;
}
