#include "stylealign/cli.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/evalsuite.hpp"
#include "stylealign/run_config.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace stylealign {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string preset;
    std::string out;
    std::string data;
    std::string model;
    std::string classifier;
    std::string method;
    std::string in;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t jobs = 1;
};

auto make_logger() -> std::shared_ptr<spdlog::logger> {
    const char *env = std::getenv("STYLEALIGN_LOG");
    const std::string level = env ? env : "info";
    auto logger = spdlog::get("stylealign");
    if (!logger) {
        logger = spdlog::stderr_logger_st("stylealign");
        logger->set_pattern("[%l] %v");
    }
    if (level == "error") {
        logger->set_level(spdlog::level::err);
    } else if (level == "info") {
        logger->set_level(spdlog::level::info);
    } else if (level == "debug") {
        logger->set_level(spdlog::level::debug);
    } else {
        throw ConfigError("STYLEALIGN_LOG must be error, info or debug (got \"" + level + "\")");
    }
    return logger;
}

auto opt_path(const std::string &s) -> std::optional<fs::path> {
    return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

class Runner {
  public:
    Runner(const Options &o, std::shared_ptr<spdlog::logger> log)
        : o_(o), log_(std::move(log)),
          config_(load_run_config(o.preset.empty() ? std::nullopt : std::optional<std::string>(o.preset),
                                  opt_path(o.config))) {
        if (o.seed_given) {
            config_.world_seed = o.seed;
        }
        log_->debug("config: {}", run_config_to_json(config_).dump());
    }

    void gen_data() {
        const auto data = synthesize_dataset(config_.world, config_.world_seed);
        write_jsonl(data, out_file());
        log_->info("wrote {} triplets to {}", data.size(), o_.out);
    }

    void train_model() {
        const Objective method = objective_flag();
        const auto splits = load_splits();
        DatasetSplits cell = splits;
        cell.train = truncate_train(splits.train, config_.trainer.budget_percent, config_.trainer.subset_seed);
        log_->info("training {} on {} of {} triplets", objective_name(method), cell.train.size(),
                   splits.train.size());
        const auto result = train(initial_model(), cell, train_config(config_, method));
        const fs::path dir = out_dir();
        auto ckpt = result.model.to_checkpoint();
        ckpt.config["trained_with"] = objective_name(method);
        write_checkpoint(dir / "model.json", ckpt);
        write_history_csv(result.history, dir / "history.csv");
        log_->info("best step {} ({}); wrote {}", result.history.best_step,
                   stop_reason_name(result.history.stop_reason), (dir / "model.json").string());
    }

    void train_head() {
        const auto splits = load_splits();
        const auto head = fit_classifier(splits);
        const fs::path dir = out_dir();
        head.save(dir / "classifier.json");
        const auto metrics = evaluate_classifier(head, labeled_pairs(splits.test));
        write_text(dir / "metrics.csv", metrics_csv(config_.dataset, metrics));
        log_->info("classifier test accuracy {:.1f}%", metrics.accuracy);
    }

    void eval() {
        const auto splits = load_splits();
        std::optional<Checkpoint> ckpt;
        if (!o_.model.empty()) {
            ckpt = read_checkpoint(o_.model);
        }
        const TinyCaptioner model = ckpt ? TinyCaptioner::from_checkpoint(*ckpt) : initial_model();
        // Label: --method, else the objective recorded by `train`.
        Method method = Method::zero_shot;
        if (!o_.method.empty()) {
            const auto m = parse_method(o_.method);
            if (!m) {
                throw ConfigError("--method must be zero_shot, sft or simpo for eval");
            }
            method = *m;
        } else if (ckpt) {
            const auto recorded = ckpt->config.value("trained_with", std::string(objective_name(config_.method)));
            method = parse_method(recorded).value_or(Method::sft);
        }
        const auto head = o_.classifier.empty() ? fit_classifier(splits) : StyleClassifier::load(o_.classifier);
        const auto &test = splits.test;
        const double wr = wr_logp(model, test, test.front().style);
        const double acc = style_acc(model, head, test, config_.decode, config_.decode_seed);
        const std::vector<EvalReport> rows{make_report(method, config_.dataset, wr, acc, test.size())};
        write_text(out_file(), report_csv(rows));
        log_->info("{}: wr_logp {:.1f} style_acc {:.1f} (n={})", method_name(method), wr, acc, test.size());
    }

    void sweep() {
        const auto splits = load_splits();
        const auto head = o_.classifier.empty() ? fit_classifier(splits) : StyleClassifier::load(o_.classifier);
        const SweepInputs inputs{splits, initial_model(), head, train_config(config_, objective_flag()),
                                 config_.decode};
        auto provenance = run_config_to_json(config_);
        provenance["data"] = o_.data.empty() ? nlohmann::json("synthetic") : nlohmann::json(o_.data);
        log_->info("sweep: {} budgets x {} seeds", config_.sweep.grid.size(), config_.sweep.subset_seeds.size());
        const auto report = run_sweep(inputs, config_.sweep, o_.jobs, provenance);
        emit_report(report, out_dir());
        log_->info("saturation budget {}%", report.saturation_budget);
    }

  private:
    auto require_out() const -> fs::path {
        if (o_.out.empty()) {
            throw ConfigError("--out is required");
        }
        return o_.out;
    }

    auto out_dir() const -> fs::path {
        return ensure_dir(require_out());
    }

    // --out names a file; its parent directory is created on demand.
    auto out_file() const -> fs::path {
        const fs::path file = require_out();
        if (file.has_parent_path()) {
            ensure_dir(file.parent_path());
        }
        return file;
    }

    static auto ensure_dir(const fs::path &dir) -> fs::path {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
        }
        return dir;
    }

    auto objective_flag() const -> Objective {
        if (o_.method.empty()) {
            return config_.method;
        }
        const auto m = parse_objective(o_.method);
        if (!m) {
            throw ConfigError("--method must be sft or simpo");
        }
        return *m;
    }

    auto load_splits() const -> DatasetSplits {
        const auto data =
            o_.data.empty() ? synthesize_dataset(config_.world, config_.world_seed) : read_jsonl(o_.data);
        return split_dataset(data, config_.splits, config_.split_seed);
    }

    auto initial_model() const -> TinyCaptioner {
        return {config_.model, config_.init};
    }

    auto fit_classifier(const DatasetSplits &splits) const -> StyleClassifier {
        log_->info("training depth-{} style classifier", config_.classifier.depth);
        return train_classifier(labeled_pairs(splits.train), labeled_pairs(splits.validation),
                                classifier_config(config_))
            .head;
    }

    static void write_text(const fs::path &path, const std::string &text) {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw IoError("cannot open " + path.string() + " for writing");
        }
        out << text;
    }

    const Options &o_;
    std::shared_ptr<spdlog::logger> log_;
    RunConfig config_;
};

// Re-renders curve.csv / curve.svg from a saved sweep directory.
void rerender(const Options &o, spdlog::logger &log) {
    if (o.in.empty()) {
        throw ConfigError("--in is required");
    }
    const fs::path in = o.in;
    auto read = [](const fs::path &p) {
        std::ifstream f(p, std::ios::binary);
        if (!f) {
            throw IoError("cannot read " + p.string());
        }
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    SweepReport report;
    report.points = parse_curve_csv(read(in / "curve.csv"));
    if (report.points.empty()) {
        throw InputError((in / "curve.csv").string() + " has no data rows");
    }
    try {
        report.fingerprint = nlohmann::json::parse(read(in / "sweep_config.json"));
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError((in / "sweep_config.json").string() + ": " + e.what());
    }
    double epsilon = 0.05;
    if (const auto it = report.fingerprint.find("sweep"); it != report.fingerprint.end() && it->contains("epsilon")) {
        epsilon = it->at("epsilon").get<double>();
    }
    std::stable_sort(report.points.begin(), report.points.end(), [](const auto &a, const auto &b) {
        return a.budget_percent != b.budget_percent ? a.budget_percent < b.budget_percent
                                                    : a.subset_seed < b.subset_seed;
    });
    report.means = budget_means(report.points);
    report.saturation_budget = detect_saturation(report.means, epsilon);
    emit_report(report, o.out.empty() ? in : fs::path(o.out));
    log.info("saturation budget {}%", report.saturation_budget);
}

}    // namespace

auto parse_and_dispatch(int argc, const char *const *argv) -> int {
    CLI::App app{"Stylistic preference-alignment laboratory on a synthetic captioning world", "stylealign"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--preset", o.preset, "Base preset: desk, new_yorker, flickr_humor, flickr_romantic");
        sub->add_option("--seed", o.seed, "Data synthesis seed (overrides world.seed)")
            ->each([&](const std::string &) { o.seed_given = true; });
    };
    auto data_opt = [&](CLI::App *sub) {
        sub->add_option("--data", o.data, "Triplets JSONL (default: synthesize from the config)")
            ->check(CLI::ExistingFile);
    };

    auto *gen = app.add_subcommand("gen-data", "Synthesize preference triplets and write JSONL");
    common(gen);
    gen->add_option("--out", o.out, "Output JSONL file")->required();

    auto *tr = app.add_subcommand("train", "Train one captioner (SFT or SimPO)");
    common(tr);
    data_opt(tr);
    tr->add_option("--method", o.method, "sft or simpo (default: objective.method)");
    tr->add_option("--out", o.out, "Output directory for model.json and history.csv")->required();

    auto *tc = app.add_subcommand("train-classifier", "Train the evaluation style classifier");
    common(tc);
    data_opt(tc);
    tc->add_option("--out", o.out, "Output directory for classifier.json and metrics.csv")->required();

    auto *ev = app.add_subcommand("eval", "Score a captioner with WR-LogP and Style-Acc");
    common(ev);
    data_opt(ev);
    ev->add_option("--model", o.model, "Captioner checkpoint (default: the untrained zero-shot model)")
        ->check(CLI::ExistingFile);
    ev->add_option("--classifier", o.classifier, "Classifier checkpoint (default: train one)")
        ->check(CLI::ExistingFile);
    ev->add_option("--method", o.method, "Report label: zero_shot, sft or simpo");
    ev->add_option("--out", o.out, "Output report CSV")->required();

    auto *sw = app.add_subcommand("sweep", "Run the data-efficiency sweep");
    common(sw);
    data_opt(sw);
    sw->add_option("--classifier", o.classifier, "Classifier checkpoint (default: train one)")
        ->check(CLI::ExistingFile);
    sw->add_option("--method", o.method, "sft or simpo (default: objective.method)");
    sw->add_option("--jobs", o.jobs, "Worker threads for sweep cells")->check(CLI::PositiveNumber);
    sw->add_option("--out", o.out, "Output directory for curve.csv, curve.svg, sweep_config.json")->required();

    auto *rp = app.add_subcommand("report", "Re-render curve.csv and curve.svg from a saved sweep");
    rp->add_option("--in", o.in, "Sweep output directory")->required()->check(CLI::ExistingDirectory);
    rp->add_option("--out", o.out, "Output directory (default: --in)");

    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
        std::cerr << "error: unknown subcommand \"" << argv[1] << "\"\n\n" << app.help();
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, std::cout, std::cerr);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e, std::cout, std::cerr);
    } catch (const CLI::ParseError &e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        auto log = make_logger();
        if (rp->parsed()) {
            rerender(o, *log);
            return kExitOk;
        }
        Runner run(o, log);
        if (gen->parsed()) {
            run.gen_data();
        } else if (tr->parsed()) {
            run.train_model();
        } else if (tc->parsed()) {
            run.train_head();
        } else if (ev->parsed()) {
            run.eval();
        } else if (sw->parsed()) {
            run.sweep();
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

auto parse_and_dispatch(const std::vector<std::string> &args) -> int {
    std::vector<const char *> argv;
    argv.reserve(args.size());
    for (const auto &a : args) {
        argv.push_back(a.c_str());
    }
    return parse_and_dispatch(static_cast<int>(argv.size()), argv.data());
}

}    // namespace stylealign
