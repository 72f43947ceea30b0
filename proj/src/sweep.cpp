#include "stylealign/sweep.hpp"

#include "stylealign/evalsuite.hpp"
#include "stylealign/rng.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>

namespace stylealign {

namespace {

auto fmt9(double v) -> std::string {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

}    // namespace

void validate_grid(const std::vector<double> &grid) {
    if (grid.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0 && grid[i] <= 100.0)) {
            throw ConfigError("sweep grid value " + fmt9(grid[i]) + " outside (0, 100]");
        }
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw ConfigError("sweep grid must be strictly increasing");
        }
    }
    if (grid.back() != 100.0) {
        throw ConfigError("sweep grid must contain 100");
    }
}

void validate_sweep(const SweepConfig &config) {
    validate_grid(config.grid);
    if (config.subset_seeds.empty() || config.subset_seeds.size() > kMaxSubsetSeeds) {
        throw ConfigError("sweep needs 1 to " + std::to_string(kMaxSubsetSeeds) + " subset seeds");
    }
    auto seeds = config.subset_seeds;
    std::sort(seeds.begin(), seeds.end());
    if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) {
        throw ConfigError("sweep subset seeds must be distinct");
    }
    if (!(config.epsilon >= 0.0 && config.epsilon < 1.0)) {
        throw ConfigError("sweep epsilon must be in [0, 1)");
    }
}

SweepCellError::SweepCellError(double budget, std::uint64_t seed, const std::string &what)
    : Error("sweep cell (budget " + fmt9(budget) + "%, subset_seed " + std::to_string(seed) + "): " + what),
      budget_(budget), seed_(seed) {}

auto cell_train_config(const TrainConfig &base, double budget, std::uint64_t subset_seed) -> TrainConfig {
    TrainConfig c = base;
    c.subset_seed = subset_seed;
    c.stream_tag = mix64(std::bit_cast<std::uint64_t>(budget));
    return c;
}

auto run_cell(const SweepInputs &inputs, double budget, std::uint64_t subset_seed) -> CurvePoint {
    DatasetSplits cell = inputs.splits;
    cell.train = truncate_train(inputs.splits.train, budget, subset_seed);
    const auto result = train(inputs.initial, cell, cell_train_config(inputs.trainer, budget, subset_seed));
    const auto &test = inputs.splits.test;
    return {budget,
            subset_seed,
            wr_logp(result.model, test, test.front().style),
            style_acc(result.model, inputs.head, test, inputs.decode),
            cell.train.size(),
            result.history.stop_reason};
}

auto budget_means(const std::vector<CurvePoint> &points) -> std::vector<BudgetMean> {
    std::vector<BudgetMean> means;
    for (const auto &p : points) {
        if (means.empty() || means.back().budget_percent != p.budget_percent) {
            means.push_back({p.budget_percent, 0.0, 0.0, 0});
        }
        auto &m = means.back();
        m.wr_logp += p.wr_logp;
        m.style_acc += p.style_acc;
        ++m.n_seeds;
    }
    for (auto &m : means) {
        m.wr_logp /= static_cast<double>(m.n_seeds);
        m.style_acc /= static_cast<double>(m.n_seeds);
    }
    return means;
}

auto detect_saturation(const std::vector<std::pair<double, double>> &curve, double epsilon) -> double {
    if (curve.empty()) {
        throw ContractError("detect_saturation: empty curve");
    }
    double best = curve.front().second;
    for (const auto &[b, v] : curve) {
        best = std::max(best, v);
    }
    const double threshold = (1.0 - epsilon) * best;
    double answer = curve.front().first;
    bool found = false;
    for (const auto &[b, v] : curve) {
        if (v >= threshold && (!found || b < answer)) {
            answer = b;
            found = true;
        }
    }
    return answer;
}

auto detect_saturation(const std::vector<BudgetMean> &means, double epsilon) -> double {
    std::vector<std::pair<double, double>> curve;
    for (const auto &m : means) {
        curve.emplace_back(m.budget_percent, m.wr_logp);
    }
    return detect_saturation(curve, epsilon);
}

auto run_sweep(const SweepInputs &inputs, const SweepConfig &config, std::size_t jobs,
               const nlohmann::json &provenance) -> SweepReport {
    validate_sweep(config);
    validate_train(inputs.trainer);
    validate_decode(inputs.decode);
    if (inputs.splits.test.empty()) {
        throw ContractError("sweep: test split is empty");
    }
    if (jobs < 1) {
        throw ConfigError("sweep: jobs must be >= 1");
    }

    struct Cell {
        double budget;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (double b : config.grid) {
        for (std::uint64_t s : config.subset_seeds) {
            cells.push_back({b, s});
        }
    }
    std::sort(cells.begin(), cells.end(),
              [](const Cell &a, const Cell &b) { return a.budget != b.budget ? a.budget < b.budget : a.seed < b.seed; });

    std::vector<CurvePoint> points(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(jobs)) if (jobs > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto &c = cells[static_cast<std::size_t>(i)];
        try {
            points[static_cast<std::size_t>(i)] = run_cell(inputs, c.budget, c.seed);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const std::exception &e) {
                throw SweepCellError(cells[i].budget, cells[i].seed, e.what());
            }
        }
    }

    SweepReport report;
    report.points = std::move(points);
    report.means = budget_means(report.points);
    report.saturation_budget = detect_saturation(report.means, config.epsilon);
    report.fingerprint = provenance;
    report.fingerprint["sweep"] = {{"grid", config.grid},
                                   {"subset_seeds", config.subset_seeds},
                                   {"epsilon", config.epsilon},
                                   {"method", objective_name(inputs.trainer.objective)},
                                   {"saturation_budget", report.saturation_budget}};
    return report;
}

// ----------------------------------------------------------------------------
// serialization

auto curve_csv(const std::vector<CurvePoint> &points) -> std::string {
    std::string out(kCurveHeader);
    out += '\n';
    for (const auto &p : points) {
        out += fmt9(p.budget_percent) + ',' + std::to_string(p.subset_seed) + ',' + fmt9(p.wr_logp) + ','
               + fmt9(p.style_acc) + ',' + std::to_string(p.train_size) + ','
               + std::string(stop_reason_name(p.stop_reason)) + '\n';
    }
    return out;
}

auto parse_curve_csv(std::string_view text) -> std::vector<CurvePoint> {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kCurveHeader) {
        throw ParseError("curve csv: expected header \"" + std::string(kCurveHeader) + "\"");
    }
    std::vector<CurvePoint> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        const auto where = "curve csv line " + std::to_string(line_no);
        if (cells.size() != 6) {
            throw ParseError(where + ": expected 6 fields, got " + std::to_string(cells.size()));
        }
        auto parse = [&](const std::string &s, auto &value) {
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
            if (ec != std::errc{} || ptr != s.data() + s.size()) {
                throw ParseError(where + ": bad value \"" + s + "\"");
            }
        };
        CurvePoint p;
        parse(cells[0], p.budget_percent);
        parse(cells[1], p.subset_seed);
        parse(cells[2], p.wr_logp);
        parse(cells[3], p.style_acc);
        parse(cells[4], p.train_size);
        const auto reason = parse_stop_reason(cells[5]);
        if (!reason) {
            throw ParseError(where + ": unknown stop reason \"" + cells[5] + "\"");
        }
        p.stop_reason = *reason;
        out.push_back(p);
    }
    return out;
}

auto curve_svg(const SweepReport &report) -> std::string {
    if (report.points.empty()) {
        throw ContractError("curve_svg: empty report");
    }
    constexpr double width = 640, height = 400, left = 60, right = 20, top = 30, bottom = 50;
    const double lo = std::log10(report.means.front().budget_percent);
    const double hi = std::log10(std::max(report.means.back().budget_percent, report.means.front().budget_percent * 1.0001));
    auto x_of = [&](double budget) {
        return left + (std::log10(budget) - lo) / (hi - lo) * (width - left - right);
    };
    auto y_of = [&](double pct) { return top + (1.0 - pct / 100.0) * (height - top - bottom); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    // axes
    s += "<line class=\"axis\" x1=\"" + num(left) + "\" y1=\"" + num(height - bottom) + "\" x2=\"" + num(width - right)
         + "\" y2=\"" + num(height - bottom) + "\" stroke=\"black\"/>\n";
    s += "<line class=\"axis\" x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\""
         + num(height - bottom) + "\" stroke=\"black\"/>\n";
    for (const auto &m : report.means) {
        s += "<text x=\"" + num(x_of(m.budget_percent)) + "\" y=\"" + num(height - bottom + 18)
             + "\" font-size=\"11\" text-anchor=\"middle\">" + fmt9(m.budget_percent) + "</text>\n";
    }
    for (int pct = 0; pct <= 100; pct += 25) {
        s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(y_of(pct) + 4) + "\" font-size=\"11\" text-anchor=\"end\">"
             + std::to_string(pct) + "</text>\n";
    }
    s += "<text x=\"" + num(width / 2) + "\" y=\"" + num(height - 10)
         + "\" font-size=\"12\" text-anchor=\"middle\">preference data budget (%, log scale)</text>\n";

    struct Series {
        const char *name;
        const char *color;
        double BudgetMean::*mean;
        double CurvePoint::*point;
    };
    const Series series[] = {{"wr_logp", "#1f77b4", &BudgetMean::wr_logp, &CurvePoint::wr_logp},
                             {"style_acc", "#d62728", &BudgetMean::style_acc, &CurvePoint::style_acc}};
    for (const auto &ser : series) {
        s += "<polyline class=\"metric\" id=\"" + std::string(ser.name) + "\" fill=\"none\" stroke=\"" + ser.color
             + "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < report.means.size(); ++i) {
            const auto &m = report.means[i];
            s += (i ? " " : "") + num(x_of(m.budget_percent)) + "," + num(y_of(m.*ser.mean));
        }
        s += "\"/>\n";
        for (const auto &p : report.points) {
            s += "<circle class=\"seed\" cx=\"" + num(x_of(p.budget_percent)) + "\" cy=\"" + num(y_of(p.*ser.point))
                 + "\" r=\"2.5\" fill=\"" + ser.color + "\" fill-opacity=\"0.5\"/>\n";
        }
    }
    const double xs = x_of(report.saturation_budget);
    s += "<line class=\"saturation\" x1=\"" + num(xs) + "\" y1=\"" + num(top) + "\" x2=\"" + num(xs) + "\" y2=\""
         + num(height - bottom) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    s += "<text x=\"" + num(left + 10) + "\" y=\"" + num(top - 10)
         + "\" font-size=\"12\" fill=\"#1f77b4\">WR-LogP</text>\n";
    s += "<text x=\"" + num(left + 80) + "\" y=\"" + num(top - 10)
         + "\" font-size=\"12\" fill=\"#d62728\">Style-Acc</text>\n";
    s += "<text x=\"" + num(xs + 4) + "\" y=\"" + num(top + 12) + "\" font-size=\"11\" fill=\"gray\">saturation "
         + fmt9(report.saturation_budget) + "%</text>\n";
    s += "</svg>\n";
    return s;
}

void emit_report(const SweepReport &report, const std::filesystem::path &out_dir) {
    if (report.points.empty()) {
        throw ContractError("emit_report: empty report");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
    }
    write_text(out_dir / "curve.csv", curve_csv(report.points));
    write_text(out_dir / "curve.svg", curve_svg(report));
    write_text(out_dir / "sweep_config.json", report.fingerprint.dump(2) + "\n");
}

}    // namespace stylealign
