#include "stylealign/evalsuite.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/rng.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace stylealign {

namespace {

void require_non_empty(std::span<const PreferenceTriplet> test, const char *what) {
    if (test.empty()) {
        throw ContractError(std::string(what) + ": test set is empty");
    }
}

auto percent(std::size_t count, std::size_t n) -> double {
    return 100.0 * static_cast<double>(count) / static_cast<double>(n);
}

auto as_index(std::size_t i) -> std::ptrdiff_t {
    return static_cast<std::ptrdiff_t>(i);
}

}    // namespace

auto score_pairs(const TinyCaptioner &model, std::span<const PreferenceTriplet> test, Instruction instruction,
                 Execution exec) -> std::vector<PairScore> {
    std::vector<PairScore> scores(test.size());
    const auto n = as_index(test.size());
    auto score_one = [&](std::ptrdiff_t i) {
        const auto &t = test[static_cast<std::size_t>(i)];
        scores[static_cast<std::size_t>(i)] = {normalized_logprob(model, t.image, t.stylized, instruction),
                                               normalized_logprob(model, t.image, t.factual, instruction)};
    };
    if (exec == Execution::parallel) {
        // Errors cannot escape an OpenMP region; capture the first one.
        std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                score_one(i);
            } catch (...) {
#pragma omp critical
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
        if (error) {
            std::rethrow_exception(error);
        }
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            score_one(i);
        }
    }
    return scores;
}

auto wr_logp(const TinyCaptioner &model, std::span<const PreferenceTriplet> test, Instruction instruction,
             Execution exec) -> double {
    require_non_empty(test, "wr_logp");
    std::size_t wins = 0;
    for (const auto &s : score_pairs(model, test, instruction, exec)) {
        wins += s.win() ? 1 : 0;
    }
    return percent(wins, test.size());
}

auto generate_captions(const TinyCaptioner &model, std::span<const PreferenceTriplet> test,
                       const DecodeConfig &decode, std::uint64_t seed, Execution exec) -> std::vector<Caption> {
    validate_decode(decode);
    std::vector<Caption> out(test.size());
    const auto n = as_index(test.size());
    auto gen_one = [&](std::ptrdiff_t i) {
        const auto k = static_cast<std::size_t>(i);
        out[k] = generate(model, test[k].image, test[k].style, decode, derive_key(seed, k));
    };
    if (exec == Execution::parallel) {
        std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                gen_one(i);
            } catch (...) {
#pragma omp critical
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
        if (error) {
            std::rethrow_exception(error);
        }
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            gen_one(i);
        }
    }
    return out;
}

auto style_acc(const TinyCaptioner &model, const StyleClassifier &head, std::span<const PreferenceTriplet> test,
               const DecodeConfig &decode, std::uint64_t seed, Execution exec) -> double {
    require_non_empty(test, "style_acc");
    const auto captions = generate_captions(model, test, decode, seed, exec);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        positives += static_cast<std::size_t>(classify_caption(head, test[i].image, captions[i]).label);
    }
    return percent(positives, test.size());
}

// ----------------------------------------------------------------------------

auto method_name(Method m) -> std::string_view {
    switch (m) {
    case Method::zero_shot: return "zero_shot";
    case Method::sft: return "sft";
    case Method::simpo: return "simpo";
    }
    return "zero_shot";
}

auto parse_method(std::string_view name) -> std::optional<Method> {
    for (auto m : {Method::zero_shot, Method::sft, Method::simpo}) {
        if (method_name(m) == name) {
            return m;
        }
    }
    return std::nullopt;
}

auto make_report(Method method, std::string dataset, double wr, double acc, std::size_t n) -> EvalReport {
    auto check = [](const char *name, double v) {
        if (!(v >= 0.0 && v <= 100.0)) {
            throw ContractError(std::string("report: ") + name + " " + std::to_string(v) + " outside [0, 100]");
        }
    };
    check("wr_logp", wr);
    check("style_acc", acc);
    if (dataset.empty() || dataset.find_first_of(",\n\r") != std::string::npos) {
        throw ContractError("report: dataset tag must be non-empty and contain no commas or newlines");
    }
    return {method, std::move(dataset), wr, acc, n};
}

auto report_row(const EvalReport &r) -> std::string {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%.1f,%.1f,%zu", std::string(method_name(r.method)).c_str(),
                  r.dataset.c_str(), r.wr_logp, r.style_acc, r.n_test);
    return buf;
}

auto report_csv(std::span<const EvalReport> reports) -> std::string {
    std::string out(kReportHeader);
    out += '\n';
    for (const auto &r : reports) {
        out += report_row(r);
        out += '\n';
    }
    return out;
}

auto parse_report_csv(std::string_view text) -> std::vector<EvalReport> {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) {
        throw ParseError("report csv: expected header \"" + std::string(kReportHeader) + "\"");
    }
    std::vector<EvalReport> out;
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
        const auto where = "report csv line " + std::to_string(line_no);
        if (cells.size() != 5) {
            throw ParseError(where + ": expected 5 fields, got " + std::to_string(cells.size()));
        }
        const auto method = parse_method(cells[0]);
        if (!method) {
            throw ParseError(where + ": unknown method \"" + cells[0] + "\"");
        }
        auto number = [&](const std::string &s) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) {
                throw ParseError(where + ": bad number \"" + s + "\"");
            }
            return v;
        };
        std::size_t n = 0;
        const auto [ptr, ec] = std::from_chars(cells[4].data(), cells[4].data() + cells[4].size(), n);
        if (ec != std::errc{} || ptr != cells[4].data() + cells[4].size()) {
            throw ParseError(where + ": bad count \"" + cells[4] + "\"");
        }
        out.push_back(make_report(*method, cells[1], number(cells[2]), number(cells[3]), n));
    }
    return out;
}

}    // namespace stylealign
