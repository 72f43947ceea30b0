#include "stylealign/errors.hpp"
#include "stylealign/evalsuite.hpp"

#include <doctest.h>

#include <algorithm>

using namespace stylealign;

namespace {

auto humor_test_set(std::size_t n) -> std::vector<PreferenceTriplet> {
    WorldConfig w;
    w.n_examples = n;
    return synthesize_dataset(w, 21);
}

auto uniform_model() -> TinyCaptioner {
    return {CaptionerConfig{}, InitOptions{}};
}

// Context-free model whose logits are a fixed bias favouring humor markers,
// so every stylized caption out-scores its factual one.
auto marker_loving_model() -> TinyCaptioner {
    TinyCaptioner model = uniform_model();
    const Lexicon lex(WorldConfig{});
    auto &params = model.params();
    auto bias = params[*params.find("head.b")].data();
    for (std::size_t k = 0; k < lex.markers_per_style(); ++k) {
        bias[lex.marker_token(Style::humor, k)] = 5.0;
    }
    return model;
}

auto random_model(std::uint64_t seed) -> TinyCaptioner {
    InitOptions init;
    init.seed = seed;
    init.stddev = 0.3;
    init.zero_output_head = false;
    return {CaptionerConfig{}, init};
}

auto swapped(PreferenceTriplet t) -> PreferenceTriplet {
    std::swap(t.stylized, t.factual);
    return t;
}

// Depth-2 head computing logit = gelu(image[0]) - 0.5.
auto image_threshold_head() -> StyleClassifier {
    StyleClassifier head(HeadConfig{}, 0);
    auto &p = head.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::fill(p[i].data().begin(), p[i].data().end(), 0.0);
    }
    p[*p.find("layer0.w")].data()[0] = 1.0;
    p[*p.find("layer1.w")].data()[0] = 1.0;
    p[*p.find("layer1.b")].data()[0] = -0.5;
    return head;
}

}    // namespace

TEST_CASE("wr_logp examples") {
    const auto test = humor_test_set(131);
    CHECK(wr_logp(uniform_model(), test, Style::humor) == 0.0);
    CHECK(wr_logp(marker_loving_model(), test, Style::humor) == 100.0);

    auto mixed = test;
    for (std::size_t i = 91; i < mixed.size(); ++i) {
        mixed[i] = swapped(mixed[i]);
    }
    const double wr = wr_logp(marker_loving_model(), mixed, Style::humor);
    CHECK(wr == doctest::Approx(100.0 * 91.0 / 131.0));
    const auto r = make_report(Method::simpo, "toy-newyorker", wr, 50.0, 131);
    CHECK(report_row(r) == "simpo,toy-newyorker,69.5,50.0,131");

    CHECK_THROWS_AS(wr_logp(uniform_model(), std::vector<PreferenceTriplet>{}, Style::humor), ContractError);
}

TEST_CASE("wr_logp properties") {
    const auto test = humor_test_set(40);
    const auto model = random_model(8);
    const double base = wr_logp(model, test, Style::humor);

    SUBCASE("antisymmetry under swapping roles") {
        const auto scores = score_pairs(model, test, Style::humor);
        REQUIRE(std::none_of(scores.begin(), scores.end(), [](const auto &s) { return s.stylized == s.factual; }));
        std::vector<PreferenceTriplet> sw;
        for (const auto &t : test) {
            sw.push_back(swapped(t));
        }
        CHECK(wr_logp(model, sw, Style::humor) == doctest::Approx(100.0 - base));
    }
    SUBCASE("order invariance") {
        auto rev = test;
        std::reverse(rev.begin(), rev.end());
        CHECK(wr_logp(model, rev, Style::humor) == base);
    }
    SUBCASE("serial and parallel paths agree bit for bit") {
        const auto a = score_pairs(model, test, Style::humor, Execution::serial);
        const auto b = score_pairs(model, test, Style::humor, Execution::parallel);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].stylized == b[i].stylized);
            CHECK(a[i].factual == b[i].factual);
        }
        CHECK(wr_logp(model, test, Style::humor) == base);
    }
}

TEST_CASE("style_acc") {
    const auto test = humor_test_set(100);
    const DecodeConfig greedy;
    SUBCASE("always-positive head") {
        StyleClassifier head(HeadConfig{}, 1);
        auto &p = head.params();
        p[p.size() - 1].data()[0] = 1e6;
        CHECK(style_acc(uniform_model(), head, test, greedy) == 100.0);
    }
    SUBCASE("counting") {
        auto images = test;
        for (std::size_t i = 0; i < images.size(); ++i) {
            images[i].image[0] = i < 97 ? 2.0 : 0.0;
        }
        CHECK(style_acc(uniform_model(), image_threshold_head(), images, greedy) == 97.0);
    }
    SUBCASE("deterministic") {
        const auto model = random_model(4);
        const StyleClassifier head(HeadConfig{}, 2);
        const auto small = std::span(test).first(20);
        DecodeConfig short_greedy;
        short_greedy.max_tokens = 12;
        CHECK(style_acc(model, head, small, short_greedy)
              == style_acc(model, head, small, short_greedy, 0, Execution::serial));
        CHECK(generate_captions(model, small, short_greedy) == generate_captions(model, small, short_greedy));
        DecodeConfig sampled;
        sampled.max_tokens = 12;
        sampled.mode = DecodeMode::sample;
        CHECK(generate_captions(model, small, sampled, 5) == generate_captions(model, small, sampled, 5, Execution::serial));
    }
    SUBCASE("empty test set") {
        CHECK_THROWS_AS(style_acc(uniform_model(), StyleClassifier(HeadConfig{}, 0), std::vector<PreferenceTriplet>{}, greedy),
                        ContractError);
    }
}

TEST_CASE("reports") {
    const auto r = make_report(Method::zero_shot, "toy-newyorker", 20.6, 57.3, 131);
    CHECK(report_row(r) == "zero_shot,toy-newyorker,20.6,57.3,131");
    CHECK_THROWS_AS(make_report(Method::sft, "x", -1.0, 50.0, 10), ContractError);
    CHECK_THROWS_AS(make_report(Method::sft, "x", 50.0, 100.5, 10), ContractError);
    const std::vector<EvalReport> rows{r, make_report(Method::simpo, "toy-flickr", 69.5, 90.1, 1000)};
    const auto csv = report_csv(rows);
    CHECK(csv.starts_with("method,dataset,wr_logp,style_acc,n_test\n"));
    CHECK(parse_report_csv(csv) == rows);
    CHECK(report_csv(parse_report_csv(csv)) == csv);
    CHECK_THROWS_AS(parse_report_csv("nope\n"), ParseError);
    CHECK_THROWS_AS(parse_report_csv(std::string(kReportHeader) + "\nbogus,x,1,2,3\n"), ParseError);
}
