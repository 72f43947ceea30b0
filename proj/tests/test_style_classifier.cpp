#include "fd_check.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/rng.hpp"
#include "stylealign/style_classifier.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace stylealign;

namespace {

auto small_splits() -> DatasetSplits {
    WorldConfig w;
    w.n_examples = 200;
    return split_dataset(synthesize_dataset(w, 4), {150, 25, 25}, 4);
}

auto two_decimals(double x) -> std::string {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

auto zero_head(std::size_t depth, double final_bias) -> StyleClassifier {
    HeadConfig hc;
    hc.depth = depth;
    StyleClassifier head(hc, 0);
    for (std::size_t i = 0; i < head.params().size(); ++i) {
        for (auto &v : head.params()[i].data()) {
            v = 0.0;
        }
    }
    head.params()[head.params().size() - 1].data()[0] = final_bias;
    return head;
}

}    // namespace

TEST_CASE("embed_pair") {
    EmbedderConfig cfg;
    const ImageFeatures image(16, 0.25);
    const Caption caption{3, 7, 21, 40, kEos};
    const auto a = embed_pair(image, caption, cfg);
    CHECK(a.size() == 16 + 16);
    CHECK(a == embed_pair(image, caption, cfg));
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(a[i] == 0.25);
    }
    const Caption shuffled{kEos, 40, 3, 21, 7};
    CHECK(embed_pair(image, shuffled, cfg) == a);
    auto other = cfg;
    other.embedding_seed = 9;
    CHECK(embed_pair(image, caption, other) != a);
    CHECK_THROWS_AS(embed_pair(image, Caption{}, cfg), ContractError);
    CHECK_THROWS_AS(embed_pair(ImageFeatures(3, 0.0), caption, cfg), ContractError);
}

TEST_CASE("classify") {
    CHECK(classify_logit(0.0).probability == 0.5);
    CHECK(classify_logit(0.0).label == 1);
    CHECK(classify_logit(std::log(3.0)).probability == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(classify_logit(std::log(3.0)).label == 1);
    CHECK(classify_logit(-std::log(3.0)).probability == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(classify_logit(-std::log(3.0)).label == 0);

    const auto head = zero_head(2, 0.0);
    const auto joint = embed_pair(ImageFeatures(16, 1.0), Caption{1, 2, kEos}, head.config().embedder);
    CHECK(classify(head, joint).probability == 0.5);
    CHECK(classify(head, joint).label == 1);
    CHECK_THROWS_AS(classify(head, std::vector<double>(5, 0.0)), ContractError);

    SUBCASE("label invariant under increasing transforms of the logit") {
        CounterRng rng(77);
        for (int i = 0; i < 500; ++i) {
            const double z = rng.normal(0.0, 4.0);
            const int label = classify_logit(z).label;
            CHECK(classify_logit(3.0 * z).label == label);
            CHECK(classify_logit(z * z * z).label == label);
            CHECK(classify_logit(std::sinh(z)).label == label);
        }
    }
}

TEST_CASE("bce") {
    CHECK(bce(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(bce(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(bce(1.0, 1) == 0.0);
    CHECK(bce(0.0, 0) == 0.0);
    Tape tape;
    const std::vector<int> labels{1, 0, 1};
    Var z = tape.constant(Tensor({3, 1}, {0.0, 0.0, 0.0}));
    CHECK(bce_with_logits(z, labels).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    Var z2 = tape.constant(Tensor({3, 1}, {0.3, -1.2, 2.0}));
    const double expect =
        (bce(sigmoid_scalar(0.3), 1) + bce(sigmoid_scalar(-1.2), 0) + bce(sigmoid_scalar(2.0), 1)) / 3.0;
    CHECK(bce_with_logits(z2, labels).value().item() == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("classifier head gradients match finite differences") {
    const auto splits = small_splits();
    const auto data = labeled_pairs(std::span(splits.train).first(6));
    for (std::size_t depth : {2u, 4u}) {
        HeadConfig hc;
        hc.depth = depth;
        hc.hidden = 8;
        StyleClassifier head(hc, 3);
        Tape tape;
        std::vector<double> rows;
        for (const auto &p : data) {
            const auto e = head.embedder().embed(p.image, p.caption);
            rows.insert(rows.end(), e.begin(), e.end());
        }
        const Tensor x({data.size(), head.embedder().width()}, rows);
        std::vector<int> y;
        for (const auto &p : data) {
            y.push_back(p.label);
        }
        Var loss = bce_with_logits(head.forward(tape, tape.constant(x)), y);
        const auto analytic = tape.backward(loss).to_vector(head.params());
        const double err = fdcheck::max_param_gradient_error(head.params(), analytic, [&] {
            Tape t;
            return bce_with_logits(head.forward(t, t.constant(x)), y).value().item();
        });
        CHECK(err < 1e-3);
    }
}

TEST_CASE("train_classifier") {
    const auto splits = small_splits();
    const auto train = labeled_pairs(splits.train);
    const auto val = labeled_pairs(splits.validation);
    ClassifierTrainConfig cfg;
    cfg.max_epochs = 5;
    const auto a = train_classifier(train, val, cfg);
    const auto b = train_classifier(train, val, cfg);
    CHECK(a.head == b.head);
    CHECK(a.val_losses == b.val_losses);
    CHECK(a.val_losses.size() == 6);
    const auto min_it = std::min_element(a.val_losses.begin(), a.val_losses.end());
    CHECK(a.best_epoch == static_cast<std::size_t>(min_it - a.val_losses.begin()));
    CHECK(classifier_loss(a.head, val) == *min_it);

    std::vector<LabeledPair> positives;
    for (const auto &p : train) {
        if (p.label == 1) {
            positives.push_back(p);
        }
    }
    CHECK_THROWS_AS(train_classifier(positives, val, cfg), ContractError);
    auto bad = cfg;
    bad.depth = 3;
    CHECK_THROWS_AS(train_classifier(train, val, bad), ConfigError);
}

TEST_CASE("depth-2 head separates the humor world") {
    WorldConfig w;
    const auto splits = split_dataset(synthesize_dataset(w, 0), {2340, 130, 131}, 0);
    ClassifierTrainConfig cfg;
    const auto r = train_classifier(labeled_pairs(splits.train), labeled_pairs(splits.validation), cfg);
    const auto m = evaluate_classifier(r.head, labeled_pairs(splits.test));
    CHECK(m.accuracy >= 90.0);
}

TEST_CASE("classifier checkpoint round trip") {
    HeadConfig hc;
    hc.depth = 4;
    hc.embedder.embedding_seed = 12;
    const StyleClassifier head(hc, 5);
    const auto path = std::filesystem::temp_directory_path() / "stylealign_test_head.json";
    head.save(path);
    CHECK(StyleClassifier::load(path) == head);
    std::filesystem::remove(path);
}

TEST_CASE("classifier_metrics") {
    SUBCASE("hand confusion matrix") {
        std::vector<int> pred, label;
        auto push = [&](int p, int y, int n) {
            for (int i = 0; i < n; ++i) {
                pred.push_back(p);
                label.push_back(y);
            }
        };
        push(1, 1, 12);
        push(1, 0, 2);
        push(0, 1, 3);
        push(0, 0, 13);
        const auto m = classifier_metrics(pred, label);
        CHECK(two_decimals(m.precision) == "85.71");
        CHECK(two_decimals(m.recall) == "80.00");
        CHECK(two_decimals(m.f1) == "82.76");
        CHECK(two_decimals(m.accuracy) == "83.33");
        CHECK(metrics_csv("toy-newyorker", m) == "dataset,precision,recall,f1,accuracy\ntoy-newyorker,85.7,80.0,82.8,83.3\n");
    }
    SUBCASE("all correct") {
        const std::vector<int> y{1, 0, 1, 1, 0};
        const auto m = classifier_metrics(y, y);
        CHECK(m.precision == 100.0);
        CHECK(m.recall == 100.0);
        CHECK(m.f1 == 100.0);
        CHECK(m.accuracy == 100.0);
    }
    SUBCASE("zero denominators") {
        const auto m = classifier_metrics(std::vector<int>{0, 0}, std::vector<int>{0, 0});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
        CHECK(m.accuracy == 100.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(classifier_metrics(std::vector<int>{1}, std::vector<int>{1, 0}), ContractError);
        CHECK_THROWS_AS(classifier_metrics(std::vector<int>{}, std::vector<int>{}), ContractError);
    }
    SUBCASE("random confusion matrices") {
        CounterRng rng(31);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng.below(60);
            std::vector<int> pred(n), label(n);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < n; ++i) {
                pred[i] = static_cast<int>(rng.below(2));
                label[i] = static_cast<int>(rng.below(2));
                correct += pred[i] == label[i];
            }
            const auto m = classifier_metrics(pred, label);
            CHECK(m.accuracy == doctest::Approx(100.0 * static_cast<double>(correct) / static_cast<double>(n)));
            if (m.precision > 0.0 && m.recall > 0.0) {
                CHECK(m.f1 == doctest::Approx(2.0 * m.precision * m.recall / (m.precision + m.recall)));
            }
        }
    }
}
