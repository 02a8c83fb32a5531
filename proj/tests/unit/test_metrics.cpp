#include <doctest.h>

#include <fstream>
#include <random>

#include "../support.hpp"
#include "restrav/error.hpp"
#include "restrav/metrics.hpp"

using namespace restrav;
using namespace testing_support;

namespace {
// Random 50-sample problem with plenty of ties and both classes present.
void random_problem(std::mt19937_64& rng, std::vector<double>& s, std::vector<int>& y) {
    std::uniform_int_distribution<int> score(0, 15), label(0, 1);
    s.resize(50);
    y.resize(50);
    for (std::size_t i = 0; i < 50; ++i) {
        y[i] = label(rng);
        s[i] = score(rng) / 15.0 + 0.1 * y[i] * score(rng) / 15.0;
    }
    y[0] = 0;
    y[1] = 1;
}
}  // namespace

TEST_CASE("confusion counts") {
    const std::vector<double> s{0.9, 0.8, 0.3, 0.2, 0.5};
    const std::vector<int> y{1, 0, 1, 0, 1};
    const auto cm = confusion(y, s, 0.5);
    CHECK(cm.tp == 2);  // 0.5 >= tau counts as generated
    CHECK(cm.fp == 1);
    CHECK(cm.tn == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.total() == 5);
    CHECK_THROWS_AS(confusion(y, std::vector<double>{0.1}, 0.5), Error);
}

TEST_CASE("AUROC examples") {
    CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{0, 0, 1, 1}) == 0.0);
    CHECK(auroc(std::vector<double>(6, 0.4), std::vector<int>{0, 1, 0, 1, 0, 1}) == 0.5);
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8, 0.4, 0.7};
    const std::vector<int> y{0, 0, 1, 1, 1, 0};
    // pairs (pos, neg): 0.35 beats 0.1; 0.8 beats all; 0.4 beats 0.1, ties 0.4 -> (1 + 3 + 1.5) / 9
    CHECK(auroc(s, y) == doctest::Approx(5.5 / 9.0).epsilon(1e-15));
    CHECK_THROWS_AS(auroc(s, std::vector<int>(6, 1)), Error);
}

TEST_CASE("AUROC equals the pairwise estimator exactly") {
    std::mt19937_64 rng(31);
    std::vector<double> s;
    std::vector<int> y;
    for (int rep = 0; rep < 100; ++rep) {
        random_problem(rng, s, y);
        CHECK(auroc(s, y) == pairwise_auroc(s, y));
    }
}

TEST_CASE("AUROC invariances") {
    std::mt19937_64 rng(32);
    std::vector<double> s;
    std::vector<int> y;
    for (int rep = 0; rep < 20; ++rep) {
        random_problem(rng, s, y);
        const double a = auroc(s, y);
        std::vector<double> mono, neg;
        std::vector<int> swapped;
        for (double v : s) {
            mono.push_back(std::exp(3.0 * v) - 7.0);
            neg.push_back(-v);
        }
        for (int l : y) swapped.push_back(1 - l);
        CHECK(auroc(mono, y) == a);
        CHECK(auroc(neg, swapped) == a);
    }
}

TEST_CASE("average precision examples") {
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.2}, std::vector<int>{1, 1, 0}) == 1.0);
    std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5};
    CHECK(average_precision(s, std::vector<int>{0, 0, 0, 0, 1}) == doctest::Approx(1.0 / 5.0).epsilon(1e-15));
    // A tie block counts once, at its cumulative precision.
    CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
    CHECK_THROWS_AS(average_precision(s, std::vector<int>(5, 0)), Error);
}

TEST_CASE("average precision matches a sorted sweep") {
    std::mt19937_64 rng(33);
    std::vector<double> s;
    std::vector<int> y;
    for (int rep = 0; rep < 100; ++rep) {
        random_problem(rng, s, y);
        CHECK(std::abs(average_precision(s, y) - sweep_ap(s, y)) <= 1e-12);
    }
}

TEST_CASE("mAP averages per-generator AP against all natural videos") {
    // gen_a ranks first (AP 1); gen_b sits behind one natural video (AP 1/2).
    const std::vector<double> s{0.9, 0.8, 0.7, 0.1, 0.05};
    const std::vector<int> y{1, 0, 1, 0, 0};
    const std::vector<std::string> g{"gen_a", "natural", "gen_b", "natural", "natural"};
    const auto r = map_over_generators(s, y, g);
    CHECK(r.per_generator.at("gen_a") == 1.0);
    CHECK(r.per_generator.at("gen_b") == doctest::Approx(0.5));
    CHECK(r.map == doctest::Approx(0.75));
    const std::vector<std::string> required{"gen_c"};
    try {
        map_over_generators(s, y, g, required);
        FAIL("expected MissingGenerator");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingGenerator);
    }
}

TEST_CASE("latency report sums the two stages") {
    const std::vector<LatencySample> one{{43.6, 4.5}};
    CHECK(latency_report(one) == doctest::Approx(48.1).epsilon(1e-15));
    const std::vector<LatencySample> two{{10, 2}, {20, 4}};
    CHECK(latency_report(two) == 18.0);
}

TEST_CASE("threshold metrics") {
    const std::vector<double> s{0.9, 0.6, 0.4, 0.2, 0.7, 0.1};
    const std::vector<int> y{1, 1, 1, 0, 0, 0};
    const auto m = compute_metrics(s, y, 0.5);
    CHECK(m.count == 6);
    CHECK(m.acc == doctest::Approx(4.0 / 6.0));
    CHECK(m.recall_gen == doctest::Approx(2.0 / 3.0));
    CHECK(m.specificity == doctest::Approx(2.0 / 3.0));
    CHECK(m.balanced_acc == doctest::Approx((m.recall_gen + m.specificity) / 2.0).epsilon(1e-15));
    CHECK(m.precision_gen == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1_gen == doctest::Approx(2.0 / 3.0));
    CHECK(m.auroc == pairwise_auroc(s, y));

    // Single class: AUROC undefined, serialised as null.
    const auto only_natural = compute_metrics(std::vector<double>{0.2, 0.3}, std::vector<int>{0, 0}, 0.5);
    CHECK(std::isnan(only_natural.auroc));
    CHECK(only_natural.to_json()["auroc"].is_null());
    CHECK(only_natural.to_json()["acc"] == 1.0);
}

TEST_CASE("ROC and PR curves") {
    const std::vector<double> s{0.9, 0.5, 0.5, 0.1};
    const std::vector<int> y{1, 0, 1, 0};
    const auto roc = roc_curve(s, y);
    REQUIRE(roc.size() == 4);
    CHECK(std::isinf(roc[0].threshold));
    CHECK(roc[1].y == 0.5);
    CHECK(roc[2].x == 0.5);
    CHECK(roc[2].y == 1.0);
    CHECK(roc.back().x == 1.0);
    const auto pr = pr_curve(s, y);
    REQUIRE(pr.size() == 3);
    CHECK(pr[1].y == doctest::Approx(2.0 / 3.0));

    const auto dir = temp_dir("curves");
    write_roc_csv(dir / "roc.csv", roc);
    std::ifstream in(dir / "roc.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "threshold,tpr,fpr");
}
