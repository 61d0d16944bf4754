#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>

#include "affect/metrics.hpp"
#include "doctest.h"

using namespace affect;

TEST_CASE("expression metrics on hand-counted cases") {
    SUBCASE("perfect predictions over all classes") {
        std::vector<int> truth{0, 1, 2, 3, 4, 5, 6};
        const auto [f1, acc] = metrics::expr_metrics(truth, truth, 7);
        CHECK(f1 == doctest::Approx(1.0));
        CHECK(acc == doctest::Approx(1.0));
    }
    SUBCASE("binary toy case") {
        const std::vector<int> truth{0, 0, 1, 1};
        const std::vector<int> pred{0, 1, 1, 1};
        const auto [f1, acc] = metrics::expr_metrics(pred, truth, 2);
        CHECK(acc == doctest::Approx(0.75));
        // class 0: tp=1 fp=0 fn=1 -> 2/3; class 1: tp=2 fp=1 fn=0 -> 0.8
        CHECK(f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
    }
    SUBCASE("degenerate one-class predictor at uniform truth") {
        std::vector<int> truth, pred;
        for (int c = 0; c < 7; ++c) {
            for (int k = 0; k < 10; ++k) {
                truth.push_back(c);
                pred.push_back(3);
            }
        }
        const auto [f1, acc] = metrics::expr_metrics(pred, truth, 7);
        CHECK(acc == doctest::Approx(1.0 / 7.0));
        CHECK(f1 < 0.1);
    }
    SUBCASE("classes that never occur are skipped by the macro average") {
        const std::vector<int> truth{0, 0, 1};
        const std::vector<int> pred{0, 0, 1};
        const auto [f1, acc] = metrics::expr_metrics(pred, truth, 7);
        CHECK(f1 == doctest::Approx(1.0));  // classes 2..6 do not drag the mean down
        CHECK(acc == doctest::Approx(1.0));
    }
    SUBCASE("empty input is rejected") {
        CHECK_THROWS_AS(metrics::expr_metrics({}, {}, 7), std::invalid_argument);
    }
}

TEST_CASE("AU metrics: bitwise accuracy and macro F1 over units") {
    SUBCASE("perfect bits") {
        Matrix bits(4, 12, 0.0);
        bits.at(1, 3) = 1.0;
        bits.at(2, 7) = 1.0;
        const auto [f1, acc] = metrics::au_metrics(bits, bits);
        CHECK(f1 == doctest::Approx(1.0));
        CHECK(acc == doctest::Approx(1.0));
    }
    SUBCASE("all-zero predictions against 25% positive truth") {
        Matrix pred(4, 12, 0.0);
        Matrix truth(4, 12, 0.0);
        for (std::size_t j = 0; j < 12; ++j) truth.at(j % 4, j) = 1.0;  // 12 of 48 bits set
        const auto [f1, acc] = metrics::au_metrics(pred, truth);
        CHECK(acc == doctest::Approx(0.75));
        CHECK(f1 == doctest::Approx(0.0));
    }
    SUBCASE("random case against a per-unit confusion-count oracle") {
        std::mt19937_64 rng(71);
        std::uniform_int_distribution<int> bit(0, 1);
        Matrix pred(20, 12), truth(20, 12);
        for (double& v : pred.data) v = bit(rng);
        for (double& v : truth.data) v = bit(rng);

        double f1_sum = 0.0;
        std::size_t units = 0;
        std::size_t correct = 0;
        for (std::size_t j = 0; j < 12; ++j) {
            double tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < 20; ++i) {
                const bool p = pred.at(i, j) != 0.0;
                const bool t = truth.at(i, j) != 0.0;
                tp += p && t;
                fp += p && !t;
                fn += !p && t;
                correct += p == t;
            }
            if (tp + fp + fn > 0) {
                f1_sum += 2 * tp / (2 * tp + fp + fn);
                ++units;
            }
        }
        const auto [f1, acc] = metrics::au_metrics(pred, truth);
        CHECK(f1 == doctest::Approx(f1_sum / static_cast<double>(units)).epsilon(1e-12));
        CHECK(acc == doctest::Approx(correct / 240.0).epsilon(1e-12));
    }
    SUBCASE("exact-match accuracy flag") {
        Matrix pred(2, 12, 0.0);
        Matrix truth(2, 12, 0.0);
        truth.at(0, 0) = 1.0;  // row 0 differs in one bit, row 1 matches
        const auto [f1_bit, acc_bit] = metrics::au_metrics(pred, truth, false);
        const auto [f1_exact, acc_exact] = metrics::au_metrics(pred, truth, true);
        CHECK(acc_bit == doctest::Approx(23.0 / 24.0));
        CHECK(acc_exact == doctest::Approx(0.5));
        CHECK(f1_bit == doctest::Approx(f1_exact));
    }
}

TEST_CASE("composite scores reproduce the published metric arithmetic") {
    const auto baseline_expr =
        metrics::composite_scores(std::nullopt, std::nullopt, 0.26, 0.46, std::nullopt,
                                  std::nullopt);
    REQUIRE(baseline_expr.m_expr.has_value());
    CHECK(std::abs(*baseline_expr.m_expr - 0.326) < 1e-3);

    const auto baseline_va = metrics::composite_scores(0.200, 0.190, std::nullopt, std::nullopt,
                                                       std::nullopt, std::nullopt);
    REQUIRE(baseline_va.m_va.has_value());
    CHECK(std::abs(*baseline_va.m_va - 0.195) < 1e-3);

    const auto baseline_au = metrics::composite_scores(std::nullopt, std::nullopt, std::nullopt,
                                                       std::nullopt, 0.367, 0.193);
    REQUIRE(baseline_au.m_au.has_value());
    CHECK(std::abs(*baseline_au.m_au - 0.280) < 1e-3);

    // composites of absent components stay absent
    CHECK_FALSE(baseline_expr.m_va.has_value());
    CHECK_FALSE(baseline_expr.m_au.has_value());
}

TEST_CASE("metrics are permutation invariant") {
    std::mt19937_64 rng(73);
    std::uniform_int_distribution<int> cls(0, 6);
    std::vector<int> pred(50), truth(50);
    for (std::size_t i = 0; i < 50; ++i) {
        pred[i] = cls(rng);
        truth[i] = cls(rng);
    }
    const auto [f1_a, acc_a] = metrics::expr_metrics(pred, truth, 7);

    std::vector<std::size_t> order(50);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> pred_p(50), truth_p(50);
    for (std::size_t i = 0; i < 50; ++i) {
        pred_p[i] = pred[order[i]];
        truth_p[i] = truth[order[i]];
    }
    const auto [f1_b, acc_b] = metrics::expr_metrics(pred_p, truth_p, 7);
    CHECK(f1_a == doctest::Approx(f1_b).epsilon(1e-12));
    CHECK(acc_a == doctest::Approx(acc_b).epsilon(1e-12));
}

TEST_CASE("csv row carries all fields and keeps absent ones empty") {
    const auto report = metrics::composite_scores(0.5, 0.25, std::nullopt, std::nullopt, 0.4,
                                                  0.6, 10, 0, 12);
    const std::string row = report.csv_row();
    CHECK(row == "0.5,0.25,,,0.4,0.6,0.375,,0.5,10,0,12");
    CHECK(metrics::MetricsReport::csv_header() ==
          "ccc_v,ccc_a,f1_expr,acc_expr,f1_au,acc_au,m_va,m_expr,m_au,n_va,n_expr,n_au");
}
