#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "affect/selfcure.hpp"
#include "doctest.h"

using namespace affect;

namespace {

Matrix column(std::initializer_list<double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data.begin());
    return m;
}

}  // namespace

TEST_CASE("importance weights are sigmoid attention scores") {
    const Matrix attn_w = Matrix::from_rows({{1.0}});
    const Matrix attn_b = Matrix(1, 1, 0.0);

    const Matrix zero_w = Matrix::from_rows({{0.0}});
    const Matrix features = Matrix::from_rows({{-1.5}, {0.0}, {2.0}});
    const Matrix at_zero = selfcure::importance_weights(features, zero_w, attn_b);
    for (double w : at_zero.data) CHECK(w == doctest::Approx(0.5));

    // monotone in the pre-sigmoid score
    const Matrix weights = selfcure::importance_weights(features, attn_w, attn_b);
    CHECK(weights.data[0] < weights.data[1]);
    CHECK(weights.data[1] < weights.data[2]);
    for (double w : weights.data) CHECK((w > 0.0 && w < 1.0));
}

TEST_CASE("apply_weighting scales rows and preserves the argmax") {
    const Matrix logits = Matrix::from_rows({{2.0, 4.0}, {-1.0, 3.0}});

    const Matrix ones = column({1.0, 1.0});
    CHECK(bit_equal(selfcure::apply_weighting(logits, ones), logits));

    const Matrix halves = column({0.5, 0.5});
    const Matrix scaled = selfcure::apply_weighting(logits, halves);
    CHECK(scaled.at(0, 0) == doctest::Approx(1.0));
    CHECK(scaled.at(0, 1) == doctest::Approx(2.0));

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> logit_dist(-3.0, 3.0);
    std::uniform_real_distribution<double> weight_dist(0.01, 0.99);
    for (int trial = 0; trial < 1000; ++trial) {
        Matrix l(4, 7);
        for (double& v : l.data) v = logit_dist(rng);
        Matrix w(4, 1);
        for (double& v : w.data) v = weight_dist(rng);
        const Matrix weighted = selfcure::apply_weighting(l, w);
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t best_raw = 0, best_weighted = 0;
            for (std::size_t j = 1; j < 7; ++j) {
                if (l.at(i, j) > l.at(i, best_raw)) best_raw = j;
                if (weighted.at(i, j) > weighted.at(i, best_weighted)) best_weighted = j;
            }
            CHECK(best_raw == best_weighted);
        }
    }
}

TEST_CASE("split_high_low ranks and averages the two groups") {
    const auto split = selfcure::split_high_low(column({0.9, 0.8, 0.2, 0.1}), 0.5);
    CHECK(split.alpha_high == doctest::Approx(0.85));
    CHECK(split.alpha_low == doctest::Approx(0.15));
    CHECK(split.high_indices == std::vector<std::size_t>{0, 1});
    CHECK(split.low_indices == std::vector<std::size_t>{2, 3});

    const auto tied = selfcure::split_high_low(Matrix(6, 1, 0.5), 0.5);
    CHECK(tied.alpha_high == doctest::Approx(0.5));
    CHECK(tied.alpha_low == doctest::Approx(0.5));

    Matrix ten(10, 1);
    for (std::size_t i = 0; i < 10; ++i) ten.data[i] = static_cast<double>(i) / 10.0;
    const auto seventy = selfcure::split_high_low(ten, 0.7);
    CHECK(seventy.high_indices.size() == 7);
    CHECK(seventy.low_indices.size() == 3);

    // the partition covers the batch exactly
    std::vector<bool> seen(10, false);
    for (std::size_t i : seventy.high_indices) seen[i] = true;
    for (std::size_t i : seventy.low_indices) seen[i] = true;
    for (bool s : seen) CHECK(s);

    CHECK_THROWS_AS(selfcure::split_high_low(Matrix(1, 1, 0.5), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(selfcure::split_high_low(ten, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(selfcure::split_high_low(ten, 1.0), std::invalid_argument);
}

TEST_CASE("rr_loss hinge values") {
    selfcure::RankSplit split;
    split.alpha_high = 0.6;
    split.alpha_low = 0.4;
    CHECK(selfcure::rr_loss(split, 0.15) == doctest::Approx(0.0));

    split.alpha_high = 0.5;
    split.alpha_low = 0.45;
    CHECK(selfcure::rr_loss(split, 0.15) == doctest::Approx(0.10));

    split.alpha_high = 0.5;
    split.alpha_low = 0.5;
    CHECK(selfcure::rr_loss(split, 0.15) == doctest::Approx(0.15));

    CHECK_THROWS_AS(selfcure::rr_loss(split, -0.1), std::invalid_argument);
}

TEST_CASE("rr_loss stays in [0, delta] and pushes the groups apart") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> weight_dist(0.001, 0.999);
    std::uniform_int_distribution<std::size_t> batch_dist(2, 33);
    const double delta = 0.15;

    for (int trial = 0; trial < 1000; ++trial) {
        Matrix weights(batch_dist(rng), 1);
        for (double& w : weights.data) w = weight_dist(rng);

        const auto split = selfcure::split_high_low(weights, 0.7);
        const double value = selfcure::rr_loss(split, delta);
        CHECK(value >= 0.0);
        CHECK(value <= delta + 1e-15);

        ad::Tape tape;
        const auto wid = tape.param(weights);
        const auto rr = selfcure::rr_loss(tape, wid, split, delta);
        CHECK(tape.scalar(rr) == doctest::Approx(value).epsilon(1e-12));

        const auto grads = tape.backward(rr);
        if (value > 0.0) {
            for (std::size_t i : split.high_indices) CHECK(grads[0].data[i] <= 0.0);
            for (std::size_t i : split.low_indices) CHECK(grads[0].data[i] >= 0.0);
            // active hinge: high-group entries get strictly negative pull
            CHECK(grads[0].data[split.high_indices[0]] < 0.0);
        } else {
            for (double g : grads[0].data) CHECK(g == 0.0);
        }
    }
}

TEST_CASE("differentiable rr_loss matches finite differences") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> weight_dist(0.05, 0.95);
    Matrix weights(8, 1);
    for (double& w : weights.data) w = weight_dist(rng);
    const auto split = selfcure::split_high_low(weights, 0.7);

    ad::LossBuilder builder = [&](ad::Tape& tape, std::span<const Matrix> p) {
        return selfcure::rr_loss(tape, tape.param(p[0]), split, 0.15);
    };
    const std::vector<Matrix> params{weights};
    const std::vector<std::string> names{"weights"};
    const auto report = ad::grad_check(builder, params, names, 1e-6);
    CHECK(report.pass);
}
