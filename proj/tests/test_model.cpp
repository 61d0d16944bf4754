#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <random>

#include "affect/losses.hpp"
#include "affect/model.hpp"
#include "doctest.h"

using namespace affect;

namespace {

Matrix random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Matrix m(rows, cols);
    for (double& v : m.data) v = dist(rng);
    return m;
}

bool params_equal(const model::ModelParams& a, const model::ModelParams& b) {
    if (a.blocks.size() != b.blocks.size()) return false;
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        if (!bit_equal(a.blocks[i], b.blocks[i])) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("init_model is seed-deterministic and seed-sensitive") {
    model::ModelConfig config;
    config.seed = 1;
    CHECK(params_equal(model::init_model(config), model::init_model(config)));

    model::ModelConfig other = config;
    other.seed = 2;
    CHECK_FALSE(params_equal(model::init_model(config), model::init_model(other)));

    for (const Matrix& block : model::init_model(config).blocks) CHECK(all_finite(block));
}

TEST_CASE("invalid configs are rejected") {
    model::ModelConfig config;
    config.au_count = 11;
    CHECK_THROWS_AS(model::init_model(config), std::invalid_argument);

    config = model::ModelConfig{};
    config.hidden_dims = {64, 0};
    CHECK_THROWS_AS(model::init_model(config), std::invalid_argument);

    config = model::ModelConfig{};
    config.expr_classes = 1;
    CHECK_THROWS_AS(model::init_model(config), std::invalid_argument);
}

TEST_CASE("forward shapes and zero-weight outputs") {
    model::ModelConfig config;
    config.input_dim = 16;
    const auto params = model::init_model(config);
    const Matrix features = random_features(2, 16, 3);

    const auto preds = model::predict(params, features);
    CHECK(preds.expr_logits.rows == 2);
    CHECK(preds.expr_logits.cols == 7);
    CHECK(preds.importance_weights.rows == 2);
    CHECK(preds.importance_weights.cols == 1);
    CHECK(preds.au_probs.rows == 2);
    CHECK(preds.au_probs.cols == 12);
    CHECK(preds.va.rows == 2);
    CHECK(preds.va.cols == 2);

    for (double w : preds.importance_weights.data) CHECK((w > 0.0 && w < 1.0));
    for (double p : preds.au_probs.data) CHECK((p > 0.0 && p < 1.0));
    for (double v : preds.va.data) CHECK((v >= -1.0 && v <= 1.0));

    model::ModelParams zeros = params;
    for (Matrix& block : zeros.blocks) std::fill(block.data.begin(), block.data.end(), 0.0);
    const auto zero_preds = model::predict(zeros, features);
    for (double v : zero_preds.expr_logits.data) CHECK(v == 0.0);
    for (double p : zero_preds.au_probs.data) CHECK(p == doctest::Approx(0.5));
    for (double v : zero_preds.va.data) CHECK(v == 0.0);
    for (double w : zero_preds.importance_weights.data) CHECK(w == doctest::Approx(0.5));

    CHECK_THROWS_AS(model::predict(params, random_features(2, 15, 3)), std::invalid_argument);
}

TEST_CASE("forward is a pure function and duplicated rows predict identically") {
    model::ModelConfig config;
    const auto params = model::init_model(config);
    Matrix features = random_features(3, config.input_dim, 5);
    // make row 2 a copy of row 0
    for (std::size_t j = 0; j < features.cols; ++j) features.at(2, j) = features.at(0, j);

    const auto a = model::predict(params, features);
    const auto b = model::predict(params, features);
    CHECK(bit_equal(a.expr_logits, b.expr_logits));
    CHECK(bit_equal(a.va, b.va));

    for (std::size_t j = 0; j < a.expr_logits.cols; ++j) {
        CHECK(a.expr_logits.at(0, j) == a.expr_logits.at(2, j));
    }
    for (std::size_t j = 0; j < a.au_probs.cols; ++j) {
        CHECK(a.au_probs.at(0, j) == a.au_probs.at(2, j));
    }

    // tape forward and inference forward agree bit-exactly
    ad::Tape tape;
    const auto fwd = model::forward(tape, params, features);
    const auto taped = fwd.values(tape);
    CHECK(bit_equal(taped.expr_logits, a.expr_logits));
    CHECK(bit_equal(taped.importance_weights, a.importance_weights));
    CHECK(bit_equal(taped.au_probs, a.au_probs));
    CHECK(bit_equal(taped.va, a.va));
}

TEST_CASE("clone_params is a deep independent copy") {
    model::ModelConfig config;
    config.seed = 9;
    const auto source = model::init_model(config);
    auto clone = model::clone_params(source);
    CHECK(params_equal(clone, source));

    auto clone2 = model::clone_params(clone);
    CHECK(params_equal(clone2, source));

    clone.blocks[0].data[0] += 1.0;
    CHECK_FALSE(params_equal(clone, source));
    CHECK(params_equal(clone2, source));
}

TEST_CASE("every head's gradient reaches the shared encoder") {
    model::ModelConfig config;
    config.seed = 4;
    const auto params = model::init_model(config);
    const Matrix features = random_features(6, config.input_dim, 8);

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> va_dist(-1.0, 1.0);
    std::uniform_int_distribution<int> cls(0, 6);
    std::uniform_int_distribution<int> bit(0, 1);

    for (int task = 0; task < 3; ++task) {
        ad::Tape tape;
        const auto fwd = model::forward(tape, params, features);
        ad::ValueId loss{};
        if (task == 0) {
            std::vector<int> targets(6);
            for (int& t : targets) t = cls(rng);
            loss = losses::cross_entropy(tape, fwd.expr_logits, targets);
        } else if (task == 1) {
            Matrix bits(6, 12);
            for (double& b : bits.data) b = bit(rng);
            loss = losses::au_bce(tape, fwd.au_probs, bits);
        } else {
            Matrix target(6, 2);
            for (double& v : target.data) v = va_dist(rng);
            loss = losses::va_loss(tape, fwd.va, target);
        }
        const auto grads = tape.backward(loss);
        // block 0 is the first encoder weight matrix
        double norm = 0.0;
        for (double g : grads[0].data) norm += g * g;
        CHECK(norm > 0.0);
    }
}

TEST_CASE("checkpoint round-trips losslessly") {
    model::ModelConfig config;
    config.seed = 1234;
    config.hidden_dims = {24, 16};
    config.input_dim = 10;
    const auto params = model::init_model(config);

    const std::string path = "model_roundtrip.ckpt.json";
    model::save_checkpoint(params, path);
    const auto loaded = model::load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(params_equal(loaded, params));
    CHECK(loaded.config.input_dim == config.input_dim);
    CHECK(loaded.config.hidden_dims == config.hidden_dims);
    CHECK(loaded.block_names == params.block_names);

    CHECK_THROWS_AS(model::load_checkpoint("no_such_checkpoint.json"), std::runtime_error);
}
