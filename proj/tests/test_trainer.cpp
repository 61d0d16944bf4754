#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <sstream>

#include "affect/trainer.hpp"
#include "doctest.h"

using namespace affect;

namespace {

train::TrainConfig tiny_config(std::uint64_t seed) {
    train::TrainConfig config;
    config.datagen = data::DataGenConfig{};
    config.datagen->n_samples = 400;
    config.datagen->group_size = 10;
    config.datagen->seed = seed;
    config.model.seed = seed;
    config.seed = seed;
    config.epochs = 2;
    return config;
}

train::Batch fully_labeled_batch(std::size_t size, std::uint64_t seed) {
    data::DataGenConfig config;
    config.n_samples = size;
    config.group_size = size;
    config.seed = seed;
    const auto samples = data::generate_dataset(config);
    train::Batch batch;
    batch.features = data::features_matrix(samples);
    for (const auto& s : samples) batch.labels.push_back(s.labels);
    return batch;
}

std::string write_temp_json(const std::string& name, const std::string& text) {
    std::ofstream out(name);
    out << text;
    return name;
}

}  // namespace

TEST_CASE("adam_step: zero gradients leave params untouched") {
    model::ModelConfig mc;
    mc.input_dim = 4;
    mc.hidden_dims = {3};
    auto params = model::init_model(mc);
    const auto before = params.checksum();

    auto state = train::AdamState::init(params);
    std::vector<Matrix> zero_grads;
    for (const auto& b : params.blocks) zero_grads.emplace_back(b.rows, b.cols);

    train::adam_step(params, zero_grads, state, 0.0005);
    train::adam_step(params, zero_grads, state, 0.0005);
    CHECK(params.checksum() == before);
    CHECK(state.step == 2);
}

TEST_CASE("adam_step: first bias-corrected step moves by about -lr") {
    model::ModelConfig mc;
    mc.input_dim = 1;
    mc.hidden_dims = {};
    mc.expr_classes = 2;
    auto params = model::init_model(mc);
    const double start = params.blocks[0].data[0];

    auto state = train::AdamState::init(params);
    std::vector<Matrix> grads;
    for (const auto& b : params.blocks) grads.emplace_back(b.rows, b.cols);
    grads[0].data[0] = 1.0;

    train::adam_step(params, grads, state, 0.0005);
    // m_hat = v_hat = 1 after correction: delta = -lr / (1 + eps)
    const double delta = params.blocks[0].data[0] - start;
    CHECK(std::abs(delta - (-0.0005)) < 1e-8);
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [] {
        model::ModelConfig mc;
        mc.hidden_dims = {6};
        mc.seed = 11;
        auto params = model::init_model(mc);
        auto state = train::AdamState::init(params);
        auto batch = fully_labeled_batch(8, 13);
        train::TrainConfig config = tiny_config(1);
        config.model = mc;
        std::mt19937_64 noise_rng(0);
        train::TrainStats stats;
        for (int i = 0; i < 20; ++i) {
            train::train_step(params, state, nullptr, batch, config, noise_rng, stats);
        }
        return params.checksum();
    };
    CHECK(run() == run());
}

TEST_CASE("train_step routes sources and keeps the teacher out of baseline") {
    train::TrainConfig config = tiny_config(3);
    auto student = model::init_model(config.model);
    auto adam = train::AdamState::init(student);
    std::mt19937_64 noise_rng(5);

    auto batch = fully_labeled_batch(8, 17);

    SUBCASE("fully labeled batch is supervised on all three tasks") {
        config.mode = train::Mode::mean_teacher;
        auto teacher_state = teacher::init_teacher(student, config.eta);
        train::TrainStats stats;
        const auto outcome = train::train_step(student, adam, &teacher_state, batch, config,
                                               noise_rng, stats);
        CHECK(outcome.applied);
        CHECK(outcome.breakdown.expr_source == losses::TargetSource::supervised);
        CHECK(outcome.breakdown.au_source == losses::TargetSource::supervised);
        CHECK(outcome.breakdown.va_source == losses::TargetSource::supervised);
        CHECK(outcome.breakdown.n_consistency == 0);
        CHECK(teacher_state.step == 1);
        CHECK(stats.teacher_forward_count == 1);
        CHECK(outcome.breakdown.total ==
              doctest::Approx(config.loss_weights.expr * outcome.breakdown.expr_loss +
                              config.loss_weights.au * outcome.breakdown.au_loss +
                              config.loss_weights.va * outcome.breakdown.va_loss));
    }

    SUBCASE("batch without VA labels routes VA through the teacher") {
        config.mode = train::Mode::mean_teacher;
        auto teacher_state = teacher::init_teacher(student, config.eta);
        auto no_va = batch;
        for (auto& l : no_va.labels) l.va.reset();
        train::TrainStats stats;
        const auto outcome = train::train_step(student, adam, &teacher_state, no_va, config,
                                               noise_rng, stats);
        CHECK(outcome.breakdown.va_source == losses::TargetSource::consistency);
        CHECK(outcome.breakdown.expr_source == losses::TargetSource::supervised);
        CHECK(outcome.breakdown.n_consistency == no_va.labels.size());
    }

    SUBCASE("baseline performs zero teacher reads") {
        config.mode = train::Mode::baseline;
        train::TrainStats stats;
        const auto outcome =
            train::train_step(student, adam, nullptr, batch, config, noise_rng, stats);
        CHECK(outcome.applied);
        CHECK(stats.teacher_forward_count == 0);

        const train::DatasetSplits splits = train::prepare_dataset(config);
        const auto result = train::run_training(config, splits.train_set, splits.val_set);
        CHECK(result.stats.teacher_forward_count == 0);
        CHECK_FALSE(result.teacher.has_value());
        CHECK(result.stats.consistency_targets == 0);
    }

    SUBCASE("mean-teacher mode requires a teacher state") {
        config.mode = train::Mode::mean_teacher;
        train::TrainStats stats;
        CHECK_THROWS_AS(
            train::train_step(student, adam, nullptr, batch, config, noise_rng, stats),
            std::invalid_argument);
    }
}

TEST_CASE("loss falls fast when overfitting a fixed batch") {
    train::TrainConfig config = tiny_config(7);
    config.mode = train::Mode::baseline;
    auto student = model::init_model(config.model);
    auto adam = train::AdamState::init(student);
    auto batch = fully_labeled_batch(32, 23);
    std::mt19937_64 noise_rng(0);
    train::TrainStats stats;

    double initial = 0.0;
    double last = 0.0;
    for (int step = 0; step < 100; ++step) {
        const auto outcome =
            train::train_step(student, adam, nullptr, batch, config, noise_rng, stats);
        if (step == 0) initial = outcome.breakdown.total;
        last = outcome.breakdown.total;
    }
    CHECK(last < 0.8 * initial);
}

TEST_CASE("mean teacher on fully labeled data reproduces the baseline exactly") {
    train::TrainConfig config = tiny_config(9);
    config.datagen->missing.fully_labeled_fraction = 1.0;
    config.noise.magnitude = 0.0;
    config.epochs = 3;

    const train::DatasetSplits splits = train::prepare_dataset(config);

    config.mode = train::Mode::baseline;
    const auto baseline = train::run_training(config, splits.train_set, splits.val_set);

    config.mode = train::Mode::mean_teacher;
    const auto mt = train::run_training(config, splits.train_set, splits.val_set);

    CHECK(mt.stats.consistency_targets == 0);
    CHECK(baseline.student.checksum() == mt.student.checksum());
    CHECK(*baseline.final_val.m_expr == doctest::Approx(*mt.final_val.m_expr));
    CHECK(*baseline.final_val.m_va == doctest::Approx(*mt.final_val.m_va));
    CHECK(*baseline.final_val.m_au == doctest::Approx(*mt.final_val.m_au));
}

TEST_CASE("evaluate is deterministic, clone-invariant, and near chance at init") {
    train::TrainConfig config = tiny_config(13);
    const train::DatasetSplits splits = train::prepare_dataset(config);
    const auto params = model::init_model(config.model);

    const auto a = train::evaluate(params, splits.val_set);
    const auto b = train::evaluate(params, splits.val_set);
    CHECK(a.csv_row() == b.csv_row());

    const auto clone = model::clone_params(params);
    CHECK(train::evaluate(clone, splits.val_set).csv_row() == a.csv_row());

    // chance-level oracle: an input-only predictor's accuracy is the dot
    // product of its prediction marginal with the label marginal
    std::vector<int> preds, truth;
    for (std::size_t start = 0; start < splits.val_set.size(); start += 128) {
        const std::size_t stop = std::min(splits.val_set.size(), start + 128);
        std::span<const data::Sample> window(splits.val_set.data() + start, stop - start);
        const auto p = model::predict(params, data::features_matrix(window));
        for (std::size_t i = 0; i < window.size(); ++i) {
            if (!window[i].labels.expr) continue;
            int best = 0;
            for (std::size_t c = 1; c < p.expr_logits.cols; ++c) {
                if (p.expr_logits.at(i, c) > p.expr_logits.at(i, static_cast<std::size_t>(best))) {
                    best = static_cast<int>(c);
                }
            }
            preds.push_back(best);
            truth.push_back(*window[i].labels.expr);
        }
    }
    std::vector<double> pred_marginal(7, 0.0), true_marginal(7, 0.0);
    for (int p : preds) pred_marginal[static_cast<std::size_t>(p)] += 1.0 / preds.size();
    for (int t : truth) true_marginal[static_cast<std::size_t>(t)] += 1.0 / truth.size();
    double chance_acc = 0.0;
    for (std::size_t c = 0; c < 7; ++c) chance_acc += pred_marginal[c] * true_marginal[c];

    REQUIRE(a.acc_expr.has_value());
    CHECK(std::abs(*a.acc_expr - chance_acc) < 0.08);
    REQUIRE(a.ccc_v.has_value());
    CHECK(std::abs(*a.ccc_v) < 0.25);  // untrained regressor barely concords

    CHECK_THROWS_AS(train::evaluate(params, {}), std::invalid_argument);
}

TEST_CASE("per-epoch metrics CSV is byte-identical across reruns") {
    train::TrainConfig config = tiny_config(21);
    const train::DatasetSplits splits = train::prepare_dataset(config);
    config.mode = train::Mode::mean_teacher_selfcure;

    std::ostringstream csv_a, csv_b;
    train::run_training(config, splits.train_set, splits.val_set, &csv_a);
    train::run_training(config, splits.train_set, splits.val_set, &csv_b);
    CHECK(csv_a.str() == csv_b.str());
    CHECK(csv_a.str().rfind(train::kEpochCsvHeader, 0) == 0);

    // 2 epochs x (train + val) rows + header
    std::size_t lines = 0;
    for (char ch : csv_a.str()) lines += ch == '\n';
    CHECK(lines == 1 + 2 * config.epochs);
}

TEST_CASE("ablation emits one row per seed and mode") {
    train::TrainConfig config = tiny_config(2);
    std::ostringstream csv;
    const std::vector<std::uint64_t> seeds{5};
    const auto rows = train::run_ablation(config, seeds, &csv);

    REQUIRE(rows.size() == 3);
    CHECK(rows[0].mode == train::Mode::baseline);
    CHECK(rows[1].mode == train::Mode::mean_teacher);
    CHECK(rows[2].mode == train::Mode::mean_teacher_selfcure);
    for (const auto& row : rows) {
        CHECK(row.seed == 5);
        CHECK(row.report.m_expr.has_value());
        CHECK(row.report.m_va.has_value());
        CHECK(row.report.m_au.has_value());
    }
    CHECK(csv.str().rfind(train::kAblationCsvHeader, 0) == 0);
}

TEST_CASE("config files reject unknown keys and inconsistent setups") {
    const std::string good = write_temp_json("cfg_good.json", R"({
        "model": {"input_dim": 16, "seed": 1},
        "data": {"n_samples": 400, "group_size": 10},
        "epochs": 2,
        "mode": "mt"
    })");
    const auto config = train::load_train_config(good);
    CHECK(config.mode == train::Mode::mean_teacher);
    CHECK(config.epochs == 2);
    CHECK(config.learning_rate == doctest::Approx(0.0005));
    CHECK(config.eta == doctest::Approx(0.99));
    CHECK(config.delta == doctest::Approx(0.15));
    CHECK(config.beta == doctest::Approx(0.7));
    CHECK(config.loss_weights.expr == doctest::Approx(1.0));
    CHECK(config.loss_weights.au == doctest::Approx(0.3));
    std::remove(good.c_str());

    const std::string unknown = write_temp_json("cfg_unknown.json", R"({
        "data": {"n_samples": 400},
        "learning_rte": 0.1
    })");
    CHECK_THROWS_WITH_AS(train::load_train_config(unknown), doctest::Contains("learning_rte"),
                         std::invalid_argument);
    std::remove(unknown.c_str());

    const std::string nested_unknown = write_temp_json("cfg_nested.json", R"({
        "data": {"n_samples": 400, "shape": "wide"}
    })");
    CHECK_THROWS_WITH_AS(train::load_train_config(nested_unknown), doctest::Contains("shape"),
                         std::invalid_argument);
    std::remove(nested_unknown.c_str());

    const std::string no_data = write_temp_json("cfg_nodata.json", R"({"epochs": 2})");
    CHECK_THROWS_AS(train::load_train_config(no_data), std::invalid_argument);
    std::remove(no_data.c_str());

    const std::string both = write_temp_json("cfg_both.json", R"({
        "data": {"n_samples": 400},
        "dataset": "x.jsonl"
    })");
    CHECK_THROWS_AS(train::load_train_config(both), std::invalid_argument);
    std::remove(both.c_str());

    CHECK_THROWS_AS(train::mode_from_string("teacher-only"), std::invalid_argument);

    train::TrainConfig bad = tiny_config(1);
    bad.batch_size = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config(1);
    bad.eta = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config(1);
    bad.model.input_dim = 12;  // datagen still emits 16-wide features
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
