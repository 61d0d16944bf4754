#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "affect/data.hpp"
#include "affect/losses.hpp"
#include "affect/metrics.hpp"
#include "affect/model.hpp"
#include "affect/teacher.hpp"

namespace affect::train {

/// Ablation modes: supervised-only on available labels, mean teacher, and
/// mean teacher with the self-cure expression head.
enum class Mode { baseline, mean_teacher, mean_teacher_selfcure };

Mode mode_from_string(const std::string& name);
const char* to_string(Mode mode);

struct TrainConfig {
    model::ModelConfig model;
    std::optional<data::DataGenConfig> datagen;
    std::optional<std::string> dataset_path;
    double learning_rate = 0.0005;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double eta = 0.99;
    double delta = 0.15;
    double beta = 0.7;
    losses::LossWeights loss_weights;
    teacher::NoiseConfig noise;
    Mode mode = Mode::baseline;
    std::uint64_t seed = 0;
    double split_ratio = 0.8;
    double expr_label_noise = 0.0;
    bool eval_teacher = false;
    bool literal_va_loss = false;
    bool au_exact_match_acc = false;

    void validate() const;
};

/// Reads a JSON config file; unknown keys are rejected.
TrainConfig load_train_config(const std::string& path);
data::DataGenConfig load_datagen_config(const std::string& path);

struct AdamState {
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(const model::ModelParams& params);
};

/// Standard bias-corrected Adam update, in the params' block layout.
void adam_step(model::ModelParams& params, const std::vector<Matrix>& grads, AdamState& state,
               double learning_rate);

struct Batch {
    Matrix features;
    std::vector<losses::TaskLabels> labels;
};

struct TrainStats {
    std::size_t teacher_forward_count = 0;  // stays 0 in baseline mode
    std::size_t batches_skipped = 0;
    std::size_t va_terms_skipped = 0;
    std::size_t supervised_targets = 0;
    std::size_t consistency_targets = 0;
};

struct StepOutcome {
    losses::LossBreakdown breakdown;
    bool applied = false;
};

/// One optimization step: teacher forward on the perturbed batch (mean-teacher
/// modes), student forward on the clean batch, per-task loss routing, backward
/// and Adam on the student, then the teacher EMA update. Batches with a
/// non-finite gradient are skipped with a warning.
StepOutcome train_step(model::ModelParams& student, AdamState& adam,
                       teacher::TeacherState* teacher_state, const Batch& batch,
                       const TrainConfig& config, std::mt19937_64& noise_rng,
                       TrainStats& stats);

struct EvalOptions {
    bool apply_importance_weighting = true;
    bool au_exact_match_acc = false;
    std::size_t chunk = 256;
};

/// Forward passes without gradients; each task's metric uses only the samples
/// whose ground truth for that task exists.
metrics::MetricsReport evaluate(const model::ModelParams& params,
                                std::span<const data::Sample> samples,
                                const EvalOptions& options = {});

struct DatasetSplits {
    std::vector<data::Sample> train_set;
    std::vector<data::Sample> val_set;
};

/// Generates (or loads) the dataset, applies missingness, splits by group and
/// injects expression label noise into the training side.
DatasetSplits prepare_dataset(const TrainConfig& config);

struct TrainResult {
    model::ModelParams student;
    std::optional<teacher::TeacherState> teacher;
    metrics::MetricsReport final_val;
    TrainStats stats;
};

inline constexpr const char* kEpochCsvHeader =
    "epoch,split,ccc_v,ccc_a,f1_expr,acc_expr,f1_au,acc_au,m_va,m_expr,m_au,total_loss,"
    "supervised_fraction";

/// Full training run. Per-epoch train and val metric rows go to metrics_csv
/// when given.
TrainResult run_training(const TrainConfig& config, const std::vector<data::Sample>& train_set,
                         const std::vector<data::Sample>& val_set,
                         std::ostream* metrics_csv = nullptr);

struct AblationRow {
    std::uint64_t seed = 0;
    Mode mode = Mode::baseline;
    metrics::MetricsReport report;
};

inline constexpr const char* kAblationCsvHeader =
    "seed,mode,ccc_v,ccc_a,f1_expr,acc_expr,f1_au,acc_au,m_va,m_expr,m_au";

/// Trains the three modes per seed on the identical dataset and split, one
/// CSV row per (seed, mode).
std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      std::span<const std::uint64_t> seeds,
                                      std::ostream* csv = nullptr);

/// Random fully labeled batch through the three-head model under the routed
/// total loss, checked against central finite differences per block.
ad::GradCheckReport grad_check_full_model(std::uint64_t seed, std::size_t batch_size,
                                          double tolerance, double step = 1e-5);

}  // namespace affect::train
