#include "affect/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "affect/log.hpp"
#include "affect/selfcure.hpp"
#include "checkpoint_io.hpp"
#include "json.hpp"

namespace affect::train {

namespace {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) {
            throw std::invalid_argument(context + ": unknown key '" + it.key() + "'");
        }
    }
}

data::MissingPattern missing_from_json(const json& j, const std::string& context) {
    check_keys(j, {"fully_labeled_fraction", "presence"}, context);
    data::MissingPattern pattern;
    if (j.contains("fully_labeled_fraction")) {
        pattern.fully_labeled_fraction = j.at("fully_labeled_fraction").get<double>();
    }
    if (j.contains("presence")) {
        const auto presence = j.at("presence").get<std::vector<double>>();
        if (presence.size() != 3) {
            throw std::invalid_argument(context + ": presence must list 3 probabilities");
        }
        std::copy(presence.begin(), presence.end(), pattern.presence.begin());
    }
    return pattern;
}

data::DataGenConfig datagen_from_json(const json& j, const std::string& context) {
    check_keys(j,
               {"n_samples", "input_dim", "latent_dim", "expr_classes", "noise_std",
                "group_size", "seed", "missing"},
               context);
    data::DataGenConfig cfg;
    if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("input_dim")) cfg.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("latent_dim")) cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
    if (j.contains("expr_classes")) cfg.expr_classes = j.at("expr_classes").get<std::size_t>();
    if (j.contains("noise_std")) cfg.noise_std = j.at("noise_std").get<double>();
    if (j.contains("group_size")) cfg.group_size = j.at("group_size").get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("missing")) {
        cfg.missing = missing_from_json(j.at("missing"), context + ".missing");
    }
    cfg.validate();
    return cfg;
}

model::ModelConfig model_from_json(const json& j, const std::string& context) {
    check_keys(j, {"input_dim", "hidden_dims", "expr_classes", "au_count", "seed"}, context);
    model::ModelConfig cfg;
    if (j.contains("input_dim")) cfg.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("hidden_dims")) {
        cfg.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    }
    if (j.contains("expr_classes")) cfg.expr_classes = j.at("expr_classes").get<std::size_t>();
    if (j.contains("au_count")) cfg.au_count = j.at("au_count").get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

teacher::NoiseConfig noise_from_json(const json& j, const std::string& context) {
    check_keys(j, {"kind", "magnitude", "seed"}, context);
    teacher::NoiseConfig cfg;
    if (j.contains("kind")) {
        cfg.kind = teacher::noise_kind_from_string(j.at("kind").get<std::string>());
    }
    if (j.contains("magnitude")) cfg.magnitude = j.at("magnitude").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

Batch make_batch(const std::vector<data::Sample>& set, std::span<const std::size_t> indices) {
    Batch batch;
    batch.features = Matrix(indices.size(), set.at(indices[0]).features.size());
    batch.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const data::Sample& s = set[indices[k]];
        std::copy(s.features.begin(), s.features.end(),
                  batch.features.data.begin() + static_cast<std::ptrdiff_t>(k * batch.features.cols));
        batch.labels.push_back(s.labels);
    }
    return batch;
}

int argmax_row(const Matrix& m, std::size_t row) {
    int best = 0;
    for (std::size_t c = 1; c < m.cols; ++c) {
        if (m.at(row, c) > m.at(row, static_cast<std::size_t>(best))) best = static_cast<int>(c);
    }
    return best;
}

std::string csv_opt(const std::optional<double>& v) {
    return v ? metrics::format_double(*v) : std::string();
}

void write_metric_columns(std::ostream& out, const metrics::MetricsReport& r) {
    out << csv_opt(r.ccc_v) << ',' << csv_opt(r.ccc_a) << ',' << csv_opt(r.f1_expr) << ','
        << csv_opt(r.acc_expr) << ',' << csv_opt(r.f1_au) << ',' << csv_opt(r.acc_au) << ','
        << csv_opt(r.m_va) << ',' << csv_opt(r.m_expr) << ',' << csv_opt(r.m_au);
}

/// Supervised-only loss over the labeled portions of a dataset; used for the
/// val rows of the metrics CSV. Rank regularization is a training-batch
/// regularizer and is not included.
double supervised_loss(const model::ModelParams& params,
                       std::span<const data::Sample> samples, const TrainConfig& config) {
    const bool weighting = config.mode == Mode::mean_teacher_selfcure;

    std::vector<double> expr_logit_rows;
    std::vector<int> expr_targets;
    std::vector<double> au_prob_rows;
    std::vector<double> au_label_rows;
    std::vector<double> va_rows;
    std::vector<double> va_targets;
    std::size_t expr_cols = 0;

    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
        const std::size_t stop = std::min(samples.size(), start + chunk);
        const auto window = samples.subspan(start, stop - start);
        const Matrix features = data::features_matrix(window);
        const model::TaskPredictions preds = model::predict(params, features, weighting);
        expr_cols = preds.expr_logits.cols;

        for (std::size_t i = 0; i < window.size(); ++i) {
            const losses::TaskLabels& labels = window[i].labels;
            if (labels.expr) {
                for (std::size_t c = 0; c < preds.expr_logits.cols; ++c) {
                    expr_logit_rows.push_back(preds.expr_logits.at(i, c));
                }
                expr_targets.push_back(*labels.expr);
            }
            if (labels.au) {
                for (std::size_t c = 0; c < preds.au_probs.cols; ++c) {
                    au_prob_rows.push_back(preds.au_probs.at(i, c));
                    au_label_rows.push_back(static_cast<double>((*labels.au)[c]));
                }
            }
            if (labels.va) {
                va_rows.push_back(preds.va.at(i, 0));
                va_rows.push_back(preds.va.at(i, 1));
                va_targets.push_back((*labels.va)[0]);
                va_targets.push_back((*labels.va)[1]);
            }
        }
    }

    double expr_term = 0.0, au_term = 0.0, va_term = 0.0;
    if (!expr_targets.empty()) {
        Matrix logits(expr_targets.size(), expr_cols);
        logits.data = expr_logit_rows;
        expr_term = losses::cross_entropy(logits, expr_targets);
    }
    if (!au_label_rows.empty()) {
        Matrix probs(au_label_rows.size() / losses::kAuCount, losses::kAuCount);
        probs.data = au_prob_rows;
        Matrix bits(probs.rows, losses::kAuCount);
        bits.data = au_label_rows;
        au_term = losses::au_bce(probs, bits);
    }
    if (va_targets.size() >= 4) {
        Matrix pred(va_targets.size() / 2, 2);
        pred.data = va_rows;
        Matrix target(pred.rows, 2);
        target.data = va_targets;
        va_term = losses::va_loss(pred, target, config.literal_va_loss);
    }
    return losses::total_loss(expr_term, au_term, va_term, config.loss_weights);
}

}  // namespace

Mode mode_from_string(const std::string& name) {
    if (name == "baseline") return Mode::baseline;
    if (name == "mt") return Mode::mean_teacher;
    if (name == "mt-sc") return Mode::mean_teacher_selfcure;
    throw std::invalid_argument("unknown mode '" + name +
                                "' (expected baseline, mt, or mt-sc)");
}

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::baseline: return "baseline";
        case Mode::mean_teacher: return "mt";
        case Mode::mean_teacher_selfcure: return "mt-sc";
    }
    return "?";
}

void TrainConfig::validate() const {
    model.validate();
    noise.validate();
    if (datagen) datagen->validate();
    if (!datagen && !dataset_path) {
        throw std::invalid_argument("TrainConfig: either a data config or a dataset path is "
                                    "required");
    }
    if (datagen && dataset_path) {
        throw std::invalid_argument("TrainConfig: data config and dataset path are exclusive");
    }
    if (datagen && datagen->input_dim != model.input_dim) {
        throw std::invalid_argument("TrainConfig: data input_dim " +
                                    std::to_string(datagen->input_dim) +
                                    " must match model input_dim " +
                                    std::to_string(model.input_dim));
    }
    if (datagen && datagen->expr_classes != model.expr_classes) {
        throw std::invalid_argument("TrainConfig: data expr_classes must match the model");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(eta >= 0.0 && eta < 1.0)) throw std::invalid_argument("TrainConfig: eta must be in [0,1)");
    if (delta < 0.0) throw std::invalid_argument("TrainConfig: delta must be >= 0");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("TrainConfig: beta must be in (0,1)");
    if (loss_weights.expr < 0.0 || loss_weights.au < 0.0 || loss_weights.va < 0.0) {
        throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
    }
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
        throw std::invalid_argument("TrainConfig: split_ratio must be in (0,1)");
    }
    if (expr_label_noise < 0.0 || expr_label_noise > 1.0) {
        throw std::invalid_argument("TrainConfig: expr_label_noise must be in [0,1]");
    }
}

TrainConfig load_train_config(const std::string& path) {
    const json doc = model::detail::read_json_file(path, "load_train_config");
    check_keys(doc,
               {"model", "data", "dataset", "learning_rate", "batch_size", "epochs", "eta",
                "delta", "beta", "w_expr", "w_au", "w_va", "noise", "mode", "seed",
                "split_ratio", "expr_label_noise", "eval_teacher", "literal_va_loss",
                "au_exact_match_acc"},
               "train config");

    TrainConfig cfg;
    if (doc.contains("model")) cfg.model = model_from_json(doc.at("model"), "train config.model");
    if (doc.contains("data")) cfg.datagen = datagen_from_json(doc.at("data"), "train config.data");
    if (doc.contains("dataset")) cfg.dataset_path = doc.at("dataset").get<std::string>();
    if (doc.contains("learning_rate")) cfg.learning_rate = doc.at("learning_rate").get<double>();
    if (doc.contains("batch_size")) cfg.batch_size = doc.at("batch_size").get<std::size_t>();
    if (doc.contains("epochs")) cfg.epochs = doc.at("epochs").get<std::size_t>();
    if (doc.contains("eta")) cfg.eta = doc.at("eta").get<double>();
    if (doc.contains("delta")) cfg.delta = doc.at("delta").get<double>();
    if (doc.contains("beta")) cfg.beta = doc.at("beta").get<double>();
    if (doc.contains("w_expr")) cfg.loss_weights.expr = doc.at("w_expr").get<double>();
    if (doc.contains("w_au")) cfg.loss_weights.au = doc.at("w_au").get<double>();
    if (doc.contains("w_va")) cfg.loss_weights.va = doc.at("w_va").get<double>();
    if (doc.contains("noise")) cfg.noise = noise_from_json(doc.at("noise"), "train config.noise");
    if (doc.contains("mode")) cfg.mode = mode_from_string(doc.at("mode").get<std::string>());
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("split_ratio")) cfg.split_ratio = doc.at("split_ratio").get<double>();
    if (doc.contains("expr_label_noise")) {
        cfg.expr_label_noise = doc.at("expr_label_noise").get<double>();
    }
    if (doc.contains("eval_teacher")) cfg.eval_teacher = doc.at("eval_teacher").get<bool>();
    if (doc.contains("literal_va_loss")) {
        cfg.literal_va_loss = doc.at("literal_va_loss").get<bool>();
    }
    if (doc.contains("au_exact_match_acc")) {
        cfg.au_exact_match_acc = doc.at("au_exact_match_acc").get<bool>();
    }
    cfg.validate();
    return cfg;
}

data::DataGenConfig load_datagen_config(const std::string& path) {
    const json doc = model::detail::read_json_file(path, "load_datagen_config");
    return datagen_from_json(doc, "data config");
}

AdamState AdamState::init(const model::ModelParams& params) {
    AdamState state;
    state.first_moment.reserve(params.blocks.size());
    state.second_moment.reserve(params.blocks.size());
    for (const Matrix& block : params.blocks) {
        state.first_moment.emplace_back(block.rows, block.cols);
        state.second_moment.emplace_back(block.rows, block.cols);
    }
    return state;
}

void adam_step(model::ModelParams& params, const std::vector<Matrix>& grads, AdamState& state,
               double learning_rate) {
    if (grads.size() != params.blocks.size() ||
        state.first_moment.size() != params.blocks.size()) {
        throw std::invalid_argument("adam_step: gradient/state layout does not match params");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        if (!params.blocks[b].same_shape(grads[b])) {
            throw std::invalid_argument("adam_step: gradient shape mismatch in block " +
                                        params.block_names[b]);
        }
        Matrix& p = params.blocks[b];
        Matrix& m = state.first_moment[b];
        Matrix& v = state.second_moment[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = grads[b].data[i];
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g * g;
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            p.data[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

StepOutcome train_step(model::ModelParams& student, AdamState& adam,
                       teacher::TeacherState* teacher_state, const Batch& batch,
                       const TrainConfig& config, std::mt19937_64& noise_rng,
                       TrainStats& stats) {
    if (batch.labels.empty() || batch.features.rows != batch.labels.size()) {
        throw std::invalid_argument("train_step: empty or inconsistent batch");
    }
    const bool use_teacher = config.mode != Mode::baseline;
    const bool use_selfcure = config.mode == Mode::mean_teacher_selfcure;

    std::vector<losses::TaskLabels> pseudo;
    if (use_teacher) {
        if (!teacher_state) {
            throw std::invalid_argument("train_step: mean-teacher mode without a teacher state");
        }
        const Matrix perturbed = teacher::perturb(batch.features, config.noise, noise_rng);
        const model::TaskPredictions teacher_preds =
            model::predict(teacher_state->params, perturbed, use_selfcure);
        ++stats.teacher_forward_count;
        pseudo = teacher::make_pseudo_labels(teacher_preds);
    }

    ad::Tape tape;
    const model::TapedForward fwd =
        model::forward(tape, student, batch.features, use_selfcure);

    losses::RouteOptions route_options;
    route_options.include_unlabeled = use_teacher;
    route_options.literal_va = config.literal_va_loss;

    auto expr_routed =
        losses::route_task_loss(tape, losses::Task::expr, fwd, batch.labels, pseudo, route_options);
    auto au_routed =
        losses::route_task_loss(tape, losses::Task::au, fwd, batch.labels, pseudo, route_options);
    auto va_routed =
        losses::route_task_loss(tape, losses::Task::va, fwd, batch.labels, pseudo, route_options);
    if (va_routed.skipped) ++stats.va_terms_skipped;

    std::optional<ad::ValueId> expr_id = expr_routed.loss;
    if (use_selfcure && expr_id && batch.labels.size() >= 2) {
        const auto split = selfcure::split_high_low(tape.value(fwd.importance_weights), config.beta);
        const ad::ValueId rr =
            selfcure::rr_loss(tape, fwd.importance_weights, split, config.delta);
        expr_id = tape.add(*expr_id, rr);
    }

    StepOutcome outcome;
    auto record = [&](const losses::RoutedLoss& routed, std::optional<ad::ValueId> id,
                      double& value, losses::TargetSource& source, bool& present) {
        source = routed.source;
        stats.supervised_targets += routed.n_supervised;
        stats.consistency_targets += routed.n_consistency;
        outcome.breakdown.n_supervised += routed.n_supervised;
        outcome.breakdown.n_consistency += routed.n_consistency;
        if (id) {
            value = tape.scalar(*id);
            present = true;
        }
    };
    record(expr_routed, expr_id, outcome.breakdown.expr_loss, outcome.breakdown.expr_source,
           outcome.breakdown.expr_present);
    record(au_routed, au_routed.loss, outcome.breakdown.au_loss, outcome.breakdown.au_source,
           outcome.breakdown.au_present);
    record(va_routed, va_routed.loss, outcome.breakdown.va_loss, outcome.breakdown.va_source,
           outcome.breakdown.va_present);

    if (!expr_id && !au_routed.loss && !va_routed.loss) {
        log_warn("train_step: batch has no trainable loss terms, skipped");
        ++stats.batches_skipped;
        return outcome;
    }

    const ad::ValueId total =
        losses::total_loss(tape, expr_id, au_routed.loss, va_routed.loss, config.loss_weights);
    outcome.breakdown.total = tape.scalar(total);

    const std::vector<Matrix> grads = tape.backward(total);
    for (const Matrix& g : grads) {
        if (!all_finite(g)) {
            log_warn("train_step: non-finite gradient, batch skipped");
            ++stats.batches_skipped;
            return outcome;
        }
    }

    adam_step(student, grads, adam, config.learning_rate);
    if (use_teacher) teacher::ema_update(*teacher_state, student);
    outcome.applied = true;
    return outcome;
}

metrics::MetricsReport evaluate(const model::ModelParams& params,
                                std::span<const data::Sample> samples,
                                const EvalOptions& options) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");

    std::vector<int> expr_pred, expr_true;
    std::vector<double> au_pred_rows, au_true_rows;
    std::vector<double> pred_v, pred_a, true_v, true_a;

    for (std::size_t start = 0; start < samples.size(); start += options.chunk) {
        const std::size_t stop = std::min(samples.size(), start + options.chunk);
        const auto window = samples.subspan(start, stop - start);
        const Matrix features = data::features_matrix(window);
        const model::TaskPredictions preds =
            model::predict(params, features, options.apply_importance_weighting);

        for (std::size_t i = 0; i < window.size(); ++i) {
            const losses::TaskLabels& labels = window[i].labels;
            if (labels.expr) {
                expr_pred.push_back(argmax_row(preds.expr_logits, i));
                expr_true.push_back(*labels.expr);
            }
            if (labels.au) {
                for (std::size_t j = 0; j < losses::kAuCount; ++j) {
                    au_pred_rows.push_back(preds.au_probs.at(i, j) >= 0.5 ? 1.0 : 0.0);
                    au_true_rows.push_back(static_cast<double>((*labels.au)[j]));
                }
            }
            if (labels.va) {
                pred_v.push_back(preds.va.at(i, 0));
                pred_a.push_back(preds.va.at(i, 1));
                true_v.push_back((*labels.va)[0]);
                true_a.push_back((*labels.va)[1]);
            }
        }
    }

    std::optional<double> ccc_v, ccc_a, f1_expr, acc_expr, f1_au, acc_au;
    if (pred_v.size() >= 2) {
        ccc_v = losses::ccc(pred_v, true_v);
        ccc_a = losses::ccc(pred_a, true_a);
    }
    if (!expr_pred.empty()) {
        const auto [f1, acc] =
            metrics::expr_metrics(expr_pred, expr_true, params.config.expr_classes);
        f1_expr = f1;
        acc_expr = acc;
    }
    if (!au_pred_rows.empty()) {
        Matrix pred_bits(au_pred_rows.size() / losses::kAuCount, losses::kAuCount);
        pred_bits.data = au_pred_rows;
        Matrix true_bits(pred_bits.rows, losses::kAuCount);
        true_bits.data = au_true_rows;
        const auto [f1, acc] =
            metrics::au_metrics(pred_bits, true_bits, options.au_exact_match_acc);
        f1_au = f1;
        acc_au = acc;
    }

    return metrics::composite_scores(ccc_v, ccc_a, f1_expr, acc_expr, f1_au, acc_au,
                                     pred_v.size(), expr_pred.size(),
                                     au_pred_rows.size() / losses::kAuCount);
}

DatasetSplits prepare_dataset(const TrainConfig& config) {
    config.validate();
    std::vector<data::Sample> samples;
    std::uint64_t base_seed = config.seed;
    if (config.datagen) {
        samples = data::generate_dataset(*config.datagen);
        base_seed = config.datagen->seed;
        data::apply_missingness(samples, config.datagen->missing, mix_seed(base_seed, 1));
    } else {
        samples = data::read_jsonl(*config.dataset_path);
        if (samples.empty()) {
            throw std::invalid_argument("prepare_dataset: dataset " + *config.dataset_path +
                                        " is empty");
        }
    }

    DatasetSplits splits;
    std::tie(splits.train_set, splits.val_set) =
        data::split_train_val(samples, config.split_ratio, mix_seed(base_seed, 2));
    if (config.expr_label_noise > 0.0) {
        data::inject_expr_label_noise(splits.train_set, config.expr_label_noise,
                                      config.model.expr_classes, mix_seed(base_seed, 3));
    }
    return splits;
}

TrainResult run_training(const TrainConfig& config, const std::vector<data::Sample>& train_set,
                         const std::vector<data::Sample>& val_set, std::ostream* metrics_csv) {
    config.validate();
    if (train_set.empty() || val_set.empty()) {
        throw std::invalid_argument("run_training: train and val sets must be non-empty");
    }

    TrainResult result;
    result.student = model::init_model(config.model);
    AdamState adam = AdamState::init(result.student);
    if (config.mode != Mode::baseline) {
        result.teacher = teacher::init_teacher(result.student, config.eta);
    }

    std::mt19937_64 shuffle_rng(config.seed);
    std::mt19937_64 noise_rng(mix_seed(config.noise.seed, config.seed));

    EvalOptions eval_options;
    eval_options.apply_importance_weighting = config.mode == Mode::mean_teacher_selfcure;
    eval_options.au_exact_match_acc = config.au_exact_match_acc;

    if (metrics_csv) *metrics_csv << kEpochCsvHeader << "\n";

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        const std::size_t sup_before = result.stats.supervised_targets;
        const std::size_t con_before = result.stats.consistency_targets;
        double loss_total = 0.0;
        std::size_t loss_batches = 0;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const Batch batch =
                make_batch(train_set, std::span(order).subspan(start, stop - start));
            teacher::TeacherState* teacher_ptr =
                result.teacher ? &*result.teacher : nullptr;
            const StepOutcome outcome = train_step(result.student, adam, teacher_ptr, batch,
                                                   config, noise_rng, result.stats);
            if (outcome.applied) {
                loss_total += outcome.breakdown.total;
                ++loss_batches;
            }
        }

        if (metrics_csv) {
            const model::ModelParams& eval_params =
                (config.eval_teacher && result.teacher) ? result.teacher->params
                                                        : result.student;
            const auto train_report = evaluate(eval_params, train_set, eval_options);
            const auto val_report = evaluate(eval_params, val_set, eval_options);

            const std::size_t sup = result.stats.supervised_targets - sup_before;
            const std::size_t con = result.stats.consistency_targets - con_before;
            const double frac = (sup + con) > 0
                                    ? static_cast<double>(sup) / static_cast<double>(sup + con)
                                    : 1.0;
            const double train_loss =
                loss_batches > 0 ? loss_total / static_cast<double>(loss_batches) : 0.0;

            *metrics_csv << epoch << ",train,";
            write_metric_columns(*metrics_csv, train_report);
            *metrics_csv << ',' << metrics::format_double(train_loss) << ','
                         << metrics::format_double(frac) << "\n";

            *metrics_csv << epoch << ",val,";
            write_metric_columns(*metrics_csv, val_report);
            *metrics_csv << ',' << metrics::format_double(
                                supervised_loss(eval_params, val_set, config))
                         << ",\n";
        }
    }

    const model::ModelParams& eval_params =
        (config.eval_teacher && result.teacher) ? result.teacher->params : result.student;
    result.final_val = evaluate(eval_params, val_set, eval_options);
    return result;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      std::span<const std::uint64_t> seeds,
                                      std::ostream* csv) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation: need at least one seed");
    if (csv) *csv << kAblationCsvHeader << "\n";

    std::vector<AblationRow> rows;
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.model.seed = seed;
        if (cfg.datagen) cfg.datagen->seed = seed;
        const DatasetSplits splits = prepare_dataset(cfg);

        for (Mode mode : {Mode::baseline, Mode::mean_teacher, Mode::mean_teacher_selfcure}) {
            cfg.mode = mode;
            const TrainResult result =
                run_training(cfg, splits.train_set, splits.val_set, nullptr);
            AblationRow row{seed, mode, result.final_val};
            if (csv) {
                *csv << seed << ',' << to_string(mode) << ',';
                write_metric_columns(*csv, row.report);
                *csv << "\n";
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

ad::GradCheckReport grad_check_full_model(std::uint64_t seed, std::size_t batch_size,
                                          double tolerance, double step) {
    model::ModelConfig config;
    config.seed = seed;
    const model::ModelParams params = model::init_model(config);

    std::mt19937_64 rng(mix_seed(seed, 17));
    std::uniform_real_distribution<double> feature_dist(-2.0, 2.0);
    std::uniform_real_distribution<double> va_dist(-1.0, 1.0);
    std::uniform_int_distribution<int> class_dist(0, static_cast<int>(config.expr_classes) - 1);
    std::uniform_int_distribution<int> bit_dist(0, 1);

    Matrix features(batch_size, config.input_dim);
    for (double& v : features.data) v = feature_dist(rng);

    std::vector<losses::TaskLabels> labels(batch_size);
    for (auto& l : labels) {
        l.expr = class_dist(rng);
        std::array<std::uint8_t, losses::kAuCount> bits{};
        for (auto& b : bits) b = static_cast<std::uint8_t>(bit_dist(rng));
        l.au = bits;
        l.va = std::array<double, 2>{va_dist(rng), va_dist(rng)};
    }

    const losses::LossWeights weights;
    auto builder = [&](ad::Tape& tape, const model::ModelParams& p) {
        const model::TapedForward fwd = model::forward(tape, p, features, true);
        const losses::RouteOptions options;
        auto expr_r =
            losses::route_task_loss(tape, losses::Task::expr, fwd, labels, {}, options);
        auto au_r = losses::route_task_loss(tape, losses::Task::au, fwd, labels, {}, options);
        auto va_r = losses::route_task_loss(tape, losses::Task::va, fwd, labels, {}, options);

        const auto split = selfcure::split_high_low(tape.value(fwd.importance_weights), 0.7);
        const ad::ValueId rr = selfcure::rr_loss(tape, fwd.importance_weights, split, 0.15);
        const ad::ValueId expr_id = tape.add(*expr_r.loss, rr);
        return losses::total_loss(tape, expr_id, au_r.loss, va_r.loss, weights);
    };
    return model::grad_check(builder, params, tolerance, step);
}

}  // namespace affect::train
