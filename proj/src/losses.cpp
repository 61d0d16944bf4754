#include "affect/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "affect/log.hpp"

namespace affect::losses {

namespace {

constexpr double kProbEps = 1e-12;

Matrix one_hot(std::span<const int> targets, std::size_t classes) {
    Matrix out(targets.size(), classes);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= classes) {
            throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[i]) +
                                        " out of range [0, " + std::to_string(classes) + ")");
        }
        out.data[i * classes + static_cast<std::size_t>(targets[i])] = 1.0;
    }
    return out;
}

void check_bce_inputs(const Matrix& probs, const Matrix& labels) {
    if (!probs.same_shape(labels)) {
        throw std::invalid_argument("au_bce: probs " + probs.shape_str() + " vs labels " +
                                    labels.shape_str());
    }
    if (probs.cols != kAuCount) {
        throw std::invalid_argument("au_bce: expected " + std::to_string(kAuCount) +
                                    " columns, got " + std::to_string(probs.cols));
    }
    for (double y : labels.data) {
        if (y != 0.0 && y != 1.0) {
            throw std::invalid_argument("au_bce: labels must be binary, found " +
                                        std::to_string(y));
        }
    }
    for (double p : probs.data) {
        if (p <= 0.0 || p >= 1.0) {
            log_warn("au_bce: probability " + std::to_string(p) +
                     " outside (0,1), clamping to [1e-12, 1-1e-12]");
            break;
        }
    }
}

/// n x B row-selection matrix; matmul with it gathers the chosen rows.
Matrix selection_matrix(std::span<const std::size_t> rows, std::size_t batch) {
    Matrix out(rows.size(), batch);
    for (std::size_t i = 0; i < rows.size(); ++i) out.data[i * batch + rows[i]] = 1.0;
    return out;
}

}  // namespace

const char* task_name(Task task) {
    switch (task) {
        case Task::expr: return "expr";
        case Task::au: return "au";
        case Task::va: return "va";
    }
    return "?";
}

ad::ValueId cross_entropy(ad::Tape& tape, ad::ValueId logits, std::span<const int> targets) {
    const Matrix& values = tape.value(logits);
    if (values.rows != targets.size()) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(values.rows) +
                                    " logit rows vs " + std::to_string(targets.size()) +
                                    " targets");
    }
    ad::ValueId mask = tape.constant(one_hot(targets, values.cols));
    ad::ValueId picked = tape.mul(mask, tape.log_softmax_rows(logits));
    return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(values.rows));
}

double cross_entropy(const Matrix& logits, std::span<const int> targets) {
    if (logits.rows != targets.size()) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(logits.rows) +
                                    " logit rows vs " + std::to_string(targets.size()) +
                                    " targets");
    }
    const Matrix lsm = log_softmax_rows(logits);
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= logits.cols) {
            throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[i]) +
                                        " out of range [0, " + std::to_string(logits.cols) + ")");
        }
        total -= lsm.data[i * logits.cols + static_cast<std::size_t>(targets[i])];
    }
    return total / static_cast<double>(targets.size());
}

ad::ValueId expr_loss(ad::Tape& tape, ad::ValueId logits, std::span<const int> targets,
                      ad::ValueId weights, const selfcure::RankSplit& split, double delta) {
    return tape.add(cross_entropy(tape, logits, targets),
                    selfcure::rr_loss(tape, weights, split, delta));
}

ad::ValueId au_bce(ad::Tape& tape, ad::ValueId probs, const Matrix& labels) {
    const Matrix& p = tape.value(probs);
    check_bce_inputs(p, labels);

    Matrix complement(labels.rows, labels.cols);
    for (std::size_t i = 0; i < labels.size(); ++i) complement.data[i] = 1.0 - labels.data[i];

    ad::ValueId o = tape.clamp(probs, kProbEps, 1.0 - kProbEps);
    ad::ValueId pos = tape.mul(tape.constant(labels), tape.log(o));
    ad::ValueId one_minus_o = tape.sub(tape.constant(Matrix(p.rows, p.cols, 1.0)), o);
    ad::ValueId neg = tape.mul(tape.constant(std::move(complement)), tape.log(one_minus_o));
    return tape.scale(tape.sum(tape.add(pos, neg)), -1.0 / static_cast<double>(p.rows));
}

double au_bce(const Matrix& probs, const Matrix& labels) {
    check_bce_inputs(probs, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double o = std::clamp(probs.data[i], kProbEps, 1.0 - kProbEps);
        const double y = labels.data[i];
        total -= y * std::log(o) + (1.0 - y) * std::log(1.0 - o);
    }
    return total / static_cast<double>(probs.rows);
}

double ccc(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw std::invalid_argument("ccc: length mismatch " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(target.size()));
    }
    const std::size_t n = pred.size();
    if (n < 2) throw std::invalid_argument("ccc: need at least 2 values");

    double mean_p = 0.0, mean_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_p += pred[i];
        mean_t += target[i];
    }
    mean_p /= static_cast<double>(n);
    mean_t /= static_cast<double>(n);

    double var_p = 0.0, var_t = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = pred[i] - mean_p;
        const double dt = target[i] - mean_t;
        var_p += dp * dp;
        var_t += dt * dt;
        cov += dp * dt;
    }
    var_p /= static_cast<double>(n);
    var_t /= static_cast<double>(n);
    cov /= static_cast<double>(n);

    const double gap = mean_p - mean_t;
    const double denom = var_p + var_t + gap * gap;
    if (denom == 0.0) return 1.0;  // two identical constant sequences
    return 2.0 * cov / denom;
}

ad::ValueId ccc(ad::Tape& tape, ad::ValueId pred_col, ad::ValueId target_col) {
    const Matrix& p = tape.value(pred_col);
    const Matrix& t = tape.value(target_col);
    if (p.cols != 1 || t.cols != 1 || p.rows != t.rows) {
        throw std::invalid_argument("ccc: expected matching column vectors, got " +
                                    p.shape_str() + " and " + t.shape_str());
    }
    if (p.rows < 2) throw std::invalid_argument("ccc: need at least 2 values");

    ad::ValueId ones = tape.constant(Matrix(p.rows, 1, 1.0));
    ad::ValueId mean_p = tape.mean(pred_col);
    ad::ValueId mean_t = tape.mean(target_col);
    ad::ValueId centered_p = tape.sub(pred_col, tape.matmul(ones, mean_p));
    ad::ValueId centered_t = tape.sub(target_col, tape.matmul(ones, mean_t));

    ad::ValueId cov = tape.mean(tape.mul(centered_p, centered_t));
    ad::ValueId var_p = tape.mean(tape.mul(centered_p, centered_p));
    ad::ValueId var_t = tape.mean(tape.mul(centered_t, centered_t));
    ad::ValueId gap = tape.sub(mean_p, mean_t);
    ad::ValueId denom = tape.add(tape.add(var_p, var_t), tape.mul(gap, gap));
    return tape.divide(tape.scale(cov, 2.0), denom);
}

namespace {

ad::ValueId column(ad::Tape& tape, ad::ValueId m, std::size_t col, std::size_t width) {
    Matrix selector(width, 1);
    selector.data[col] = 1.0;
    return tape.matmul(m, tape.constant(std::move(selector)));
}

}  // namespace

ad::ValueId va_loss(ad::Tape& tape, ad::ValueId va_pred, const Matrix& va_target,
                    bool literal_score) {
    const Matrix& p = tape.value(va_pred);
    if (p.cols != 2 || !p.same_shape(va_target)) {
        throw std::invalid_argument("va_loss: expected matching Bx2 matrices, got " +
                                    p.shape_str() + " and " + va_target.shape_str());
    }
    if (p.rows < 2) throw std::invalid_argument("va_loss: need at least 2 samples");

    ad::ValueId target = tape.constant(va_target);
    ad::ValueId ccc_v = ccc(tape, column(tape, va_pred, 0, 2), column(tape, target, 0, 2));
    ad::ValueId ccc_a = ccc(tape, column(tape, va_pred, 1, 2), column(tape, target, 1, 2));
    ad::ValueId score = tape.scale(tape.add(ccc_v, ccc_a), 0.5);
    if (literal_score) return score;
    return tape.sub(tape.constant(Matrix(1, 1, 1.0)), score);
}

double va_loss(const Matrix& va_pred, const Matrix& va_target, bool literal_score) {
    if (va_pred.cols != 2 || !va_pred.same_shape(va_target)) {
        throw std::invalid_argument("va_loss: expected matching Bx2 matrices, got " +
                                    va_pred.shape_str() + " and " + va_target.shape_str());
    }
    if (va_pred.rows < 2) throw std::invalid_argument("va_loss: need at least 2 samples");

    std::vector<double> pv(va_pred.rows), pa(va_pred.rows), tv(va_pred.rows), ta(va_pred.rows);
    for (std::size_t i = 0; i < va_pred.rows; ++i) {
        pv[i] = va_pred.data[i * 2];
        pa[i] = va_pred.data[i * 2 + 1];
        tv[i] = va_target.data[i * 2];
        ta[i] = va_target.data[i * 2 + 1];
    }
    const double score = 0.5 * (ccc(pv, tv) + ccc(pa, ta));
    return literal_score ? score : 1.0 - score;
}

RoutedLoss route_task_loss(ad::Tape& tape, Task task, const model::TapedForward& student,
                           std::span<const TaskLabels> labels,
                           std::span<const TaskLabels> pseudo, const RouteOptions& options) {
    const std::size_t batch = labels.size();
    if (!pseudo.empty() && pseudo.size() != batch) {
        throw std::invalid_argument("route_task_loss: pseudo label count " +
                                    std::to_string(pseudo.size()) + " vs batch " +
                                    std::to_string(batch));
    }

    auto has_label = [&](std::size_t i) {
        switch (task) {
            case Task::expr: return labels[i].expr.has_value();
            case Task::au: return labels[i].au.has_value();
            case Task::va: return labels[i].va.has_value();
        }
        return false;
    };

    RoutedLoss routed;
    std::vector<std::size_t> contributing;
    std::vector<bool> from_teacher;
    for (std::size_t i = 0; i < batch; ++i) {
        if (has_label(i)) {
            contributing.push_back(i);
            from_teacher.push_back(false);
            ++routed.n_supervised;
        } else if (options.include_unlabeled) {
            if (pseudo.empty()) {
                throw std::invalid_argument(
                    std::string("route_task_loss: ") + task_name(task) + " label missing at " +
                    std::to_string(i) + " and no teacher predictions; run the teacher first");
            }
            contributing.push_back(i);
            from_teacher.push_back(true);
            ++routed.n_consistency;
        }
    }

    routed.source =
        routed.n_consistency > 0 ? TargetSource::consistency : TargetSource::supervised;

    if (contributing.empty()) {
        routed.skipped = true;
        routed.skip_reason = std::string(task_name(task)) + ": no contributing samples";
        return routed;
    }

    const bool subset = contributing.size() < batch;
    auto gather = [&](ad::ValueId full) {
        if (!subset) return full;
        return tape.matmul(tape.constant(selection_matrix(contributing, batch)), full);
    };

    switch (task) {
        case Task::expr: {
            std::vector<int> targets(contributing.size());
            for (std::size_t k = 0; k < contributing.size(); ++k) {
                const std::size_t i = contributing[k];
                targets[k] = from_teacher[k] ? *pseudo[i].expr : *labels[i].expr;
            }
            routed.loss = cross_entropy(tape, gather(student.expr_logits), targets);
            break;
        }
        case Task::au: {
            Matrix target_bits(contributing.size(), kAuCount);
            for (std::size_t k = 0; k < contributing.size(); ++k) {
                const std::size_t i = contributing[k];
                const auto& bits = from_teacher[k] ? *pseudo[i].au : *labels[i].au;
                for (std::size_t j = 0; j < kAuCount; ++j) {
                    target_bits.data[k * kAuCount + j] = static_cast<double>(bits[j]);
                }
            }
            routed.loss = au_bce(tape, gather(student.au_probs), target_bits);
            break;
        }
        case Task::va: {
            // CCC does not decompose per sample, so the supervised and
            // consistency subsets get their own CCC terms, combined by
            // subset size. A merged batch would let self-agreement with the
            // teacher wash out the ground-truth signal.
            std::vector<std::size_t> sup_rows, con_rows;
            for (std::size_t k = 0; k < contributing.size(); ++k) {
                (from_teacher[k] ? con_rows : sup_rows).push_back(contributing[k]);
            }
            auto subset_loss = [&](const std::vector<std::size_t>& rows,
                                   bool teacher_targets) -> std::optional<ad::ValueId> {
                if (rows.size() < 2) return std::nullopt;
                Matrix targets(rows.size(), 2);
                for (std::size_t k = 0; k < rows.size(); ++k) {
                    const auto& pair = teacher_targets ? *pseudo[rows[k]].va : *labels[rows[k]].va;
                    targets.data[k * 2] = pair[0];
                    targets.data[k * 2 + 1] = pair[1];
                }
                ad::ValueId rows_va =
                    rows.size() < batch
                        ? tape.matmul(tape.constant(selection_matrix(rows, batch)), student.va)
                        : student.va;
                return va_loss(tape, rows_va, targets, options.literal_va);
            };

            const auto sup_term = subset_loss(sup_rows, false);
            const auto con_term = subset_loss(con_rows, true);
            const auto n_sup = sup_term ? sup_rows.size() : 0;
            const auto n_con = con_term ? con_rows.size() : 0;
            if (n_sup + n_con == 0) {
                routed.skipped = true;
                routed.skip_reason = "va: fewer than 2 contributing samples per route, "
                                     "CCC undefined";
                log_warn("route_task_loss: " + routed.skip_reason);
                return routed;
            }
            const double total = static_cast<double>(n_sup + n_con);
            std::optional<ad::ValueId> combined;
            if (sup_term) {
                combined = tape.scale(*sup_term, static_cast<double>(n_sup) / total);
            }
            if (con_term) {
                const ad::ValueId weighted =
                    tape.scale(*con_term, static_cast<double>(n_con) / total);
                combined = combined ? tape.add(*combined, weighted) : weighted;
            }
            routed.loss = combined;
            routed.n_supervised = n_sup;
            routed.n_consistency = n_con;
            routed.source = n_con > 0 ? TargetSource::consistency : TargetSource::supervised;
            break;
        }
    }
    return routed;
}

ad::ValueId total_loss(ad::Tape& tape, std::optional<ad::ValueId> expr,
                       std::optional<ad::ValueId> au, std::optional<ad::ValueId> va,
                       const LossWeights& weights) {
    if (weights.expr < 0.0 || weights.au < 0.0 || weights.va < 0.0) {
        throw std::invalid_argument("total_loss: weights must be >= 0");
    }
    std::optional<ad::ValueId> total;
    auto fold = [&](std::optional<ad::ValueId> term, double w) {
        if (!term) return;
        ad::ValueId weighted = tape.scale(*term, w);
        total = total ? tape.add(*total, weighted) : weighted;
    };
    fold(expr, weights.expr);
    fold(au, weights.au);
    fold(va, weights.va);
    if (!total) throw std::invalid_argument("total_loss: no loss components present");
    return *total;
}

double total_loss(double expr, double au, double va, const LossWeights& weights) {
    if (weights.expr < 0.0 || weights.au < 0.0 || weights.va < 0.0) {
        throw std::invalid_argument("total_loss: weights must be >= 0");
    }
    return weights.expr * expr + weights.au * au + weights.va * va;
}

}  // namespace affect::losses
