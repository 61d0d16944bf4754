#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affect/autodiff.hpp"
#include "affect/matrix.hpp"
#include "affect/model.hpp"
#include "affect/selfcure.hpp"

namespace affect::losses {

inline constexpr std::size_t kAuCount = 12;

/// Per-sample ground truth; every task is optional but at least one must be
/// present on a training sample.
struct TaskLabels {
    std::optional<int> expr;
    std::optional<std::array<std::uint8_t, kAuCount>> au;
    std::optional<std::array<double, 2>> va;

    bool any() const { return expr.has_value() || au.has_value() || va.has_value(); }
};

enum class Task { expr, au, va };
enum class TargetSource { supervised, consistency };

const char* task_name(Task task);

/// Mean over the batch of -log softmax(logits)[target].
ad::ValueId cross_entropy(ad::Tape& tape, ad::ValueId logits, std::span<const int> targets);
double cross_entropy(const Matrix& logits, std::span<const int> targets);

/// Cross entropy plus the rank-regularization hinge over the batch weights.
ad::ValueId expr_loss(ad::Tape& tape, ad::ValueId logits, std::span<const int> targets,
                      ad::ValueId weights, const selfcure::RankSplit& split, double delta);

/// Mean over the batch of the summed binary cross entropy across the 12 AUs.
/// Probabilities at exactly 0/1 are clamped to [1e-12, 1-1e-12] with a logged
/// warning.
ad::ValueId au_bce(ad::Tape& tape, ad::ValueId probs, const Matrix& labels);
double au_bce(const Matrix& probs, const Matrix& labels);

/// Concordance correlation coefficient with population (1/N) statistics:
/// 2*cov / (var_p + var_t + (mean_p - mean_t)^2). Two equal constant
/// sequences give 1; zero covariance with a mean gap gives 0.
double ccc(std::span<const double> pred, std::span<const double> target);
ad::ValueId ccc(ad::Tape& tape, ad::ValueId pred_col, ad::ValueId target_col);

/// 1 - (CCC_V + CCC_A)/2 over the batch, one CCC per channel. literal_score
/// returns the raw (CCC_V + CCC_A)/2 instead, for inspection.
ad::ValueId va_loss(ad::Tape& tape, ad::ValueId va_pred, const Matrix& va_target,
                    bool literal_score = false);
double va_loss(const Matrix& va_pred, const Matrix& va_target, bool literal_score = false);

struct RouteOptions {
    /// When set, samples lacking the task's label contribute a consistency
    /// loss against the teacher's hard labels; otherwise they are excluded.
    bool include_unlabeled = false;
    bool literal_va = false;
};

struct RoutedLoss {
    std::optional<ad::ValueId> loss;
    TargetSource source = TargetSource::supervised;
    std::size_t n_supervised = 0;
    std::size_t n_consistency = 0;
    bool skipped = false;
    std::string skip_reason;
};

/// Eq-style routing for one task over a batch: ground truth target where the
/// label exists, teacher hard label where it is missing. pseudo may be empty
/// only if no contributing sample needs it.
RoutedLoss route_task_loss(ad::Tape& tape, Task task, const model::TapedForward& student,
                           std::span<const TaskLabels> labels,
                           std::span<const TaskLabels> pseudo, const RouteOptions& options);

struct LossWeights {
    double expr = 1.0;
    double au = 0.3;
    double va = 0.3;
};

struct LossBreakdown {
    double expr_loss = 0.0;
    double au_loss = 0.0;
    double va_loss = 0.0;
    double total = 0.0;
    TargetSource expr_source = TargetSource::supervised;
    TargetSource au_source = TargetSource::supervised;
    TargetSource va_source = TargetSource::supervised;
    bool expr_present = false;
    bool au_present = false;
    bool va_present = false;
    std::size_t n_supervised = 0;
    std::size_t n_consistency = 0;
};

/// w_expr * L_expr + w_au * L_au + w_va * L_va over the present components.
ad::ValueId total_loss(ad::Tape& tape, std::optional<ad::ValueId> expr,
                       std::optional<ad::ValueId> au, std::optional<ad::ValueId> va,
                       const LossWeights& weights);
double total_loss(double expr, double au, double va, const LossWeights& weights);

}  // namespace affect::losses
