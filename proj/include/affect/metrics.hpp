#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>

#include "affect/matrix.hpp"

namespace affect::metrics {

/// Per-task scores and their composites. A task evaluated on zero labeled
/// samples reports absent metrics and the composites involving it are omitted.
struct MetricsReport {
    std::optional<double> ccc_v;
    std::optional<double> ccc_a;
    std::optional<double> f1_expr;
    std::optional<double> acc_expr;
    std::optional<double> f1_au;
    std::optional<double> acc_au;
    std::optional<double> m_va;
    std::optional<double> m_expr;
    std::optional<double> m_au;
    std::size_t n_expr = 0;
    std::size_t n_au = 0;
    std::size_t n_va = 0;

    static std::string csv_header();
    std::string csv_row() const;
    std::string pretty() const;
};

/// (macro F1, accuracy) for single-label classification. Classes that are
/// neither predicted nor present are skipped by the macro average; a class
/// that appears on only one side scores 0.
std::pair<double, double> expr_metrics(std::span<const int> pred, std::span<const int> truth,
                                       std::size_t n_classes);

/// (macro F1 over the 12 AUs, bitwise accuracy). exact_match_acc switches the
/// accuracy to the fraction of samples with all 12 bits correct.
std::pair<double, double> au_metrics(const Matrix& pred_bits, const Matrix& true_bits,
                                     bool exact_match_acc = false);

/// Applies the composite formulas:
///   M_VA = (CCC_V + CCC_A) / 2,  M_Expr = 0.67*F1 + 0.33*Acc,
///   M_AU = (F1 + Acc) / 2.
MetricsReport composite_scores(std::optional<double> ccc_v, std::optional<double> ccc_a,
                               std::optional<double> f1_expr, std::optional<double> acc_expr,
                               std::optional<double> f1_au, std::optional<double> acc_au,
                               std::size_t n_va = 0, std::size_t n_expr = 0,
                               std::size_t n_au = 0);

/// Shortest round-trip decimal form; used everywhere a double lands in a CSV.
std::string format_double(double value);

}  // namespace affect::metrics
