#include "affect/metrics.hpp"

#include <array>
#include <charconv>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace affect::metrics {

namespace {

double f1_from_counts(double tp, double fp, double fn) {
    return 2.0 * tp / (2.0 * tp + fp + fn);
}

std::string opt_str(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf.data(), ptr);
}

std::pair<double, double> expr_metrics(std::span<const int> pred, std::span<const int> truth,
                                       std::size_t n_classes) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw std::invalid_argument("expr_metrics: need equal-length non-empty inputs");
    }

    std::size_t correct = 0;
    std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        const int t = truth[i];
        if (p < 0 || static_cast<std::size_t>(p) >= n_classes || t < 0 ||
            static_cast<std::size_t>(t) >= n_classes) {
            throw std::invalid_argument("expr_metrics: class index out of range");
        }
        if (p == t) {
            ++correct;
            tp[static_cast<std::size_t>(p)] += 1.0;
        } else {
            fp[static_cast<std::size_t>(p)] += 1.0;
            fn[static_cast<std::size_t>(t)] += 1.0;
        }
    }

    double f1_total = 0.0;
    std::size_t f1_classes = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (tp[c] + fp[c] + fn[c] == 0.0) continue;  // never predicted, never present
        f1_total += f1_from_counts(tp[c], fp[c], fn[c]);
        ++f1_classes;
    }
    const double f1 = f1_classes > 0 ? f1_total / static_cast<double>(f1_classes) : 0.0;
    const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
    return {f1, acc};
}

std::pair<double, double> au_metrics(const Matrix& pred_bits, const Matrix& true_bits,
                                     bool exact_match_acc) {
    if (!pred_bits.same_shape(true_bits) || pred_bits.rows == 0) {
        throw std::invalid_argument("au_metrics: need equal-shaped non-empty bit matrices");
    }

    const std::size_t units = pred_bits.cols;
    double f1_total = 0.0;
    std::size_t f1_units = 0;
    std::size_t bit_correct = 0;
    std::size_t rows_exact = 0;
    for (std::size_t j = 0; j < units; ++j) {
        double tp = 0.0, fp = 0.0, fn = 0.0;
        for (std::size_t i = 0; i < pred_bits.rows; ++i) {
            const bool p = pred_bits.at(i, j) != 0.0;
            const bool t = true_bits.at(i, j) != 0.0;
            if (p && t) tp += 1.0;
            if (p && !t) fp += 1.0;
            if (!p && t) fn += 1.0;
            if (p == t) ++bit_correct;
        }
        if (tp + fp + fn == 0.0) continue;
        f1_total += f1_from_counts(tp, fp, fn);
        ++f1_units;
    }
    for (std::size_t i = 0; i < pred_bits.rows; ++i) {
        bool exact = true;
        for (std::size_t j = 0; j < units; ++j) {
            if ((pred_bits.at(i, j) != 0.0) != (true_bits.at(i, j) != 0.0)) {
                exact = false;
                break;
            }
        }
        if (exact) ++rows_exact;
    }

    const double f1 = f1_units > 0 ? f1_total / static_cast<double>(f1_units) : 0.0;
    const double acc =
        exact_match_acc
            ? static_cast<double>(rows_exact) / static_cast<double>(pred_bits.rows)
            : static_cast<double>(bit_correct) / static_cast<double>(pred_bits.size());
    return {f1, acc};
}

MetricsReport composite_scores(std::optional<double> ccc_v, std::optional<double> ccc_a,
                               std::optional<double> f1_expr, std::optional<double> acc_expr,
                               std::optional<double> f1_au, std::optional<double> acc_au,
                               std::size_t n_va, std::size_t n_expr, std::size_t n_au) {
    MetricsReport report;
    report.ccc_v = ccc_v;
    report.ccc_a = ccc_a;
    report.f1_expr = f1_expr;
    report.acc_expr = acc_expr;
    report.f1_au = f1_au;
    report.acc_au = acc_au;
    report.n_va = n_va;
    report.n_expr = n_expr;
    report.n_au = n_au;
    if (ccc_v && ccc_a) report.m_va = 0.5 * (*ccc_v + *ccc_a);
    if (f1_expr && acc_expr) report.m_expr = 0.67 * *f1_expr + 0.33 * *acc_expr;
    if (f1_au && acc_au) report.m_au = 0.5 * (*f1_au + *acc_au);
    return report;
}

std::string MetricsReport::csv_header() {
    return "ccc_v,ccc_a,f1_expr,acc_expr,f1_au,acc_au,m_va,m_expr,m_au,n_va,n_expr,n_au";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream out;
    out << opt_str(ccc_v) << ',' << opt_str(ccc_a) << ',' << opt_str(f1_expr) << ','
        << opt_str(acc_expr) << ',' << opt_str(f1_au) << ',' << opt_str(acc_au) << ','
        << opt_str(m_va) << ',' << opt_str(m_expr) << ',' << opt_str(m_au) << ',' << n_va << ','
        << n_expr << ',' << n_au;
    return out.str();
}

std::string MetricsReport::pretty() const {
    auto line = [](const char* name, const std::optional<double>& v, std::size_t n) {
        std::string s = "  ";
        s += name;
        s += v ? format_double(*v) : std::string("absent");
        if (n > 0) s += "  (n=" + std::to_string(n) + ")";
        return s + "\n";
    };
    std::string out = "metrics:\n";
    out += line("ccc_v    ", ccc_v, n_va);
    out += line("ccc_a    ", ccc_a, n_va);
    out += line("f1_expr  ", f1_expr, n_expr);
    out += line("acc_expr ", acc_expr, n_expr);
    out += line("f1_au    ", f1_au, n_au);
    out += line("acc_au   ", acc_au, n_au);
    out += line("m_va     ", m_va, 0);
    out += line("m_expr   ", m_expr, 0);
    out += line("m_au     ", m_au, 0);
    return out;
}

}  // namespace affect::metrics
