#include "affect/selfcure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace affect::selfcure {

ad::ValueId importance_weights(ad::Tape& tape, ad::ValueId features, ad::ValueId attn_w,
                               ad::ValueId attn_b) {
    return tape.sigmoid(tape.add_row(tape.matmul(features, attn_w), attn_b));
}

Matrix importance_weights(const Matrix& features, const Matrix& attn_w, const Matrix& attn_b) {
    return sigmoid(add_row(matmul(features, attn_w), attn_b));
}

ad::ValueId apply_weighting(ad::Tape& tape, ad::ValueId expr_logits, ad::ValueId weights) {
    const Matrix& logits = tape.value(expr_logits);
    const Matrix& w = tape.value(weights);
    if (w.rows != logits.rows || w.cols != 1) {
        throw std::invalid_argument("apply_weighting: weights must be " +
                                    std::to_string(logits.rows) + "x1, got " + w.shape_str());
    }
    // Tile the weight column across the class axis, then take the product.
    ad::ValueId tiled = tape.matmul(weights, tape.constant(Matrix(1, logits.cols, 1.0)));
    return tape.mul(expr_logits, tiled);
}

Matrix apply_weighting(const Matrix& expr_logits, const Matrix& weights) {
    if (weights.rows != expr_logits.rows || weights.cols != 1) {
        throw std::invalid_argument("apply_weighting: weights must be " +
                                    std::to_string(expr_logits.rows) + "x1, got " +
                                    weights.shape_str());
    }
    Matrix out = expr_logits;
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t j = 0; j < out.cols; ++j) {
            out.data[i * out.cols + j] *= weights.data[i];
        }
    }
    return out;
}

RankSplit split_high_low(const Matrix& weights, double beta) {
    const std::size_t batch = weights.size();
    if (weights.cols != 1 && weights.rows != 1) {
        throw std::invalid_argument("split_high_low: expected a weight vector, got " +
                                    weights.shape_str());
    }
    if (batch < 2) {
        throw std::invalid_argument("split_high_low: need at least 2 samples, got " +
                                    std::to_string(batch));
    }
    if (!(beta > 0.0 && beta < 1.0)) {
        throw std::invalid_argument("split_high_low: beta must be in (0,1), got " +
                                    std::to_string(beta));
    }

    std::vector<std::size_t> order(batch);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return weights.data[a] > weights.data[b];
    });

    // ceil(beta * B), clamped so both groups stay nonempty (a group mean is
    // undefined otherwise;B=2..3 at beta=0.7 would swallow the whole batch).
    auto high_count = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(batch)));
    high_count = std::clamp<std::size_t>(high_count, 1, batch - 1);

    RankSplit split;
    split.high_indices.assign(order.begin(), order.begin() + high_count);
    split.low_indices.assign(order.begin() + high_count, order.end());

    auto group_mean = [&](const std::vector<std::size_t>& idx) {
        double total = 0.0;
        for (std::size_t i : idx) total += weights.data[i];
        return total / static_cast<double>(idx.size());
    };
    split.alpha_high = group_mean(split.high_indices);
    split.alpha_low = group_mean(split.low_indices);
    return split;
}

double rr_loss(const RankSplit& split, double delta) {
    if (delta < 0.0) {
        throw std::invalid_argument("rr_loss: delta must be >= 0, got " + std::to_string(delta));
    }
    return std::max(0.0, delta - (split.alpha_high - split.alpha_low));
}

ad::ValueId rr_loss(ad::Tape& tape, ad::ValueId weights, const RankSplit& split, double delta) {
    if (delta < 0.0) {
        throw std::invalid_argument("rr_loss: delta must be >= 0, got " + std::to_string(delta));
    }
    const Matrix& w = tape.value(weights);
    const std::size_t batch = w.size();

    // 1 x B selector rows holding 1/|group| at the group's indices, so that
    // selector @ weights is the group mean.
    Matrix select_high(1, batch);
    for (std::size_t i : split.high_indices) {
        select_high.data[i] = 1.0 / static_cast<double>(split.high_indices.size());
    }
    Matrix select_low(1, batch);
    for (std::size_t i : split.low_indices) {
        select_low.data[i] = 1.0 / static_cast<double>(split.low_indices.size());
    }

    ad::ValueId alpha_high = tape.matmul(tape.constant(std::move(select_high)), weights);
    ad::ValueId alpha_low = tape.matmul(tape.constant(std::move(select_low)), weights);
    ad::ValueId margin = tape.sub(alpha_high, alpha_low);
    return tape.relu(tape.sub(tape.constant(Matrix(1, 1, delta)), margin));
}

}  // namespace affect::selfcure
