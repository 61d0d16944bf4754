#pragma once

#include <cstddef>
#include <vector>

#include "affect/autodiff.hpp"
#include "affect/matrix.hpp"

namespace affect::selfcure {

/// Batch partitioned by sorted importance weight. High group holds the top
/// ceil(beta * B) samples; alpha_high / alpha_low are the group mean weights.
struct RankSplit {
    std::vector<std::size_t> high_indices;
    std::vector<std::size_t> low_indices;
    double alpha_high = 0.0;
    double alpha_low = 0.0;
};

/// One sigmoid attention scalar per sample: sigmoid(features @ w + b).
/// attn_w is F x 1, attn_b is 1 x 1; result is B x 1 with entries in (0,1).
ad::ValueId importance_weights(ad::Tape& tape, ad::ValueId features, ad::ValueId attn_w,
                               ad::ValueId attn_b);
Matrix importance_weights(const Matrix& features, const Matrix& attn_w, const Matrix& attn_b);

/// Scales row i of the logits by weights[i]. Positive weights never change the
/// per-row argmax.
ad::ValueId apply_weighting(ad::Tape& tape, ad::ValueId expr_logits, ad::ValueId weights);
Matrix apply_weighting(const Matrix& expr_logits, const Matrix& weights);

/// Ranks the weights (stable, ties by original index) and splits into
/// high/low groups at fraction beta. Requires B >= 2 and 0 < beta < 1.
RankSplit split_high_low(const Matrix& weights, double beta);

/// max(0, delta - (alpha_high - alpha_low)).
double rr_loss(const RankSplit& split, double delta);

/// Differentiable form over the weight column; gradient flows through the two
/// group means. The split's index sets are treated as fixed.
ad::ValueId rr_loss(ad::Tape& tape, ad::ValueId weights, const RankSplit& split, double delta);

}  // namespace affect::selfcure
