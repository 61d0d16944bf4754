#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "affect/autodiff.hpp"
#include "affect/matrix.hpp"

namespace affect::model {

struct ModelConfig {
    std::size_t input_dim = 16;
    std::vector<std::size_t> hidden_dims{64, 64};
    std::size_t expr_classes = 7;
    std::size_t au_count = 12;  // fixed by the AU label width
    std::uint64_t seed = 0;

    void validate() const;
    /// Width of the encoder output the heads read from.
    std::size_t feature_dim() const {
        return hidden_dims.empty() ? input_dim : hidden_dims.back();
    }
};

/// All learnable weights, as a flat list of named blocks in a fixed layout:
/// encoder layers (W, b per layer), then expr, attention, AU and VA heads.
/// EMA and optimizer state index blocks by position in this layout.
struct ModelParams {
    ModelConfig config;
    std::vector<Matrix> blocks;
    std::vector<std::string> block_names;

    static constexpr int layout_version = 1;

    std::size_t block_count() const { return blocks.size(); }
    bool layout_matches(const ModelParams& other) const;
    /// FNV-1a over the raw block bytes; used to assert params untouched.
    std::uint64_t checksum() const;
};

struct TaskPredictions {
    Matrix expr_logits;         // B x expr_classes (importance-weighted when enabled)
    Matrix importance_weights;  // B x 1, entries in (0,1)
    Matrix au_probs;            // B x au_count, entries in (0,1)
    Matrix va;                  // B x 2, entries in [-1,1]
};

/// Tape handles for one student forward pass. param_ids are registered in
/// block order, so Tape::backward aligns gradients with ModelParams::blocks.
struct TapedForward {
    std::vector<ad::ValueId> param_ids;
    ad::ValueId encoded;
    ad::ValueId raw_expr_logits;
    ad::ValueId expr_logits;
    ad::ValueId importance_weights;
    ad::ValueId au_probs;
    ad::ValueId va;

    TaskPredictions values(const ad::Tape& tape) const;
};

/// Scaled uniform init (Xavier bounds) for weights, zeros for biases.
/// Deterministic given config.seed.
ModelParams init_model(const ModelConfig& config);

/// Deep, independent copy.
ModelParams clone_params(const ModelParams& params);

/// Encoder (relu MLP) + four heads. When apply_importance_weighting is set the
/// expr logits are scaled per sample by the attention weights before being
/// returned; AU goes through sigmoid, VA through tanh.
TapedForward forward(ad::Tape& tape, const ModelParams& params, const Matrix& features,
                     bool apply_importance_weighting = true);

/// Same math without gradient recording.
TaskPredictions predict(const ModelParams& params, const Matrix& features,
                        bool apply_importance_weighting = true);

/// Finite-difference verification of d(loss)/d(block) for a loss built by f,
/// reported per parameter block.
ad::GradCheckReport grad_check(
    const std::function<ad::ValueId(ad::Tape&, const ModelParams&)>& f,
    const ModelParams& params, double tolerance, double step = 1e-5);

/// JSON checkpoint; doubles round-trip losslessly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace affect::model
