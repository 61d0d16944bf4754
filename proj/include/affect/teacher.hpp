#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "affect/losses.hpp"
#include "affect/matrix.hpp"
#include "affect/model.hpp"

namespace affect::teacher {

/// EMA copy of the student. Only ema_update ever changes the params; they are
/// never touched by the optimizer.
struct TeacherState {
    model::ModelParams params;
    double eta = 0.99;
    std::uint64_t step = 0;
};

/// Starts the teacher as a clone of the student at step 0. eta must be in [0,1).
TeacherState init_teacher(const model::ModelParams& student, double eta = 0.99);

/// p' <- eta * p' + (1 - eta) * p for every parameter; increments step.
/// The student is left untouched.
void ema_update(TeacherState& teacher, const model::ModelParams& student);

enum class NoiseKind { additive_gaussian, multiplicative_scale };

struct NoiseConfig {
    NoiseKind kind = NoiseKind::multiplicative_scale;
    double magnitude = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

NoiseKind noise_kind_from_string(const std::string& name);
const char* to_string(NoiseKind kind);

/// Input perturbation for the teacher pass. additive_gaussian adds
/// N(0, magnitude^2) per element; multiplicative_scale scales each row by
/// (1 + u), u ~ Uniform(-magnitude, magnitude). Deterministic given the rng
/// state; magnitude 0 is the identity.
Matrix perturb(const Matrix& features, const NoiseConfig& config, std::mt19937_64& rng);

/// Hardens teacher outputs into targets: expr argmax (ties to the lowest
/// index), AU bits thresholded at 0.5, VA regressions passed through.
std::vector<losses::TaskLabels> make_pseudo_labels(const model::TaskPredictions& preds);

/// Model checkpoint format plus eta/step header fields.
void save_teacher(const TeacherState& teacher, const std::string& path);
TeacherState load_teacher(const std::string& path);

}  // namespace affect::teacher
