#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "affect/losses.hpp"
#include "affect/matrix.hpp"

namespace affect::data {

/// One synthetic observation. group_id plays the role of the source video:
/// label missingness and the train/val split operate on whole groups.
struct Sample {
    std::int64_t id = 0;
    std::int64_t group_id = 0;
    std::vector<double> features;
    losses::TaskLabels labels;
};

struct MissingPattern {
    double fully_labeled_fraction = 0.33;
    /// Per-task presence probability (expr, au, va) for partially labeled
    /// groups. Partial groups always keep one or two of the three tasks.
    std::array<double, 3> presence{0.5, 0.5, 0.5};

    void validate() const;
};

struct DataGenConfig {
    std::size_t n_samples = 5000;
    std::size_t input_dim = 16;
    std::size_t latent_dim = 8;
    std::size_t expr_classes = 7;
    double noise_std = 0.5;
    MissingPattern missing;
    std::size_t group_size = 25;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Draws every label set from one latent vector per sample (with a shared
/// per-group component), so the three tasks stay mutually informative:
/// expr = argmax of class-prototype affinities, AU bits threshold linear maps
/// correlated with the prototypes, VA is a clipped linear map. Features are a
/// random linear embedding of the latent plus Gaussian noise. All samples come
/// out fully labeled; apply_missingness drops labels afterwards.
std::vector<Sample> generate_dataset(const DataGenConfig& config);

/// Keeps a fully_labeled_fraction of groups intact and drops labels per task
/// for the rest, one mask per group. Every sample keeps at least one task.
void apply_missingness(std::vector<Sample>& samples, const MissingPattern& pattern,
                       std::uint64_t seed);

/// Group-level split: the same group never appears on both sides. Groups are
/// stratified by their label-presence mask so each task's labeled samples
/// land near the requested ratio.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(
    const std::vector<Sample>& samples, double ratio, std::uint64_t seed);

/// Symmetric label noise on expression: with probability rate, a labeled
/// sample's expr class is replaced by a uniformly random other class.
void inject_expr_label_noise(std::vector<Sample>& samples, double rate,
                             std::size_t n_classes, std::uint64_t seed);

/// Line-delimited records:
///   {"id":0,"group_id":0,"features":[...],"expr":3,"au":[0,1,...],"va":[0.1,-0.2]}
/// with null for absent labels. Malformed lines are rejected with their line
/// number.
void write_jsonl(const std::vector<Sample>& samples, const std::string& path);
std::vector<Sample> read_jsonl(const std::string& path);

Matrix features_matrix(std::span<const Sample> samples);

}  // namespace affect::data
