#include "affect/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace affect::data {

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * b[i];
    return total;
}

void normalize(Vec& v) {
    const double norm = std::sqrt(dot(v, v));
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
}

Vec gaussian_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

/// Class prototypes, orthonormalized when the latent has room. Orthogonal
/// prototypes keep the class marginals roughly balanced.
std::vector<Vec> make_prototypes(std::size_t classes, std::size_t latent,
                                 std::mt19937_64& rng) {
    std::vector<Vec> protos;
    for (std::size_t c = 0; c < classes; ++c) {
        Vec p = gaussian_vec(latent, rng);
        if (classes <= latent) {
            for (const Vec& q : protos) {
                const double proj = dot(p, q);
                for (std::size_t i = 0; i < latent; ++i) p[i] -= proj * q[i];
            }
        }
        normalize(p);
        protos.push_back(std::move(p));
    }
    return protos;
}

}  // namespace

void MissingPattern::validate() const {
    if (fully_labeled_fraction < 0.0 || fully_labeled_fraction > 1.0) {
        throw std::invalid_argument("MissingPattern: fully_labeled_fraction must be in [0,1]");
    }
    for (double p : presence) {
        if (p < 0.0 || p > 1.0) {
            throw std::invalid_argument("MissingPattern: presence probabilities must be in [0,1]");
        }
    }
    if (fully_labeled_fraction < 1.0) {
        const bool can_keep = std::any_of(presence.begin(), presence.end(),
                                          [](double p) { return p > 0.0; });
        const bool can_drop = std::any_of(presence.begin(), presence.end(),
                                          [](double p) { return p < 1.0; });
        if (!can_keep || !can_drop) {
            throw std::invalid_argument(
                "MissingPattern: presence probabilities admit no partial mask; a sample would "
                "be orphaned or never partial");
        }
    }
}

void DataGenConfig::validate() const {
    if (n_samples == 0) throw std::invalid_argument("DataGenConfig: n_samples must be >= 1");
    if (input_dim == 0) throw std::invalid_argument("DataGenConfig: input_dim must be >= 1");
    if (latent_dim < 2) {
        throw std::invalid_argument("DataGenConfig: latent_dim must be >= 2, got " +
                                    std::to_string(latent_dim));
    }
    if (expr_classes < 2) throw std::invalid_argument("DataGenConfig: expr_classes must be >= 2");
    if (noise_std < 0.0) throw std::invalid_argument("DataGenConfig: noise_std must be >= 0");
    if (group_size == 0) throw std::invalid_argument("DataGenConfig: group_size must be >= 1");
    missing.validate();
}

std::vector<Sample> generate_dataset(const DataGenConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t latent = config.latent_dim;
    const auto prototypes = make_prototypes(config.expr_classes, latent, rng);

    // AU directions lean on the prototypes so the bits carry expression signal.
    std::vector<Vec> au_dirs;
    for (std::size_t j = 0; j < losses::kAuCount; ++j) {
        Vec d = gaussian_vec(latent, rng);
        const Vec& proto = prototypes[j % prototypes.size()];
        for (std::size_t i = 0; i < latent; ++i) d[i] = proto[i] + 0.5 * d[i];
        normalize(d);
        au_dirs.push_back(std::move(d));
    }

    std::vector<Vec> va_dirs;
    for (std::size_t j = 0; j < 2; ++j) {
        Vec d = gaussian_vec(latent, rng);
        normalize(d);
        for (double& x : d) x *= 0.7;
        va_dirs.push_back(std::move(d));
    }

    // input_dim x latent embedding, scaled for roughly unit-variance features.
    std::vector<Vec> embed(config.input_dim, Vec(latent));
    const double embed_scale = 1.0 / std::sqrt(static_cast<double>(latent));
    for (Vec& row : embed) {
        for (double& x : row) x = normal(rng) * embed_scale;
    }

    const std::size_t n_groups = (config.n_samples + config.group_size - 1) / config.group_size;
    std::vector<Vec> group_latent;
    group_latent.reserve(n_groups);
    for (std::size_t g = 0; g < n_groups; ++g) group_latent.push_back(gaussian_vec(latent, rng));

    // Samples share half their latent variance with their group, mimicking
    // frames of one video.
    const double group_rho = 0.85;
    const double indiv_scale = std::sqrt(1.0 - group_rho * group_rho);

    std::vector<Sample> samples;
    samples.reserve(config.n_samples);
    for (std::size_t i = 0; i < config.n_samples; ++i) {
        const std::size_t g = i / config.group_size;
        Vec z = gaussian_vec(latent, rng);
        for (std::size_t k = 0; k < latent; ++k) {
            z[k] = group_rho * group_latent[g][k] + indiv_scale * z[k];
        }

        Sample s;
        s.id = static_cast<std::int64_t>(i);
        s.group_id = static_cast<std::int64_t>(g);

        int best = 0;
        double best_affinity = dot(prototypes[0], z);
        for (std::size_t c = 1; c < prototypes.size(); ++c) {
            const double affinity = dot(prototypes[c], z);
            if (affinity > best_affinity) {
                best_affinity = affinity;
                best = static_cast<int>(c);
            }
        }
        s.labels.expr = best;

        std::array<std::uint8_t, losses::kAuCount> bits{};
        for (std::size_t j = 0; j < losses::kAuCount; ++j) {
            bits[j] = dot(au_dirs[j], z) > 0.0 ? 1 : 0;
        }
        s.labels.au = bits;

        s.labels.va = std::array<double, 2>{std::clamp(dot(va_dirs[0], z), -1.0, 1.0),
                                            std::clamp(dot(va_dirs[1], z), -1.0, 1.0)};

        s.features.resize(config.input_dim);
        for (std::size_t d = 0; d < config.input_dim; ++d) {
            s.features[d] = dot(embed[d], z) + config.noise_std * normal(rng);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void apply_missingness(std::vector<Sample>& samples, const MissingPattern& pattern,
                       std::uint64_t seed) {
    pattern.validate();
    if (samples.empty()) return;

    std::vector<std::int64_t> groups;
    for (const Sample& s : samples) {
        if (groups.empty() || groups.back() != s.group_id) {
            if (std::find(groups.begin(), groups.end(), s.group_id) == groups.end()) {
                groups.push_back(s.group_id);
            }
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_full = static_cast<std::size_t>(
        std::llround(pattern.fully_labeled_fraction * static_cast<double>(groups.size())));

    std::map<std::int64_t, std::array<bool, 3>> group_mask;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::int64_t gid = groups[order[k]];
        if (k < n_full) {
            group_mask[gid] = {true, true, true};
            continue;
        }
        // Partial groups keep one or two tasks; redraw until the mask does.
        std::array<bool, 3> mask{};
        while (true) {
            int kept = 0;
            for (std::size_t t = 0; t < 3; ++t) {
                mask[t] = uniform(rng) < pattern.presence[t];
                kept += mask[t] ? 1 : 0;
            }
            if (kept >= 1 && kept <= 2) break;
        }
        group_mask[gid] = mask;
    }

    for (Sample& s : samples) {
        const auto& mask = group_mask.at(s.group_id);
        if (!mask[0]) s.labels.expr.reset();
        if (!mask[1]) s.labels.au.reset();
        if (!mask[2]) s.labels.va.reset();
    }
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(
    const std::vector<Sample>& samples, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("split_train_val: ratio must be in (0,1), got " +
                                    std::to_string(ratio));
    }

    // Group id -> label-presence signature of its first sample.
    std::vector<std::int64_t> groups;
    std::map<std::int64_t, int> signature;
    for (const Sample& s : samples) {
        if (!signature.count(s.group_id)) {
            groups.push_back(s.group_id);
            signature[s.group_id] = (s.labels.expr ? 1 : 0) | (s.labels.au ? 2 : 0) |
                                    (s.labels.va ? 4 : 0);
        }
    }

    const std::size_t n_groups = groups.size();
    const auto train_target = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(n_groups)));
    if (n_groups < 2 || train_target == 0 || train_target == n_groups) {
        throw std::invalid_argument("split_train_val: too few groups (" +
                                    std::to_string(n_groups) + ") to satisfy ratio " +
                                    std::to_string(ratio));
    }

    // Stratify by signature so each task's labeled samples split near the
    // ratio; largest remainders take the leftover slots.
    std::map<int, std::vector<std::int64_t>> strata;
    for (std::int64_t gid : groups) strata[signature[gid]].push_back(gid);

    std::mt19937_64 rng(seed);
    struct StratumPlan {
        std::vector<std::int64_t> group_ids;
        std::size_t take = 0;
        double remainder = 0.0;
    };
    std::vector<StratumPlan> plans;
    std::size_t assigned = 0;
    for (auto& [sig, gids] : strata) {
        std::shuffle(gids.begin(), gids.end(), rng);
        const double exact = ratio * static_cast<double>(gids.size());
        StratumPlan plan;
        plan.take = static_cast<std::size_t>(std::floor(exact));
        plan.remainder = exact - std::floor(exact);
        plan.group_ids = gids;
        assigned += plan.take;
        plans.push_back(std::move(plan));
    }
    std::vector<std::size_t> by_remainder(plans.size());
    std::iota(by_remainder.begin(), by_remainder.end(), 0);
    std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](std::size_t a, std::size_t b) {
        return plans[a].remainder > plans[b].remainder;
    });
    for (std::size_t i = 0; i < by_remainder.size() && assigned < train_target; ++i) {
        StratumPlan& plan = plans[by_remainder[i]];
        if (plan.take < plan.group_ids.size()) {
            ++plan.take;
            ++assigned;
        }
    }

    std::map<std::int64_t, bool> in_train;
    for (const StratumPlan& plan : plans) {
        for (std::size_t i = 0; i < plan.group_ids.size(); ++i) {
            in_train[plan.group_ids[i]] = i < plan.take;
        }
    }

    std::pair<std::vector<Sample>, std::vector<Sample>> out;
    for (const Sample& s : samples) {
        (in_train.at(s.group_id) ? out.first : out.second).push_back(s);
    }
    return out;
}

void inject_expr_label_noise(std::vector<Sample>& samples, double rate,
                             std::size_t n_classes, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) {
        throw std::invalid_argument("inject_expr_label_noise: rate must be in [0,1]");
    }
    if (rate == 0.0) return;
    if (n_classes < 2) throw std::invalid_argument("inject_expr_label_noise: need >= 2 classes");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::uniform_int_distribution<int> other(0, static_cast<int>(n_classes) - 2);
    for (Sample& s : samples) {
        if (!s.labels.expr) continue;
        if (uniform(rng) >= rate) continue;
        int replacement = other(rng);
        if (replacement >= *s.labels.expr) ++replacement;  // uniform over the other classes
        s.labels.expr = replacement;
    }
}

namespace {

using nlohmann::json;

json sample_to_json(const Sample& s) {
    json record;
    record["id"] = s.id;
    record["group_id"] = s.group_id;
    record["features"] = s.features;
    record["expr"] = s.labels.expr ? json(*s.labels.expr) : json(nullptr);
    if (s.labels.au) {
        json bits = json::array();
        for (std::uint8_t b : *s.labels.au) bits.push_back(static_cast<int>(b));
        record["au"] = std::move(bits);
    } else {
        record["au"] = nullptr;
    }
    record["va"] = s.labels.va ? json(*s.labels.va) : json(nullptr);
    return record;
}

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
    throw std::invalid_argument("read_jsonl: line " + std::to_string(line_no) + ": " + what);
}

Sample sample_from_json(const json& record, std::size_t line_no) {
    static const char* required[] = {"id", "group_id", "features", "expr", "au", "va"};
    if (!record.is_object()) line_error(line_no, "record is not an object");
    for (const char* key : required) {
        if (!record.contains(key)) line_error(line_no, std::string("missing key '") + key + "'");
    }

    Sample s;
    try {
        s.id = record.at("id").get<std::int64_t>();
        s.group_id = record.at("group_id").get<std::int64_t>();
        s.features = record.at("features").get<std::vector<double>>();
    } catch (const json::exception& e) {
        line_error(line_no, e.what());
    }
    if (s.features.empty()) line_error(line_no, "empty feature vector");
    for (double v : s.features) {
        if (!std::isfinite(v)) line_error(line_no, "non-finite feature value");
    }

    const json& expr = record.at("expr");
    if (!expr.is_null()) {
        if (!expr.is_number_integer()) line_error(line_no, "expr must be an integer or null");
        const auto value = expr.get<std::int64_t>();
        if (value < 0) line_error(line_no, "expr class must be >= 0");
        s.labels.expr = static_cast<int>(value);
    }

    const json& au = record.at("au");
    if (!au.is_null()) {
        if (!au.is_array() || au.size() != losses::kAuCount) {
            line_error(line_no, "au must be an array of " + std::to_string(losses::kAuCount) +
                                    " binary values or null");
        }
        std::array<std::uint8_t, losses::kAuCount> bits{};
        for (std::size_t j = 0; j < losses::kAuCount; ++j) {
            if (!au[j].is_number_integer()) line_error(line_no, "au entries must be integers");
            const auto bit = au[j].get<std::int64_t>();
            if (bit != 0 && bit != 1) line_error(line_no, "au entries must be 0 or 1");
            bits[j] = static_cast<std::uint8_t>(bit);
        }
        s.labels.au = bits;
    }

    const json& va = record.at("va");
    if (!va.is_null()) {
        if (!va.is_array() || va.size() != 2) {
            line_error(line_no, "va must be an array of 2 reals or null");
        }
        std::array<double, 2> pair{};
        for (std::size_t j = 0; j < 2; ++j) {
            if (!va[j].is_number()) line_error(line_no, "va entries must be numbers");
            pair[j] = va[j].get<double>();
            if (!(pair[j] >= -1.0 && pair[j] <= 1.0)) {
                line_error(line_no, "va entries must lie in [-1,1]");
            }
        }
        s.labels.va = pair;
    }

    if (!s.labels.any()) line_error(line_no, "sample has no labels at all");
    return s;
}

}  // namespace

void write_jsonl(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_jsonl: cannot open " + path + " for writing");
    for (const Sample& s : samples) {
        out << sample_to_json(s).dump() << "\n";
    }
    if (!out) throw std::runtime_error("write_jsonl: write failed for " + path);
}

std::vector<Sample> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_jsonl: cannot open " + path);

    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            line_error(line_no, e.what());
        }
        Sample s = sample_from_json(record, line_no);
        if (!samples.empty() && s.features.size() != samples.front().features.size()) {
            line_error(line_no, "feature width " + std::to_string(s.features.size()) +
                                    " differs from first record's " +
                                    std::to_string(samples.front().features.size()));
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

Matrix features_matrix(std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("features_matrix: empty sample span");
    Matrix out(samples.size(), samples.front().features.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].features.size() != out.cols) {
            throw std::invalid_argument("features_matrix: inconsistent feature widths");
        }
        std::copy(samples[i].features.begin(), samples[i].features.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * out.cols));
    }
    return out;
}

}  // namespace affect::data
