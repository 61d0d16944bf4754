#include "affect/teacher.hpp"

#include <stdexcept>

#include "checkpoint_io.hpp"

namespace affect::teacher {

TeacherState init_teacher(const model::ModelParams& student, double eta) {
    if (!(eta >= 0.0 && eta < 1.0)) {
        throw std::invalid_argument("init_teacher: eta must be in [0,1), got " +
                                    std::to_string(eta));
    }
    return TeacherState{model::clone_params(student), eta, 0};
}

void ema_update(TeacherState& teacher, const model::ModelParams& student) {
    if (!teacher.params.layout_matches(student)) {
        throw std::invalid_argument("ema_update: teacher/student parameter layouts differ");
    }
    const double eta = teacher.eta;
    for (std::size_t b = 0; b < teacher.params.blocks.size(); ++b) {
        Matrix& t = teacher.params.blocks[b];
        const Matrix& s = student.blocks[b];
        for (std::size_t i = 0; i < t.size(); ++i) {
            t.data[i] = eta * t.data[i] + (1.0 - eta) * s.data[i];
        }
    }
    ++teacher.step;
}

void NoiseConfig::validate() const {
    if (magnitude < 0.0) {
        throw std::invalid_argument("NoiseConfig: magnitude must be >= 0, got " +
                                    std::to_string(magnitude));
    }
}

NoiseKind noise_kind_from_string(const std::string& name) {
    if (name == "additive-gaussian") return NoiseKind::additive_gaussian;
    if (name == "multiplicative-scale") return NoiseKind::multiplicative_scale;
    throw std::invalid_argument("unknown noise kind '" + name +
                                "' (expected additive-gaussian or multiplicative-scale)");
}

const char* to_string(NoiseKind kind) {
    return kind == NoiseKind::additive_gaussian ? "additive-gaussian" : "multiplicative-scale";
}

Matrix perturb(const Matrix& features, const NoiseConfig& config, std::mt19937_64& rng) {
    config.validate();
    if (config.magnitude == 0.0) return features;

    Matrix out = features;
    if (config.kind == NoiseKind::additive_gaussian) {
        std::normal_distribution<double> noise(0.0, config.magnitude);
        for (double& v : out.data) v += noise(rng);
    } else {
        std::uniform_real_distribution<double> factor(-config.magnitude, config.magnitude);
        for (std::size_t i = 0; i < out.rows; ++i) {
            const double s = 1.0 + factor(rng);
            for (std::size_t j = 0; j < out.cols; ++j) out.data[i * out.cols + j] *= s;
        }
    }
    return out;
}

std::vector<losses::TaskLabels> make_pseudo_labels(const model::TaskPredictions& preds) {
    const std::size_t batch = preds.expr_logits.rows;
    std::vector<losses::TaskLabels> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        int best = 0;
        for (std::size_t c = 1; c < preds.expr_logits.cols; ++c) {
            if (preds.expr_logits.at(i, c) > preds.expr_logits.at(i, static_cast<std::size_t>(best))) {
                best = static_cast<int>(c);
            }
        }
        labels[i].expr = best;

        std::array<std::uint8_t, losses::kAuCount> bits{};
        for (std::size_t j = 0; j < losses::kAuCount; ++j) {
            bits[j] = preds.au_probs.at(i, j) >= 0.5 ? 1 : 0;
        }
        labels[i].au = bits;
        labels[i].va = std::array<double, 2>{preds.va.at(i, 0), preds.va.at(i, 1)};
    }
    return labels;
}

void save_teacher(const TeacherState& teacher, const std::string& path) {
    nlohmann::json doc = model::detail::checkpoint_json(teacher.params);
    doc["eta"] = teacher.eta;
    doc["step"] = teacher.step;
    model::detail::write_json_file(doc, path, "save_teacher");
}

TeacherState load_teacher(const std::string& path) {
    nlohmann::json doc = model::detail::read_json_file(path, "load_teacher");
    if (!doc.contains("eta") || !doc.contains("step")) {
        throw std::invalid_argument("load_teacher: " + path + " lacks eta/step header fields");
    }
    TeacherState teacher;
    teacher.params = model::detail::params_from_json(doc, "load_teacher");
    teacher.eta = doc.at("eta").get<double>();
    teacher.step = doc.at("step").get<std::uint64_t>();
    if (!(teacher.eta >= 0.0 && teacher.eta < 1.0)) {
        throw std::invalid_argument("load_teacher: eta out of [0,1)");
    }
    return teacher;
}

}  // namespace affect::teacher
