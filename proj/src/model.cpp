#include "affect/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "affect/selfcure.hpp"
#include "checkpoint_io.hpp"

namespace affect::model {

namespace {

struct BlockSpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    bool is_bias;
};

std::vector<BlockSpec> layout(const ModelConfig& config) {
    std::vector<BlockSpec> specs;
    std::size_t in = config.input_dim;
    for (std::size_t i = 0; i < config.hidden_dims.size(); ++i) {
        const std::size_t out = config.hidden_dims[i];
        specs.push_back({"encoder.W" + std::to_string(i), in, out, false});
        specs.push_back({"encoder.b" + std::to_string(i), 1, out, true});
        in = out;
    }
    const std::size_t f = config.feature_dim();
    specs.push_back({"expr.W", f, config.expr_classes, false});
    specs.push_back({"expr.b", 1, config.expr_classes, true});
    specs.push_back({"attn.W", f, 1, false});
    specs.push_back({"attn.b", 1, 1, true});
    specs.push_back({"au.W", f, config.au_count, false});
    specs.push_back({"au.b", 1, config.au_count, true});
    specs.push_back({"va.W", f, 2, false});
    specs.push_back({"va.b", 1, 2, true});
    return specs;
}

}  // namespace

void ModelConfig::validate() const {
    if (input_dim == 0) throw std::invalid_argument("ModelConfig: input_dim must be >= 1");
    for (std::size_t d : hidden_dims) {
        if (d == 0) throw std::invalid_argument("ModelConfig: zero-sized hidden layer");
    }
    if (expr_classes < 2) {
        throw std::invalid_argument("ModelConfig: expr_classes must be >= 2, got " +
                                    std::to_string(expr_classes));
    }
    if (au_count != 12) {
        throw std::invalid_argument("ModelConfig: au_count must be 12, got " +
                                    std::to_string(au_count));
    }
}

bool ModelParams::layout_matches(const ModelParams& other) const {
    if (blocks.size() != other.blocks.size()) return false;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (!blocks[i].same_shape(other.blocks[i])) return false;
        if (block_names[i] != other.block_names[i]) return false;
    }
    return true;
}

std::uint64_t ModelParams::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* bytes, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const Matrix& b : blocks) mix(b.data.data(), b.data.size() * sizeof(double));
    return h;
}

ModelParams init_model(const ModelConfig& config) {
    config.validate();
    ModelParams params;
    params.config = config;

    std::mt19937_64 rng(config.seed);
    for (const BlockSpec& spec : layout(config)) {
        Matrix block(spec.rows, spec.cols);
        if (!spec.is_bias) {
            const double bound =
                std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (double& v : block.data) v = dist(rng);
        }
        params.blocks.push_back(std::move(block));
        params.block_names.push_back(spec.name);
    }
    return params;
}

ModelParams clone_params(const ModelParams& params) { return params; }

TaskPredictions TapedForward::values(const ad::Tape& tape) const {
    return TaskPredictions{tape.value(expr_logits), tape.value(importance_weights),
                           tape.value(au_probs), tape.value(va)};
}

TapedForward forward(ad::Tape& tape, const ModelParams& params, const Matrix& features,
                     bool apply_importance_weighting) {
    if (features.cols != params.config.input_dim) {
        throw std::invalid_argument("forward: feature width " + std::to_string(features.cols) +
                                    " does not match input_dim " +
                                    std::to_string(params.config.input_dim));
    }

    TapedForward out;
    out.param_ids.reserve(params.blocks.size());
    for (const Matrix& block : params.blocks) {
        out.param_ids.push_back(tape.param(block));
    }

    std::size_t p = 0;
    ad::ValueId h = tape.constant(features);
    for (std::size_t layer = 0; layer < params.config.hidden_dims.size(); ++layer) {
        ad::ValueId w = out.param_ids[p++];
        ad::ValueId b = out.param_ids[p++];
        h = tape.relu(tape.add_row(tape.matmul(h, w), b));
    }
    out.encoded = h;

    ad::ValueId expr_w = out.param_ids[p++];
    ad::ValueId expr_b = out.param_ids[p++];
    out.raw_expr_logits = tape.add_row(tape.matmul(h, expr_w), expr_b);

    ad::ValueId attn_w = out.param_ids[p++];
    ad::ValueId attn_b = out.param_ids[p++];
    out.importance_weights = selfcure::importance_weights(tape, h, attn_w, attn_b);

    out.expr_logits = apply_importance_weighting
                          ? selfcure::apply_weighting(tape, out.raw_expr_logits,
                                                      out.importance_weights)
                          : out.raw_expr_logits;

    ad::ValueId au_w = out.param_ids[p++];
    ad::ValueId au_b = out.param_ids[p++];
    out.au_probs = tape.sigmoid(tape.add_row(tape.matmul(h, au_w), au_b));

    ad::ValueId va_w = out.param_ids[p++];
    ad::ValueId va_b = out.param_ids[p++];
    out.va = tape.tanh(tape.add_row(tape.matmul(h, va_w), va_b));
    return out;
}

TaskPredictions predict(const ModelParams& params, const Matrix& features,
                        bool apply_importance_weighting) {
    if (features.cols != params.config.input_dim) {
        throw std::invalid_argument("predict: feature width " + std::to_string(features.cols) +
                                    " does not match input_dim " +
                                    std::to_string(params.config.input_dim));
    }

    std::size_t p = 0;
    Matrix h = features;
    for (std::size_t layer = 0; layer < params.config.hidden_dims.size(); ++layer) {
        const Matrix& w = params.blocks[p++];
        const Matrix& b = params.blocks[p++];
        h = relu(add_row(matmul(h, w), b));
    }

    TaskPredictions preds;
    const Matrix& expr_w = params.blocks[p++];
    const Matrix& expr_b = params.blocks[p++];
    Matrix raw_logits = add_row(matmul(h, expr_w), expr_b);

    const Matrix& attn_w = params.blocks[p++];
    const Matrix& attn_b = params.blocks[p++];
    preds.importance_weights = selfcure::importance_weights(h, attn_w, attn_b);

    preds.expr_logits = apply_importance_weighting
                            ? selfcure::apply_weighting(raw_logits, preds.importance_weights)
                            : std::move(raw_logits);

    const Matrix& au_w = params.blocks[p++];
    const Matrix& au_b = params.blocks[p++];
    preds.au_probs = sigmoid(add_row(matmul(h, au_w), au_b));

    const Matrix& va_w = params.blocks[p++];
    const Matrix& va_b = params.blocks[p++];
    preds.va = tanh(add_row(matmul(h, va_w), va_b));
    return preds;
}

ad::GradCheckReport grad_check(
    const std::function<ad::ValueId(ad::Tape&, const ModelParams&)>& f,
    const ModelParams& params, double tolerance, double step) {
    ad::LossBuilder builder = [&](ad::Tape& tape, std::span<const Matrix> blocks) {
        ModelParams work = params;
        work.blocks.assign(blocks.begin(), blocks.end());
        return f(tape, work);
    };
    return ad::grad_check(builder, params.blocks, params.block_names, tolerance, step);
}

namespace detail {

nlohmann::json checkpoint_json(const ModelParams& params) {
    nlohmann::json doc;
    doc["format"] = "affect-checkpoint";
    doc["layout_version"] = ModelParams::layout_version;
    doc["config"] = {{"input_dim", params.config.input_dim},
                     {"hidden_dims", params.config.hidden_dims},
                     {"expr_classes", params.config.expr_classes},
                     {"au_count", params.config.au_count},
                     {"seed", params.config.seed}};
    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        blocks.push_back({{"name", params.block_names[i]},
                          {"rows", params.blocks[i].rows},
                          {"cols", params.blocks[i].cols},
                          {"data", params.blocks[i].data}});
    }
    doc["blocks"] = std::move(blocks);
    return doc;
}

ModelParams params_from_json(const nlohmann::json& doc, const std::string& context) {
    if (doc.value("format", "") != "affect-checkpoint") {
        throw std::invalid_argument(context + ": not an affect checkpoint");
    }
    if (doc.value("layout_version", -1) != ModelParams::layout_version) {
        throw std::invalid_argument(context + ": unsupported layout_version");
    }
    const auto& cfg = doc.at("config");
    ModelParams params;
    params.config.input_dim = cfg.at("input_dim").get<std::size_t>();
    params.config.hidden_dims = cfg.at("hidden_dims").get<std::vector<std::size_t>>();
    params.config.expr_classes = cfg.at("expr_classes").get<std::size_t>();
    params.config.au_count = cfg.at("au_count").get<std::size_t>();
    params.config.seed = cfg.at("seed").get<std::uint64_t>();
    params.config.validate();

    const auto specs = layout(params.config);
    const auto& blocks = doc.at("blocks");
    if (blocks.size() != specs.size()) {
        throw std::invalid_argument(context + ": expected " + std::to_string(specs.size()) +
                                    " blocks, found " + std::to_string(blocks.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& b = blocks.at(i);
        Matrix m(b.at("rows").get<std::size_t>(), b.at("cols").get<std::size_t>());
        if (b.at("name").get<std::string>() != specs[i].name || m.rows != specs[i].rows ||
            m.cols != specs[i].cols) {
            throw std::invalid_argument(context + ": block " + std::to_string(i) +
                                        " does not match layout");
        }
        m.data = b.at("data").get<std::vector<double>>();
        if (m.data.size() != m.rows * m.cols) {
            throw std::invalid_argument(context + ": block " + specs[i].name +
                                        " has wrong data length");
        }
        params.blocks.push_back(std::move(m));
        params.block_names.push_back(specs[i].name);
    }
    return params;
}

nlohmann::json read_json_file(const std::string& path, const std::string& context) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(context + ": cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(context + ": " + path + ": " + e.what());
    }
    return doc;
}

void write_json_file(const nlohmann::json& doc, const std::string& path,
                     const std::string& context) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(context + ": cannot open " + path + " for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw std::runtime_error(context + ": write failed for " + path);
}

}  // namespace detail

void save_checkpoint(const ModelParams& params, const std::string& path) {
    detail::write_json_file(detail::checkpoint_json(params), path, "save_checkpoint");
}

ModelParams load_checkpoint(const std::string& path) {
    return detail::params_from_json(detail::read_json_file(path, "load_checkpoint"),
                                    "load_checkpoint");
}

}  // namespace affect::model
