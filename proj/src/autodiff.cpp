#include "affect/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace affect::ad {

namespace {

void accumulate(Matrix& dst, const Matrix& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

void release(Matrix& m) {
    m.rows = 0;
    m.cols = 0;
    m.data.clear();
    m.data.shrink_to_fit();
}

}  // namespace

ValueId Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ValueId Tape::constant(Matrix value) {
    return push(Node{Op::constant, 0, 0, 0.0, 0.0, std::move(value)});
}

ValueId Tape::param(Matrix value) {
    ValueId id = push(Node{Op::param, 0, 0, 0.0, 0.0, std::move(value)});
    param_nodes_.push_back(id.index);
    return id;
}

ValueId Tape::unary(Op op, ValueId a, Matrix value, double c0, double c1) {
    return push(Node{op, a.index, 0, c0, c1, std::move(value)});
}

ValueId Tape::binary(Op op, ValueId a, ValueId b, Matrix value) {
    return push(Node{op, a.index, b.index, 0.0, 0.0, std::move(value)});
}

ValueId Tape::matmul(ValueId a, ValueId b) {
    return binary(Op::matmul, a, b, affect::matmul(operand(a.index), operand(b.index)));
}
ValueId Tape::add(ValueId a, ValueId b) {
    return binary(Op::add, a, b, affect::add(operand(a.index), operand(b.index)));
}
ValueId Tape::sub(ValueId a, ValueId b) {
    return binary(Op::sub, a, b, affect::sub(operand(a.index), operand(b.index)));
}
ValueId Tape::mul(ValueId a, ValueId b) {
    return binary(Op::mul, a, b, affect::mul(operand(a.index), operand(b.index)));
}
ValueId Tape::divide(ValueId a, ValueId b) {
    return binary(Op::divide, a, b, affect::divide(operand(a.index), operand(b.index)));
}
ValueId Tape::add_row(ValueId a, ValueId row) {
    return binary(Op::add_row, a, row, affect::add_row(operand(a.index), operand(row.index)));
}
ValueId Tape::scale(ValueId a, double c) {
    return unary(Op::scale, a, affect::scale(operand(a.index), c), c);
}
ValueId Tape::relu(ValueId a) { return unary(Op::relu, a, affect::relu(operand(a.index))); }
ValueId Tape::tanh(ValueId a) { return unary(Op::tanh, a, affect::tanh(operand(a.index))); }
ValueId Tape::sigmoid(ValueId a) {
    return unary(Op::sigmoid, a, affect::sigmoid(operand(a.index)));
}
ValueId Tape::softmax_rows(ValueId a) {
    return unary(Op::softmax_rows, a, affect::softmax_rows(operand(a.index)));
}
ValueId Tape::log_softmax_rows(ValueId a) {
    return unary(Op::log_softmax_rows, a, affect::log_softmax_rows(operand(a.index)));
}
ValueId Tape::log(ValueId a) { return unary(Op::log, a, affect::log(operand(a.index))); }
ValueId Tape::clamp(ValueId a, double lo, double hi) {
    return unary(Op::clamp, a, affect::clamp(operand(a.index), lo, hi), lo, hi);
}
ValueId Tape::sum(ValueId a) { return unary(Op::sum, a, affect::sum(operand(a.index))); }
ValueId Tape::mean(ValueId a) { return unary(Op::mean, a, affect::mean(operand(a.index))); }

const Matrix& Tape::value(ValueId id) const { return nodes_.at(id.index).value; }

double Tape::scalar(ValueId id) const {
    const Matrix& m = value(id);
    if (!m.is_scalar()) {
        throw std::invalid_argument("scalar: node value has shape " + m.shape_str());
    }
    return m.data[0];
}

Matrix Tape::eval(const Node& node, const Matrix* a, const Matrix* b) {
    switch (node.op) {
        case Op::constant:
        case Op::param: return node.value;
        case Op::matmul: return affect::matmul(*a, *b);
        case Op::add: return affect::add(*a, *b);
        case Op::sub: return affect::sub(*a, *b);
        case Op::mul: return affect::mul(*a, *b);
        case Op::divide: return affect::divide(*a, *b);
        case Op::add_row: return affect::add_row(*a, *b);
        case Op::scale: return affect::scale(*a, node.c0);
        case Op::relu: return affect::relu(*a);
        case Op::tanh: return affect::tanh(*a);
        case Op::sigmoid: return affect::sigmoid(*a);
        case Op::softmax_rows: return affect::softmax_rows(*a);
        case Op::log_softmax_rows: return affect::log_softmax_rows(*a);
        case Op::log: return affect::log(*a);
        case Op::clamp: return affect::clamp(*a, node.c0, node.c1);
        case Op::sum: return affect::sum(*a);
        case Op::mean: return affect::mean(*a);
    }
    throw std::logic_error("eval: unknown op");
}

bool Tape::verify_replay() const {
    for (const Node& node : nodes_) {
        const Matrix* a = node.op == Op::constant || node.op == Op::param
                              ? nullptr
                              : &nodes_[node.a].value;
        const Matrix* b = nullptr;
        switch (node.op) {
            case Op::matmul:
            case Op::add:
            case Op::sub:
            case Op::mul:
            case Op::divide:
            case Op::add_row: b = &nodes_[node.b].value; break;
            default: break;
        }
        if (!bit_equal(eval(node, a, b), node.value)) return false;
    }
    return true;
}

std::vector<Matrix> Tape::backward(ValueId loss) const {
    const Matrix& loss_value = value(loss);
    if (!loss_value.is_scalar()) {
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    loss_value.shape_str());
    }

    std::vector<Matrix> adjoints(nodes_.size());
    adjoints[loss.index] = Matrix(1, 1, 1.0);

    std::vector<bool> is_param(nodes_.size(), false);
    for (std::uint32_t p : param_nodes_) is_param[p] = true;

    for (std::uint32_t i = loss.index + 1; i-- > 0;) {
        Matrix& g = adjoints[i];
        if (g.size() == 0) continue;
        const Node& node = nodes_[i];
        switch (node.op) {
            case Op::constant:
            case Op::param: break;
            case Op::matmul: {
                const Matrix& a = nodes_[node.a].value;
                const Matrix& b = nodes_[node.b].value;
                accumulate(adjoints[node.a], affect::matmul(g, transpose(b)));
                accumulate(adjoints[node.b], affect::matmul(transpose(a), g));
                break;
            }
            case Op::add:
                accumulate(adjoints[node.a], g);
                accumulate(adjoints[node.b], g);
                break;
            case Op::sub:
                accumulate(adjoints[node.a], g);
                accumulate(adjoints[node.b], affect::scale(g, -1.0));
                break;
            case Op::mul:
                accumulate(adjoints[node.a], affect::mul(g, nodes_[node.b].value));
                accumulate(adjoints[node.b], affect::mul(g, nodes_[node.a].value));
                break;
            case Op::divide: {
                const Matrix& b = nodes_[node.b].value;
                accumulate(adjoints[node.a], affect::divide(g, b));
                // d/db (a/b) = -value/b
                accumulate(adjoints[node.b],
                           affect::scale(affect::divide(affect::mul(g, node.value), b), -1.0));
                break;
            }
            case Op::add_row: {
                accumulate(adjoints[node.a], g);
                Matrix col_sums(1, g.cols);
                for (std::size_t r = 0; r < g.rows; ++r) {
                    for (std::size_t c = 0; c < g.cols; ++c) {
                        col_sums.data[c] += g.data[r * g.cols + c];
                    }
                }
                accumulate(adjoints[node.b], col_sums);
                break;
            }
            case Op::scale:
                accumulate(adjoints[node.a], affect::scale(g, node.c0));
                break;
            case Op::relu: {
                const Matrix& x = nodes_[node.a].value;
                Matrix dx = g;
                for (std::size_t k = 0; k < dx.size(); ++k) {
                    if (x.data[k] <= 0.0) dx.data[k] = 0.0;
                }
                accumulate(adjoints[node.a], dx);
                break;
            }
            case Op::tanh: {
                Matrix dx = g;
                for (std::size_t k = 0; k < dx.size(); ++k) {
                    const double t = node.value.data[k];
                    dx.data[k] *= 1.0 - t * t;
                }
                accumulate(adjoints[node.a], dx);
                break;
            }
            case Op::sigmoid: {
                Matrix dx = g;
                for (std::size_t k = 0; k < dx.size(); ++k) {
                    const double s = node.value.data[k];
                    dx.data[k] *= s * (1.0 - s);
                }
                accumulate(adjoints[node.a], dx);
                break;
            }
            case Op::softmax_rows: {
                // per row: dz_j = s_j * (g_j - sum_k g_k s_k)
                const Matrix& s = node.value;
                Matrix dx(s.rows, s.cols);
                for (std::size_t r = 0; r < s.rows; ++r) {
                    const double* srow = s.data.data() + r * s.cols;
                    const double* grow = g.data.data() + r * s.cols;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < s.cols; ++c) dot += grow[c] * srow[c];
                    double* drow = dx.data.data() + r * s.cols;
                    for (std::size_t c = 0; c < s.cols; ++c) {
                        drow[c] = srow[c] * (grow[c] - dot);
                    }
                }
                accumulate(adjoints[node.a], dx);
                break;
            }
            case Op::log_softmax_rows: {
                // dz = g - softmax(z) * rowsum(g)
                const Matrix& lsm = node.value;
                Matrix dx = g;
                for (std::size_t r = 0; r < lsm.rows; ++r) {
                    const double* lrow = lsm.data.data() + r * lsm.cols;
                    double gsum = 0.0;
                    for (std::size_t c = 0; c < lsm.cols; ++c) {
                        gsum += g.data[r * lsm.cols + c];
                    }
                    double* drow = dx.data.data() + r * lsm.cols;
                    for (std::size_t c = 0; c < lsm.cols; ++c) {
                        drow[c] -= std::exp(lrow[c]) * gsum;
                    }
                }
                accumulate(adjoints[node.a], dx);
                break;
            }
            case Op::log:
                accumulate(adjoints[node.a], affect::divide(g, nodes_[node.a].value));
                break;
            case Op::clamp: {
                const Matrix& x = nodes_[node.a].value;
                Matrix dx = g;
                for (std::size_t k = 0; k < dx.size(); ++k) {
                    if (x.data[k] <= node.c0 || x.data[k] >= node.c1) dx.data[k] = 0.0;
                }
                accumulate(adjoints[node.a], dx);
                break;
            }
            case Op::sum: {
                const Matrix& x = nodes_[node.a].value;
                accumulate(adjoints[node.a], Matrix(x.rows, x.cols, g.data[0]));
                break;
            }
            case Op::mean: {
                const Matrix& x = nodes_[node.a].value;
                accumulate(adjoints[node.a],
                           Matrix(x.rows, x.cols, g.data[0] / static_cast<double>(x.size())));
                break;
            }
        }
        if (!is_param[i]) release(g);
    }

    std::vector<Matrix> grads;
    grads.reserve(param_nodes_.size());
    for (std::uint32_t p : param_nodes_) {
        Matrix& g = adjoints[p];
        if (g.size() == 0) {
            // Param unused by this loss: zero gradient of the param's shape.
            g = Matrix(nodes_[p].value.rows, nodes_[p].value.cols);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

std::string GradCheckReport::summary() const {
    std::ostringstream out;
    for (const GradCheckBlock& b : blocks) {
        out << (b.pass ? "pass" : "FAIL") << "  " << b.name
            << "  max_rel_err=" << b.max_rel_err;
        if (!b.finite) out << "  (non-finite values encountered)";
        out << "\n";
    }
    out << (pass ? "grad check passed" : "grad check FAILED") << " (tolerance " << tolerance
        << ", step " << step << ")\n";
    return out.str();
}

GradCheckReport grad_check(const LossBuilder& f, std::span<const Matrix> params,
                           std::span<const std::string> block_names, double tolerance,
                           double step) {
    if (params.size() != block_names.size()) {
        throw std::invalid_argument("grad_check: params and block_names sizes differ");
    }

    Tape tape;
    ValueId loss = f(tape, params);
    std::vector<Matrix> analytic = tape.backward(loss);
    if (analytic.size() != params.size()) {
        throw std::invalid_argument(
            "grad_check: loss builder registered " + std::to_string(analytic.size()) +
            " params, expected " + std::to_string(params.size()));
    }

    std::vector<Matrix> work(params.begin(), params.end());
    auto eval_loss = [&]() {
        Tape t;
        return t.scalar(f(t, work));
    };

    GradCheckReport report;
    report.tolerance = tolerance;
    report.step = step;
    report.pass = true;

    for (std::size_t b = 0; b < params.size(); ++b) {
        GradCheckBlock block;
        block.name = block_names[b];
        block.finite = all_finite(analytic[b]);
        for (std::size_t k = 0; k < work[b].size(); ++k) {
            const double saved = work[b].data[k];
            work[b].data[k] = saved + step;
            const double up = eval_loss();
            work[b].data[k] = saved - step;
            const double down = eval_loss();
            work[b].data[k] = saved;

            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[b].data[k];
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                block.finite = false;
                continue;
            }
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            block.max_rel_err = std::max(block.max_rel_err, rel);
        }
        block.pass = block.finite && block.max_rel_err < tolerance;
        report.pass = report.pass && block.pass;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace affect::ad
