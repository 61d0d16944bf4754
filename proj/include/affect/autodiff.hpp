#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "affect/matrix.hpp"

namespace affect::ad {

/// Handle to a value recorded on a Tape.
struct ValueId {
    std::uint32_t index = 0;
};

/// Single-threaded tape of matrix primitives. Records every forward result so
/// the backward pass can replay the graph in strict reverse order. Distinct
/// tapes are independent and may live on distinct threads; recorded matrices
/// are never mutated.
class Tape {
public:
    /// Constant leaf (inputs, labels, selector matrices). Receives no gradient.
    ValueId constant(Matrix value);
    /// Trainable leaf. backward() returns one gradient matrix per param, in
    /// registration order.
    ValueId param(Matrix value);

    ValueId matmul(ValueId a, ValueId b);
    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId divide(ValueId a, ValueId b);
    ValueId add_row(ValueId a, ValueId row);
    ValueId scale(ValueId a, double c);
    ValueId relu(ValueId a);
    ValueId tanh(ValueId a);
    ValueId sigmoid(ValueId a);
    ValueId softmax_rows(ValueId a);
    ValueId log_softmax_rows(ValueId a);
    ValueId log(ValueId a);
    ValueId clamp(ValueId a, double lo, double hi);
    ValueId sum(ValueId a);
    ValueId mean(ValueId a);

    /// Recorded values live in stable storage: the returned reference stays
    /// valid while the tape exists, including across later op recordings.
    const Matrix& value(ValueId id) const;
    double scalar(ValueId id) const;

    /// Reverse-mode sweep from a scalar loss node. Visits operations in strict
    /// reverse recording order; adjoint buffers of non-parameter intermediates
    /// are released as soon as they have been consumed. Returns one gradient
    /// per registered param.
    std::vector<Matrix> backward(ValueId loss) const;

    /// Recomputes every node from the leaves and checks the recorded values
    /// are reproduced bit-exactly.
    bool verify_replay() const;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t param_count() const { return param_nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        constant, param, matmul, add, sub, mul, divide, add_row, scale,
        relu, tanh, sigmoid, softmax_rows, log_softmax_rows, log, clamp,
        sum, mean,
    };

    struct Node {
        Op op;
        std::uint32_t a = 0;
        std::uint32_t b = 0;
        double c0 = 0.0;  // scale factor / clamp lo
        double c1 = 0.0;  // clamp hi
        Matrix value;
    };

    ValueId push(Node node);
    ValueId unary(Op op, ValueId a, Matrix value, double c0 = 0.0, double c1 = 0.0);
    ValueId binary(Op op, ValueId a, ValueId b, Matrix value);
    const Matrix& operand(std::uint32_t i) const { return nodes_[i].value; }
    static Matrix eval(const Node& node, const Matrix* a, const Matrix* b);

    std::deque<Node> nodes_;  // deque: stable value addresses under push_back
    std::vector<std::uint32_t> param_nodes_;
};

struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0.0;
    bool finite = true;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double tolerance = 0.0;
    double step = 0.0;
    bool pass = false;

    std::string summary() const;
};

/// Builds a scalar loss on the given tape from the supplied parameter blocks.
/// Must be deterministic for fixed blocks and must register the blocks as
/// tape params in order.
using LossBuilder = std::function<ValueId(Tape&, std::span<const Matrix>)>;

/// Compares analytic gradients against central finite differences
/// (default step 1e-5), reporting the max relative error per parameter block.
/// Relative error uses a unit floor: |a-n| / max(1, |a|, |n|).
GradCheckReport grad_check(const LossBuilder& f, std::span<const Matrix> params,
                           std::span<const std::string> block_names, double tolerance,
                           double step = 1e-5);

}  // namespace affect::ad
