#pragma once

// Reverse-mode differentiation over a small, fixed vocabulary of vector
// operations: exactly what the adapter + classifier graph needs.
//
// Every node holds a Matrix value (vectors are 1 x n). Leaves are either
// trainable parameters or frozen constants; gradients are produced only for
// parameters and only flow through nodes that depend on a parameter.

#include "sgds/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sgds {

struct NodeId {
    std::uint32_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
    friend auto operator<=>(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
    Constant,
    Parameter,
    Affine,        // x (1 x in) * W (in x out) [+ b (1 x out)]
    RowDot,        // W (out x in) * x^T, as a 1 x out row
    Relu,
    Add,
    Mask,          // x ⊙ m for a constant mask m
    Concat,        // [a, b]
    SoftmaxXent,   // -log softmax(logits)[label]
    Sum,           // sum of all entries
    WeightedSum,   // sum_i w_i * s_i over scalar nodes
    GramPenalty,   // ||W * P^T||_F^2 for a constant P
};

const char* op_name(OpKind kind) noexcept;

// One gradient per trainable leaf, in leaf creation order.
class GradientSet {
public:
    const Matrix& at(NodeId leaf) const;
    bool contains(NodeId leaf) const noexcept;
    std::size_t size() const noexcept { return leaves_.size(); }
    std::span<const NodeId> leaves() const noexcept { return leaves_; }

private:
    friend class Tape;
    std::vector<NodeId> leaves_;
    std::vector<Matrix> grads_;
};

class Tape {
public:
    NodeId constant(Matrix value);
    NodeId parameter(Matrix value);

    NodeId affine(NodeId x, NodeId w);
    NodeId affine(NodeId x, NodeId w, NodeId bias);
    NodeId row_dot(NodeId x, NodeId w);
    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId mask(NodeId x, std::vector<double> m);
    NodeId concat(NodeId a, NodeId b);
    NodeId softmax_cross_entropy(NodeId logits, std::size_t label);
    NodeId sum(NodeId x);
    NodeId weighted_sum(std::span<const NodeId> scalars, std::span<const double> weights);
    NodeId gram_penalty(NodeId w, Matrix other);

    const Matrix& value(NodeId id) const;
    double scalar(NodeId id) const;
    OpKind kind(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t count(OpKind kind) const noexcept;

    // Overwrite a leaf's value; call replay() afterwards to refresh dependents.
    void set_leaf(NodeId leaf, Matrix value);

    // Recompute every non-leaf node from the current leaf values, in record order.
    void replay();

    // Throws ContractViolation for a non-scalar loss and NumericError (carrying
    // the op index) when a non-finite value appears.
    GradientSet backward(NodeId loss) const;

private:
    struct Node {
        OpKind kind = OpKind::Constant;
        std::uint32_t a = 0;
        std::uint32_t b = 0;
        std::uint32_t c = 0;
        bool has_bias = false;
        bool needs_grad = false;
        Matrix value{};
        std::vector<double> aux{};      // mask, weights
        std::vector<std::uint32_t> list{}; // weighted_sum inputs
        Matrix other{};                 // gram_penalty constant
        std::size_t label = 0;
    };

    NodeId push(Node n);
    const Node& node(NodeId id) const;
    void compute(Node& n) const;

    std::vector<Node> nodes_;
};

// -log softmax(logits)[label], max-subtracted.
double cross_entropy(std::span<const double> logits, std::size_t label);
Vector softmax(std::span<const double> logits);

}  // namespace sgds
