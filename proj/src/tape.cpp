#include "sgds/tape.hpp"

#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace sgds {

const char* op_name(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::Constant: return "constant";
        case OpKind::Parameter: return "parameter";
        case OpKind::Affine: return "affine";
        case OpKind::RowDot: return "row_dot";
        case OpKind::Relu: return "relu";
        case OpKind::Add: return "add";
        case OpKind::Mask: return "mask";
        case OpKind::Concat: return "concat";
        case OpKind::SoftmaxXent: return "softmax_xent";
        case OpKind::Sum: return "sum";
        case OpKind::WeightedSum: return "weighted_sum";
        case OpKind::GramPenalty: return "gram_penalty";
    }
    return "?";
}

Vector softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax: empty logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
    require(!logits.empty(), "cross_entropy: empty logits");
    require(label < logits.size(), "cross_entropy: label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return std::log(z) - (logits[label] - mx);
}

const Matrix& GradientSet::at(NodeId leaf) const {
    for (std::size_t i = 0; i < leaves_.size(); ++i)
        if (leaves_[i] == leaf) return grads_[i];
    throw ContractViolation("GradientSet::at: node is not a trainable leaf");
}

bool GradientSet::contains(NodeId leaf) const noexcept {
    return std::find(leaves_.begin(), leaves_.end(), leaf) != leaves_.end();
}

NodeId Tape::push(Node n) {
    compute(n);
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(NodeId id) const {
    require(id.index < nodes_.size(), "Tape: node id out of range");
    return nodes_[id.index];
}

NodeId Tape::constant(Matrix value) {
    Node n{.kind = OpKind::Constant};
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::parameter(Matrix value) {
    Node n{.kind = OpKind::Parameter};
    n.value = std::move(value);
    n.needs_grad = true;
    return push(std::move(n));
}

NodeId Tape::affine(NodeId x, NodeId w) {
    const Node& nx = node(x);
    const Node& nw = node(w);
    require(nx.value.rows() == 1 && nx.value.cols() == nw.value.rows(), "affine: shape mismatch");
    Node n{.kind = OpKind::Affine, .a = x.index, .b = w.index};
    n.needs_grad = nx.needs_grad || nw.needs_grad;
    return push(std::move(n));
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId bias) {
    const Node& nx = node(x);
    const Node& nw = node(w);
    const Node& nb = node(bias);
    require(nx.value.rows() == 1 && nx.value.cols() == nw.value.rows(), "affine: shape mismatch");
    require(nb.value.rows() == 1 && nb.value.cols() == nw.value.cols(), "affine: bias shape mismatch");
    Node n{.kind = OpKind::Affine, .a = x.index, .b = w.index, .c = bias.index, .has_bias = true};
    n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

NodeId Tape::row_dot(NodeId x, NodeId w) {
    const Node& nx = node(x);
    const Node& nw = node(w);
    require(nx.value.rows() == 1 && nx.value.cols() == nw.value.cols(), "row_dot: shape mismatch");
    Node n{.kind = OpKind::RowDot, .a = x.index, .b = w.index};
    n.needs_grad = nx.needs_grad || nw.needs_grad;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    Node n{.kind = OpKind::Relu, .a = x.index};
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    require(na.value.same_shape(nb.value), "add: shape mismatch");
    Node n{.kind = OpKind::Add, .a = a.index, .b = b.index};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

NodeId Tape::mask(NodeId x, std::vector<double> m) {
    const Node& nx = node(x);
    require(m.size() == nx.value.size(), "mask: length mismatch");
    Node n{.kind = OpKind::Mask, .a = x.index};
    n.aux = std::move(m);
    n.needs_grad = nx.needs_grad;
    return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    require(na.value.rows() == 1 && nb.value.rows() == 1, "concat: row vectors required");
    Node n{.kind = OpKind::Concat, .a = a.index, .b = b.index};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::size_t label) {
    const Node& nl = node(logits);
    require(nl.value.rows() == 1 && !nl.value.empty(), "softmax_cross_entropy: empty logits");
    require(label < nl.value.cols(), "softmax_cross_entropy: label out of range");
    Node n{.kind = OpKind::SoftmaxXent, .a = logits.index};
    n.label = label;
    n.needs_grad = nl.needs_grad;
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    Node n{.kind = OpKind::Sum, .a = x.index};
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::weighted_sum(std::span<const NodeId> scalars, std::span<const double> weights) {
    require(scalars.size() == weights.size(), "weighted_sum: weight count mismatch");
    Node n{.kind = OpKind::WeightedSum};
    for (NodeId s : scalars) {
        const Node& ns = node(s);
        require(ns.value.size() == 1, "weighted_sum: inputs must be scalar");
        n.list.push_back(s.index);
        n.needs_grad = n.needs_grad || ns.needs_grad;
    }
    n.aux.assign(weights.begin(), weights.end());
    return push(std::move(n));
}

NodeId Tape::gram_penalty(NodeId w, Matrix other) {
    const Node& nw = node(w);
    require(nw.value.cols() == other.cols(), "gram_penalty: column counts differ");
    Node n{.kind = OpKind::GramPenalty, .a = w.index};
    n.other = std::move(other);
    n.needs_grad = nw.needs_grad;
    return push(std::move(n));
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar(NodeId id) const {
    const Matrix& v = node(id).value;
    require(v.size() == 1, "Tape::scalar: node is not scalar");
    return v.flat()[0];
}

OpKind Tape::kind(NodeId id) const { return node(id).kind; }

std::size_t Tape::count(OpKind kind) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [kind](const Node& n) { return n.kind == kind; }));
}

void Tape::set_leaf(NodeId leaf, Matrix value) {
    Node& n = nodes_.at(leaf.index);
    require(n.kind == OpKind::Constant || n.kind == OpKind::Parameter, "set_leaf: not a leaf");
    require(n.value.same_shape(value), "set_leaf: shape mismatch");
    n.value = std::move(value);
}

void Tape::replay() {
    for (Node& n : nodes_) compute(n);
}

void Tape::compute(Node& n) const {
    auto val = [this](std::uint32_t i) -> const Matrix& { return nodes_[i].value; };
    switch (n.kind) {
        case OpKind::Constant:
        case OpKind::Parameter:
            return;
        case OpKind::Affine: {
            const Matrix& w = val(n.b);
            Vector y = vec_mat(val(n.a).flat(), w);
            if (n.has_bias) {
                const auto b = val(n.c).flat();
                for (std::size_t j = 0; j < y.size(); ++j) y[j] += b[j];
            }
            const std::size_t cols = y.size();
            n.value = Matrix(1, cols, std::move(y));
            return;
        }
        case OpKind::RowDot: {
            const Matrix& w = val(n.b);
            const auto x = val(n.a).flat();
            Matrix out(1, w.rows());
            for (std::size_t r = 0; r < w.rows(); ++r) out(0, r) = kernels::dot(w.row(r), x);
            n.value = std::move(out);
            return;
        }
        case OpKind::Relu: {
            const Matrix& x = val(n.a);
            Matrix out(x.rows(), x.cols());
            kernels::relu(x.flat(), out.flat());
            n.value = std::move(out);
            return;
        }
        case OpKind::Add: {
            Matrix out = val(n.a);
            kernels::axpy(1.0, val(n.b).flat(), out.flat());
            n.value = std::move(out);
            return;
        }
        case OpKind::Mask: {
            Matrix out = val(n.a);
            auto o = out.flat();
            for (std::size_t j = 0; j < o.size(); ++j) o[j] *= n.aux[j];
            n.value = std::move(out);
            return;
        }
        case OpKind::Concat: {
            const auto a = val(n.a).flat();
            const auto b = val(n.b).flat();
            std::vector<double> joined(a.begin(), a.end());
            joined.insert(joined.end(), b.begin(), b.end());
            const std::size_t cols = joined.size();
            n.value = Matrix(1, cols, std::move(joined));
            return;
        }
        case OpKind::SoftmaxXent:
            n.value = Matrix(1, 1, cross_entropy(val(n.a).flat(), n.label));
            return;
        case OpKind::Sum: {
            double s = 0.0;
            for (double v : val(n.a).flat()) s += v;
            n.value = Matrix(1, 1, s);
            return;
        }
        case OpKind::WeightedSum: {
            double s = 0.0;
            for (std::size_t i = 0; i < n.list.size(); ++i) s += n.aux[i] * val(n.list[i]).flat()[0];
            n.value = Matrix(1, 1, s);
            return;
        }
        case OpKind::GramPenalty:
            n.value = Matrix(1, 1, matmul_bt(val(n.a), n.other).squared_norm());
            return;
    }
}

GradientSet Tape::backward(NodeId loss) const {
    const Node& nl = node(loss);
    require(nl.value.size() == 1, "backward: loss node must be scalar");

    std::vector<Matrix> grads(nodes_.size());
    auto grad_of = [&](std::uint32_t i) -> Matrix& {
        if (grads[i].empty()) grads[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
        return grads[i];
    };

    if (nl.needs_grad) grads[loss.index] = Matrix(1, 1, 1.0);

    for (std::size_t idx = loss.index + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        if (!n.needs_grad || grads[idx].empty()) continue;
        if (!n.value.all_finite()) throw NumericError(std::string("non-finite value in ") + op_name(n.kind), idx);
        const Matrix& g = grads[idx];
        if (!g.all_finite()) throw NumericError(std::string("non-finite gradient at ") + op_name(n.kind), idx);
        const auto gf = g.flat();

        switch (n.kind) {
            case OpKind::Constant:
            case OpKind::Parameter:
                break;
            case OpKind::Affine: {
                const Node& x = nodes_[n.a];
                const Node& w = nodes_[n.b];
                if (x.needs_grad) {
                    auto dx = grad_of(n.a).flat();
                    for (std::size_t i = 0; i < w.value.rows(); ++i) dx[i] += kernels::dot(w.value.row(i), gf);
                }
                if (w.needs_grad) {
                    Matrix& dw = grad_of(n.b);
                    const auto xv = x.value.flat();
                    for (std::size_t i = 0; i < xv.size(); ++i)
                        if (xv[i] != 0.0) kernels::axpy(xv[i], gf, dw.row(i));
                }
                if (n.has_bias && nodes_[n.c].needs_grad) kernels::axpy(1.0, gf, grad_of(n.c).flat());
                break;
            }
            case OpKind::RowDot: {
                const Node& x = nodes_[n.a];
                const Node& w = nodes_[n.b];
                if (x.needs_grad) {
                    auto dx = grad_of(n.a).flat();
                    for (std::size_t r = 0; r < w.value.rows(); ++r) kernels::axpy(gf[r], w.value.row(r), dx);
                }
                if (w.needs_grad) {
                    Matrix& dw = grad_of(n.b);
                    for (std::size_t r = 0; r < w.value.rows(); ++r) kernels::axpy(gf[r], x.value.flat(), dw.row(r));
                }
                break;
            }
            case OpKind::Relu: {
                const auto xv = nodes_[n.a].value.flat();
                auto dx = grad_of(n.a).flat();
                for (std::size_t j = 0; j < xv.size(); ++j)
                    if (xv[j] > 0.0) dx[j] += gf[j];
                break;
            }
            case OpKind::Add:
                if (nodes_[n.a].needs_grad) kernels::axpy(1.0, gf, grad_of(n.a).flat());
                if (nodes_[n.b].needs_grad) kernels::axpy(1.0, gf, grad_of(n.b).flat());
                break;
            case OpKind::Mask: {
                auto dx = grad_of(n.a).flat();
                for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += gf[j] * n.aux[j];
                break;
            }
            case OpKind::Concat: {
                const std::size_t na = nodes_[n.a].value.size();
                if (nodes_[n.a].needs_grad) kernels::axpy(1.0, gf.subspan(0, na), grad_of(n.a).flat());
                if (nodes_[n.b].needs_grad) kernels::axpy(1.0, gf.subspan(na), grad_of(n.b).flat());
                break;
            }
            case OpKind::SoftmaxXent: {
                Vector p = softmax(nodes_[n.a].value.flat());
                p[n.label] -= 1.0;
                kernels::axpy(gf[0], p, grad_of(n.a).flat());
                break;
            }
            case OpKind::Sum: {
                auto dx = grad_of(n.a).flat();
                for (double& v : dx) v += gf[0];
                break;
            }
            case OpKind::WeightedSum:
                for (std::size_t i = 0; i < n.list.size(); ++i)
                    if (nodes_[n.list[i]].needs_grad) grad_of(n.list[i]).flat()[0] += n.aux[i] * gf[0];
                break;
            case OpKind::GramPenalty: {
                // d/dW ||W P^T||^2 = 2 (W P^T) P
                const Matrix prod = matmul(matmul_bt(nodes_[n.a].value, n.other), n.other);
                kernels::axpy(2.0 * gf[0], prod.flat(), grad_of(n.a).flat());
                break;
            }
        }
    }

    GradientSet out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].kind != OpKind::Parameter) continue;
        out.leaves_.push_back(NodeId{static_cast<std::uint32_t>(i)});
        out.grads_.push_back(grads[i].empty() ? Matrix(nodes_[i].value.rows(), nodes_[i].value.cols())
                                              : std::move(grads[i]));
        if (!out.grads_.back().all_finite()) throw NumericError("non-finite parameter gradient", i);
    }
    return out;
}

}  // namespace sgds
