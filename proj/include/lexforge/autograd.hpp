#pragma once

#include "lexforge/tensor.hpp"
#include "lexforge/tokenizer.hpp"

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace lexforge {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    const Shape& shape() const;
    std::span<const double> value() const;
    bool requires_grad() const;
    double item() const;
    Tensor to_tensor() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so walking them
// backwards is a valid topological order.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaf bound to a tensor. Gradients flow back into `t.grad()` when
    // `t.requires_grad()`.
    Var param(Tensor& t);
    // Read-only leaf; never receives gradient.
    Var param(const Tensor& t);
    Var constant(Tensor value);

    // Accumulates d(loss)/d(param) into every trainable bound tensor. A second
    // call without reset() throws DoubleBackward.
    void backward(Var loss);
    void reset();
    std::size_t node_count() const noexcept { return nodes_.size(); }

    // ---- op-author interface ----
    Var record(Shape shape, std::vector<double> value, std::vector<std::size_t> parents, BackwardFn fn);
    const Shape& shape(std::size_t id) const { return nodes_[id]->shape; }
    std::span<const double> value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }
    // Gradient accumulator for node `id`; empty when the node needs no gradient.
    std::span<double> grad(std::size_t id);
    const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id]->parents; }

private:
    struct Node {
        Shape shape;
        std::vector<double> own;
        const double* external = nullptr;
        std::size_t length = 0;
        std::vector<double> grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Tensor* sink = nullptr;
        bool requires_grad = false;
    };

    std::vector<std::unique_ptr<Node>> nodes_;
    bool consumed_ = false;
};

// Differentiable primitives. All matrices are [rows, cols] row-major; a
// weight `w` of shape [out, in] acts as x -> x * w^T.
namespace ops {

Var add(Var a, Var b);
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var matmul_nt(Var x, Var w);
Var embedding(Var table, std::span<const TokenId> ids);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var x);
// Inverted dropout; the mask is drawn from `rng` and treated as a constant.
Var dropout(Var x, double p, std::mt19937_64& rng);
// Multi-head causal self-attention over [T, d] projections. `key_valid`
// (empty = all valid) removes keys, e.g. padding, from every query.
Var causal_attention(Var q, Var k, Var v, std::size_t heads, std::span<const bool> key_valid = {});
Var sum(Var x);
Var mean(std::span<const Var> scalars);

struct Target {
    std::size_t row = 0;
    TokenId token = 0;
};
// Mean over targets of -log softmax(logits[row])[token].
Var mean_nll(Var logits, std::span<const Target> targets);

}  // namespace ops

}  // namespace lexforge
