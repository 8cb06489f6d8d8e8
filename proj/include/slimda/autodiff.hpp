#pragma once

// Tape-based reverse-mode automatic differentiation over 2-D tensors.
//
// A Graph records every operation in creation order, which is a topological
// order, so backward() is a single reverse sweep. Parameters enter a graph by
// reference (the caller keeps the storage alive and unmodified for the
// graph's lifetime) and their gradients are returned keyed by ParamId at the
// parameter's full shape. Anything added via constant() or detach() is
// outside the gradient flow.

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "slimda/tensor.hpp"

namespace slimda::ad {

using ParamId = std::size_t;
using Gradients = std::map<ParamId, Tensor>;

struct Var {
    static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
    std::size_t id = kInvalid;
    bool valid() const noexcept { return id != kInvalid; }
};

enum class BnMode { Train, Eval };

class Graph {
public:
    static constexpr double kBnEpsilon = 1e-5;
    static constexpr double kLogFloor = 1e-12;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Var constant(Tensor t);
    /// Like constant() but without copying; `t` must outlive the graph.
    Var constant_ref(const Tensor& t);
    Var constant_ref(Tensor&&) = delete;
    /// Differentiable leaf bound to external storage; `value` must outlive the graph.
    Var parameter(ParamId id, const Tensor& value);
    Var parameter(ParamId, Tensor&&) = delete;
    Var detach(Var v);

    Var matmul(Var a, Var b);
    /// Elementwise sum; `b` may also be a single row broadcast over the rows of `a`.
    Var add(Var a, Var b);
    Var scale(Var a, double factor);
    Var relu(Var a);
    Var log_softmax(Var x, int axis = 1);
    Var softmax(Var x, int axis = 1);
    /// -(1/rows) * sum(target * log_probs); differentiable in both arguments.
    Var cross_entropy(Var log_probs, Var target);
    Var slice(Var t, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
    Var slice_cols(Var t, std::size_t c0, std::size_t c1);
    Var slice_rows(Var t, std::size_t r0, std::size_t r1);
    Var concat(std::span<const Var> parts, int axis);
    /// Mean of all entries, as a 1-element tensor.
    Var mean(Var t);
    /// Per-row sum over columns [c0, c1); result is rows x 1.
    Var sum_cols(Var t, std::size_t c0, std::size_t c1);
    /// log(max(t, floor)); zero gradient where clamped.
    Var log_clamped(Var t, double floor = kLogFloor);
    /// Per-column normalization. Train: batch statistics (biased variance);
    /// Eval: the supplied running statistics, which must outlive the graph.
    Var batchnorm(Var x, Var gamma, Var beta, BnMode mode, const Tensor* running_mean = nullptr,
                  const Tensor* running_var = nullptr);

    const Tensor& value(Var v) const;
    double scalar(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    std::string_view op_name(Var v) const;

    /// Reverse sweep from a 1-element loss. Throws UsageError if called again
    /// without zero_grad().
    Gradients backward(Var loss);
    void zero_grad();
    /// Gradient accumulated at any node by the last backward(); empty if none flowed.
    std::optional<Tensor> grad(Var v) const;

private:
    struct Node {
        std::string_view op;
        std::vector<std::size_t> inputs;
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::optional<ParamId> param;
        std::function<void(Graph&, std::size_t)> backward_fn;

        const Tensor& value() const { return external ? *external : owned; }
    };

    Var push(std::string_view op, std::vector<std::size_t> inputs, Tensor out,
             std::function<void(Graph&, std::size_t)> backward_fn);
    const Node& node(Var v) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    Tensor& grad_slot(std::size_t id);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

} // namespace slimda::ad
