#pragma once

// Reverse-mode differentiation over a dynamic tape. A Tape is rebuilt for
// every forward pass: ops append entries, backward() walks them in reverse.
// Parameters are referenced, not copied, so the ParameterSet that owns them
// must outlive the tape and must not change while the tape is alive.

#include "stylealign/tensor.hpp"

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace stylealign {

using NodeId = std::size_t;
using ParamId = std::size_t;

struct NamedTensor {
    std::string name;
    Tensor value;
};

class ParameterSet {
  public:
    auto add(std::string name, Tensor value) -> ParamId;

    [[nodiscard]] auto size() const -> std::size_t {
        return params_.size();
    }
    auto operator[](ParamId id) -> Tensor & {
        return params_.at(id).value;
    }
    auto operator[](ParamId id) const -> const Tensor & {
        return params_.at(id).value;
    }
    [[nodiscard]] auto name(ParamId id) const -> const std::string & {
        return params_.at(id).name;
    }
    [[nodiscard]] auto find(const std::string &name) const -> std::optional<ParamId>;
    [[nodiscard]] auto entries() const -> const std::vector<NamedTensor> & {
        return params_;
    }
    [[nodiscard]] auto numel() const -> std::size_t;
    [[nodiscard]] auto all_finite() const -> bool;

    friend auto operator==(const ParameterSet &a, const ParameterSet &b) -> bool;

  private:
    std::vector<NamedTensor> params_;
};

enum class OpKind {
    matmul,
    add,
    sub,
    mul,
    add_bias,
    scale,
    add_scalar,
    transpose,
    gelu,
    sigmoid,
    log_sigmoid,
    exp,
    log_softmax,
    layer_norm,
    concat_rows,
    concat,
    slice_rows,
    gather_rows,
    pick,
    sum,
    mean,
    causal_mask,
};

auto op_name(OpKind kind) -> const char *;

struct TapeEntry {
    OpKind kind = OpKind::add;
    std::vector<NodeId> inputs;
    NodeId output = 0;
    std::vector<Tensor> saved;           // backward intermediates
    double scalar = 0.0;                 // scale factor, epsilon
    std::vector<std::size_t> indices;    // gather / pick ids, slice bounds
    std::size_t axis = 0;
};

class Tape;

// Handle to a tape node. Cheap to copy; valid while its tape lives.
class Var {
  public:
    Var(Tape *tape, NodeId id)
        : tape_(tape), id_(id) {}

    [[nodiscard]] auto tape() const -> Tape * {
        return tape_;
    }
    [[nodiscard]] auto id() const -> NodeId {
        return id_;
    }
    [[nodiscard]] auto value() const -> const Tensor &;
    [[nodiscard]] auto shape() const -> const Shape & {
        return value().shape();
    }

  private:
    Tape *tape_;
    NodeId id_;
};

// d(loss)/d(leaf) for every differentiable leaf on the tape. Leaves the
// loss does not depend on hold exact zeros.
class GradientMap {
  public:
    [[nodiscard]] auto operator[](Var leaf) const -> const Tensor &;
    [[nodiscard]] auto param(ParamId id) const -> const Tensor *;
    // One gradient per parameter, zero for parameters absent from the tape.
    [[nodiscard]] auto to_vector(const ParameterSet &params) const -> std::vector<Tensor>;

  private:
    friend class Tape;
    std::unordered_map<NodeId, Tensor> by_node_;
    std::unordered_map<ParamId, NodeId> param_nodes_;
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape &) = delete;
    auto operator=(const Tape &) -> Tape & = delete;

    auto constant(Tensor value) -> Var;
    auto leaf(Tensor value) -> Var;
    // Registers `value` as parameter `id`; repeated calls return the same node.
    auto parameter(const Tensor &value, ParamId id) -> Var;
    auto parameter(const ParameterSet &params, ParamId id) -> Var {
        return parameter(params[id], id);
    }

    [[nodiscard]] auto value(NodeId id) const -> const Tensor &;
    [[nodiscard]] auto requires_grad(NodeId id) const -> bool {
        return nodes_.at(id).requires_grad;
    }
    [[nodiscard]] auto entries() const -> std::span<const TapeEntry> {
        return entries_;
    }
    [[nodiscard]] auto node_count() const -> std::size_t {
        return nodes_.size();
    }

    auto backward(Var loss) const -> GradientMap;

    // Re-evaluates every entry from its recorded inputs and reports whether
    // all outputs come out bit-identical.
    [[nodiscard]] auto replay_matches() const -> bool;

    // Internal: append an entry whose output is computed from its inputs.
    auto record(TapeEntry entry) -> Var;

  private:
    struct Node {
        Tensor value;
        const Tensor *external = nullptr;
        bool requires_grad = false;
        bool is_leaf = false;
    };
    std::deque<Node> nodes_;    // deque: references from value() stay valid
    std::vector<TapeEntry> entries_;
    std::unordered_map<ParamId, NodeId> param_nodes_;
};

// Differentiable primitives. All inputs of one call must share a tape.
auto matmul(Var a, Var b) -> Var;
auto add(Var a, Var b) -> Var;
auto sub(Var a, Var b) -> Var;
auto mul(Var a, Var b) -> Var;
// x is [m x n] or [n]; bias is [n].
auto add_bias(Var x, Var bias) -> Var;
auto scale(Var x, double factor) -> Var;
auto add_scalar(Var x, double value) -> Var;
auto transpose(Var x) -> Var;
// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
auto gelu(Var x) -> Var;
auto sigmoid(Var x) -> Var;
auto log_sigmoid(Var x) -> Var;
auto exp(Var x) -> Var;
// axis 0 or 1 for matrices, 0 for vectors.
auto log_softmax(Var x, std::size_t axis) -> Var;
// Normalizes each row over the last axis. gain and bias are [n].
auto layer_norm(Var x, Var gain, Var bias, double epsilon) -> Var;
auto concat_rows(std::span<const Var> parts) -> Var;
// Flattens every part and joins them into one vector.
auto concat(std::span<const Var> parts) -> Var;
auto slice_rows(Var x, std::size_t begin, std::size_t count) -> Var;
// Rows of `table` selected by `ids`, giving [ids.size() x cols].
auto gather_rows(Var table, std::span<const std::size_t> ids) -> Var;
// out[i] = x[i, ids[i]] for a [m x n] matrix, giving [m].
auto pick(Var x, std::span<const std::size_t> ids) -> Var;
auto sum(Var x) -> Var;
auto mean(Var x) -> Var;
// Replaces entries above the diagonal of a square matrix with kMaskedLogit.
auto causal_mask(Var x) -> Var;

inline constexpr double kMaskedLogit = -1e30;

// Plain-tensor forward evaluations shared by the tape and by tests.
auto gelu_scalar(double x) -> double;
auto gelu_derivative(double x) -> double;
auto sigmoid_scalar(double x) -> double;
auto log_sigmoid_scalar(double x) -> double;

}    // namespace stylealign
