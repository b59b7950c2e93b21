// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "igloo/parameters.hpp"
#include "igloo/rng.hpp"
#include "igloo/tensor.hpp"

namespace igloo {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const noexcept { return id_; }
    Tape& tape() const { return *tape_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

struct Node;

/// Receives the gradient of the node's output and accumulates into the
/// gradients of its inputs. Entries of `input_grads` are null for inputs
/// that do not need a gradient.
using BackwardFn = std::function<void(const Tape& tape, const Node& self, const Tensor& grad_out,
                                      std::span<Tensor* const> input_grads)>;

struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string parameter; // non-empty for trainable leaves
    std::size_t saved_elements = 0;
};

/// Eager reverse-mode record. Ops append nodes in execution order, so inputs
/// always precede the nodes that use them. A tape belongs to one thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(const std::string& name, Tensor value);
    Var parameter(const ParameterSet& params, const std::string& name) { return parameter(name, params.get(name)); }

    /// Appends an op node. `saved_elements` counts any extra state the
    /// backward closure keeps beyond the node values (for memory accounting).
    Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward,
               std::size_t saved_elements = 0);
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward,
               std::size_t saved_elements = 0) {
        return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward),
                      saved_elements);
    }

    /// Gradient of <seed, output> with respect to every trainable leaf.
    /// Visits each node at most once, in reverse recording order.
    Gradients backward(const Var& output, const Tensor& seed) const;
    /// backward() of a scalar output with seed 1.
    Gradients backward(const Var& scalar_output) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }

    /// Elements held by the tape: every node value plus saved backward state.
    std::size_t stored_elements() const;

private:
    Var push(Node node);
    std::vector<Node> nodes_;
};

/// Differentiable ops. Forward values come from igloo::ops.
namespace ad {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, real factor);
Var relu(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
Var sum_axes(const Var& x, std::vector<std::size_t> axes);
Var tile(const Var& x, std::size_t axis, std::size_t times);
Var transpose(const Var& x, std::vector<std::size_t> perm);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);
Var matmul(const Var& a, const Var& b);
Var gather_time(const Var& f, std::vector<std::size_t> indices);
Var causal_conv1d(const Var& x, const Var& kernel, const Var& bias);
Var softmax(const Var& x);

/// Whole-channel dropout on [L, K] or [B, L, K]: each (batch, channel)
/// column is zeroed with probability `rate`, survivors scaled by
/// 1/(1-rate). Identity when not training or rate == 0.
Var spatial_dropout(const Var& f, real rate, bool training, Rng& rng);

/// Mean softmax cross-entropy of logits [N, C] against class ids, fused with
/// the softmax. Throws DataError for labels outside [0, C).
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

/// Mean squared error against a constant target of the same shape.
Var mse(const Var& prediction, const Tensor& target);

/// Identity forward; multiplies the incoming gradient by `factor` on the
/// way back. factor == 1 is a no-op node; other values deliberately break
/// the chain rule (used to exercise the gradient checker).
Var scale_gradient(const Var& x, real factor);

/// Dispatch by op name for parameter-free ops ("relu", "softmax", "sum",
/// "mean", "add", "sub", "mul", "matmul"). Unknown names raise
/// UnsupportedOpError.
Var apply(std::string_view op, std::span<const Var> inputs);

} // namespace ad

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// A tensor whose analytic and numeric gradients both stay below this
    /// magnitude is reported as vanishing; its relative error is noise.
    double vanishing_threshold = 1e-9;
    /// Check at most this many randomly chosen elements per tensor (0 = all).
    std::size_t max_elements_per_tensor = 0;
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0;
    double max_abs_analytic = 0;
    double max_abs_numeric = 0;
    bool vanishing = false;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool passed = true;
    double max_rel_error = 0;

    const GradCheckEntry& entry(const std::string& name) const;
};

/// Builds a scalar loss on a fresh tape from the given parameters.
using LossBuilder = std::function<Var(Tape&, const ParameterSet&)>;

/// Compares backward() against central differences,
/// rel = |a - n| / max(|a|, |n|, 1e-8). Non-scalar losses raise ShapeError.
GradCheckReport grad_check(const LossBuilder& build, ParameterSet params, const GradCheckOptions& options = {});

} // namespace igloo
