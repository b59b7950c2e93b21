// SPDX-License-Identifier: Apache-2.0
#include "igloo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "igloo/ops.hpp"

namespace igloo {

const Tensor& Var::value() const {
    if (tape_ == nullptr) {
        throw Error("use of an unbound Var");
    }
    return tape_->value(id_);
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::parameter(const std::string& name, Tensor value) {
    Node n;
    n.op = "parameter";
    n.value = std::move(value);
    n.requires_grad = true;
    n.parameter = name;
    return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward,
                 std::size_t saved_elements) {
    Node n;
    n.op = std::string(op);
    n.value = std::move(value);
    n.saved_elements = saved_elements;
    for (const auto& v : inputs) {
        if (v.tape_ != this) {
            throw Error("op '" + n.op + "' mixes values from different tapes");
        }
        n.inputs.push_back(v.id_);
        n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
    }
    if (n.requires_grad) {
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

std::size_t Tape::stored_elements() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) {
        total += n.value.size() + n.saved_elements;
    }
    return total;
}

Gradients Tape::backward(const Var& output, const Tensor& seed) const {
    if (output.tape_ != this) {
        throw Error("backward: output belongs to another tape");
    }
    const std::size_t out = output.id_;
    if (seed.shape() != nodes_[out].value.shape()) {
        throw ShapeError("backward: seed shape " + to_string(seed.shape()) + " != output shape " +
                         to_string(nodes_[out].value.shape()));
    }
    std::vector<std::optional<Tensor>> grads(out + 1);
    grads[out] = seed;
    Gradients result;
    std::vector<Tensor*> input_grads;
    for (std::size_t id = out + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!grads[id] || !n.requires_grad) {
            continue;
        }
        if (!n.parameter.empty()) {
            auto it = result.find(n.parameter);
            if (it == result.end()) {
                result.emplace(n.parameter, std::move(*grads[id]));
            } else {
                it->second = ops::add(it->second, *grads[id]);
            }
            grads[id].reset();
            continue;
        }
        if (!n.backward) {
            continue;
        }
        input_grads.clear();
        for (auto in : n.inputs) {
            if (!nodes_[in].requires_grad) {
                input_grads.push_back(nullptr);
                continue;
            }
            if (!grads[in]) {
                grads[in].emplace(nodes_[in].value.shape());
            }
            input_grads.push_back(&*grads[in]);
        }
        n.backward(*this, n, *grads[id], input_grads);
        grads[id].reset();
    }
    for (std::size_t id = 0; id <= out; ++id) {
        const Node& n = nodes_[id];
        if (!n.parameter.empty() && result.find(n.parameter) == result.end()) {
            result.emplace(n.parameter, Tensor(n.value.shape()));
        }
    }
    return result;
}

Gradients Tape::backward(const Var& scalar_output) const {
    if (scalar_output.value().size() != 1) {
        throw ShapeError("backward: output of shape " + to_string(scalar_output.shape()) +
                         " is not a scalar; pass a seed");
    }
    return backward(scalar_output, Tensor(scalar_output.shape(), real{1}));
}

namespace {

void accumulate(Tensor* dst, const Tensor& g) {
    if (dst == nullptr) {
        return;
    }
    if (dst->shape() != g.shape()) {
        throw ShapeError("gradient shape " + to_string(g.shape()) + " does not match " + to_string(dst->shape()));
    }
    real* d = dst->raw();
    const real* s = g.raw();
    for (std::size_t i = 0; i < g.size(); ++i) {
        d[i] += s[i];
    }
}

void accumulate_scaled(Tensor* dst, const Tensor& g, real factor) {
    if (dst == nullptr) {
        return;
    }
    real* d = dst->raw();
    const real* s = g.raw();
    for (std::size_t i = 0; i < g.size(); ++i) {
        d[i] += factor * s[i];
    }
}

Tensor broadcast_to(const Tensor& t, const Shape& shape) { return ops::add(Tensor(shape), t); }

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        inv[perm.at(i)] = i;
    }
    return inv;
}

} // namespace

namespace ad {

Var add(const Var& a, const Var& b) {
    return a.tape().record("add", ops::add(a.value(), b.value()), {a, b},
                           [](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
                               if (in[0]) accumulate(in[0], ops::sum_to_shape(g, t.value(self.inputs[0]).shape()));
                               if (in[1]) accumulate(in[1], ops::sum_to_shape(g, t.value(self.inputs[1]).shape()));
                           });
}

Var sub(const Var& a, const Var& b) {
    return a.tape().record("sub", ops::sub(a.value(), b.value()), {a, b},
                           [](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
                               if (in[0]) accumulate(in[0], ops::sum_to_shape(g, t.value(self.inputs[0]).shape()));
                               if (in[1])
                                   accumulate_scaled(in[1], ops::sum_to_shape(g, t.value(self.inputs[1]).shape()), -1);
                           });
}

Var mul(const Var& a, const Var& b) {
    return a.tape().record("mul", ops::mul(a.value(), b.value()), {a, b},
                           [](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
                               const Tensor& av = t.value(self.inputs[0]);
                               const Tensor& bv = t.value(self.inputs[1]);
                               if (in[0]) accumulate(in[0], ops::sum_to_shape(ops::mul(g, bv), av.shape()));
                               if (in[1]) accumulate(in[1], ops::sum_to_shape(ops::mul(g, av), bv.shape()));
                           });
}

Var scale(const Var& x, real factor) {
    return x.tape().record("scale", ops::scale(x.value(), factor), {x},
                           [factor](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               accumulate_scaled(in[0], g, factor);
                           });
}

Var relu(const Var& x) {
    return x.tape().record("relu", ops::relu(x.value()), {x},
                           [](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
                               const Tensor& xv = t.value(self.inputs[0]);
                               real* d = in[0]->raw();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   if (xv[i] > 0) {
                                       d[i] += g[i];
                                   }
                               }
                           });
}

Var sum(const Var& x) {
    return x.tape().record("sum", ops::sum_all(x.value()), {x},
                           [](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               const real v = g.item();
                               for (auto& d : in[0]->data()) {
                                   d += v;
                               }
                           });
}

Var mean(const Var& x) {
    const real n = static_cast<real>(x.value().size());
    Tensor v = ops::sum_all(x.value());
    v[0] /= n;
    return x.tape().record("mean", std::move(v), {x},
                           [n](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               const real v = g.item() / n;
                               for (auto& d : in[0]->data()) {
                                   d += v;
                               }
                           });
}

Var sum_axes(const Var& x, std::vector<std::size_t> axes) {
    Tensor v = ops::sum_axes(x.value(), axes);
    return x.tape().record(
        "sum_axes", std::move(v), {x},
        [axes](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
            Shape with_ones = t.value(self.inputs[0]).shape();
            for (auto ax : axes) {
                with_ones[ax] = 1;
            }
            accumulate(in[0], broadcast_to(g.reshaped(with_ones), in[0]->shape()));
        });
}

Var tile(const Var& x, std::size_t axis, std::size_t times) {
    return x.tape().record("tile", ops::tile(x.value(), axis, times), {x},
                           [axis](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               accumulate(in[0], ops::sum_axes(g, {axis}));
                           });
}

Var transpose(const Var& x, std::vector<std::size_t> perm) {
    Tensor v = ops::transpose(x.value(), perm);
    return x.tape().record("transpose", std::move(v), {x},
                           [inv = inverse_permutation(perm)](const Tape&, const Node&, const Tensor& g,
                                                             std::span<Tensor* const> in) {
                               accumulate(in[0], ops::transpose(g, inv));
                           });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
    return x.tape().record("slice", ops::slice(x.value(), axis, begin, end), {x},
                           [axis, begin, end](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               const Shape& shape = in[0]->shape();
                               std::size_t outer = 1;
                               for (std::size_t i = 0; i < axis; ++i) {
                                   outer *= shape[i];
                               }
                               const std::size_t inner = g.size() / outer / (end - begin);
                               const std::size_t extent = shape[axis];
                               const std::size_t len = (end - begin) * inner;
                               for (std::size_t o = 0; o < outer; ++o) {
                                   real* dst = in[0]->raw() + (o * extent + begin) * inner;
                                   const real* src = g.raw() + o * len;
                                   for (std::size_t i = 0; i < len; ++i) {
                                       dst[i] += src[i];
                                   }
                               }
                           });
}

Var reshape(const Var& x, Shape shape) {
    return x.tape().record("reshape", x.value().reshaped(std::move(shape)), {x},
                           [](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               accumulate(in[0], g.reshaped(in[0]->shape()));
                           });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) {
        throw ShapeError("concat: no inputs");
    }
    std::vector<Tensor> values;
    values.reserve(parts.size());
    for (const auto& p : parts) {
        values.push_back(p.value());
    }
    Tensor v = ops::concat(values, axis);
    return parts[0].tape().record(
        "concat", std::move(v), parts, [axis](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
            std::size_t offset = 0;
            for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                const std::size_t extent = t.value(self.inputs[i]).shape()[axis];
                if (in[i]) {
                    accumulate(in[i], ops::slice(g, axis, offset, offset + extent));
                }
                offset += extent;
            }
        });
}

Var matmul(const Var& a, const Var& b) {
    return a.tape().record(
        "matmul", ops::matmul(a.value(), b.value()), {a, b},
        [](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
            const Tensor& av = t.value(self.inputs[0]);
            const Tensor& bv = t.value(self.inputs[1]);
            if (in[0]) {
                accumulate(in[0], ops::sum_to_shape(ops::matmul(g, bv, false, true), av.shape()));
            }
            if (in[1]) {
                if (bv.rank() == 2) {
                    // Shared right operand: fold every leading axis into rows.
                    const std::size_t n = av.shape().back();
                    const std::size_t q = g.shape().back();
                    const Tensor a2 = av.reshaped({av.size() / n, n});
                    const Tensor g2 = g.reshaped({g.size() / q, q});
                    accumulate(in[1], ops::matmul(a2, g2, true, false));
                } else {
                    accumulate(in[1], ops::sum_to_shape(ops::matmul(av, g, true, false), bv.shape()));
                }
            }
        });
}

Var gather_time(const Var& f, std::vector<std::size_t> indices) {
    Tensor v = ops::gather_time(f.value(), indices);
    return f.tape().record("gather_time", std::move(v), {f},
                           [indices = std::move(indices)](const Tape&, const Node&, const Tensor& g,
                                                          std::span<Tensor* const> in) {
                               accumulate(in[0], ops::scatter_time_add(g, indices, in[0]->shape()));
                           });
}

Var causal_conv1d(const Var& x, const Var& kernel, const Var& bias) {
    return x.tape().record("causal_conv1d", ops::causal_conv1d(x.value(), kernel.value(), bias.value()),
                           {x, kernel, bias},
                           [](const Tape& t, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
                               auto grads = ops::causal_conv1d_backward(t.value(self.inputs[0]),
                                                                        t.value(self.inputs[1]), g);
                               accumulate(in[0], grads.input);
                               accumulate(in[1], grads.kernel);
                               accumulate(in[2], grads.bias);
                           });
}

Var softmax(const Var& x) {
    return x.tape().record("softmax", ops::softmax_lastaxis(x.value()), {x},
                           [](const Tape&, const Node& self, const Tensor& g, std::span<Tensor* const> in) {
                               const Tensor& y = self.value;
                               const std::size_t n = y.rank() == 0 ? 1 : y.shape().back();
                               const std::size_t rows = y.size() / n;
                               real* d = in[0]->raw();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const real* yr = y.raw() + r * n;
                                   const real* gr = g.raw() + r * n;
                                   real dot = 0;
                                   for (std::size_t i = 0; i < n; ++i) {
                                       dot += gr[i] * yr[i];
                                   }
                                   for (std::size_t i = 0; i < n; ++i) {
                                       d[r * n + i] += yr[i] * (gr[i] - dot);
                                   }
                               }
                           });
}

Var spatial_dropout(const Var& f, real rate, bool training, Rng& rng) {
    if (rate < 0 || rate >= 1) {
        throw ConfigError("spatial_dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0) {
        return f;
    }
    const Tensor& x = f.value();
    if (x.rank() != 2 && x.rank() != 3) {
        throw ShapeError("spatial_dropout: expected [L, K] or [B, L, K], got " + to_string(x.shape()));
    }
    const std::size_t batch = x.rank() == 3 ? x.shape()[0] : 1;
    const std::size_t length = x.shape()[x.rank() - 2];
    const std::size_t channels = x.shape().back();
    Tensor mask(Shape{batch, channels});
    const real keep_scale = real{1} / (real{1} - rate);
    for (auto& m : mask.data()) {
        m = rng.bernoulli(rate) ? real{0} : keep_scale;
    }
    Tensor v(x.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t i = (b * length + t) * channels + c;
                v[i] = x[i] * mask[b * channels + c];
            }
        }
    }
    return f.tape().record(
        "spatial_dropout", std::move(v), {f},
        [mask, batch, length, channels](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
            real* d = in[0]->raw();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t t = 0; t < length; ++t) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t i = (b * length + t) * channels + c;
                        d[i] += g[i] * mask[b * channels + c];
                    }
                }
            }
        },
        mask.size());
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    const Tensor& z = logits.value();
    if (z.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: logits must be [N, C], got " + to_string(z.shape()));
    }
    const std::size_t rows = z.shape()[0];
    const std::size_t classes = z.shape()[1];
    if (labels.size() != rows) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    for (auto l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            throw DataError("class index " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
        }
    }
    const Tensor logp = ops::log_softmax_lastaxis(z);
    real total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        total -= logp[r * classes + static_cast<std::size_t>(labels[r])];
    }
    std::vector<int> owned(labels.begin(), labels.end());
    return logits.tape().record(
        "softmax_cross_entropy", Tensor::scalar(total / static_cast<real>(rows)), {logits},
        [owned = std::move(owned), rows, classes](const Tape& t, const Node& self, const Tensor& g,
                                                  std::span<Tensor* const> in) {
            const Tensor p = ops::softmax_lastaxis(t.value(self.inputs[0]));
            const real factor = g.item() / static_cast<real>(rows);
            real* d = in[0]->raw();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < classes; ++c) {
                    const real target = static_cast<std::size_t>(owned[r]) == c ? real{1} : real{0};
                    d[r * classes + c] += factor * (p[r * classes + c] - target);
                }
            }
        },
        labels.size());
}

Var mse(const Var& prediction, const Tensor& target) {
    require_same_shape(prediction.value(), target, "mse");
    const Tensor diff = ops::sub(prediction.value(), target);
    real total = 0;
    for (auto v : diff.data()) {
        total += v * v;
    }
    const real n = static_cast<real>(diff.size());
    return prediction.tape().record(
        "mse", Tensor::scalar(total / n), {prediction},
        [diff, n](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
            accumulate_scaled(in[0], diff, real{2} * g.item() / n);
        },
        diff.size());
}

Var scale_gradient(const Var& x, real factor) {
    return x.tape().record("scale_gradient", x.value(), {x},
                           [factor](const Tape&, const Node&, const Tensor& g, std::span<Tensor* const> in) {
                               accumulate_scaled(in[0], g, factor);
                           });
}

Var apply(std::string_view op, std::span<const Var> inputs) {
    auto need = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw ShapeError("op '" + std::string(op) + "' takes " + std::to_string(n) + " inputs, got " +
                             std::to_string(inputs.size()));
        }
    };
    if (op == "relu") {
        need(1);
        return relu(inputs[0]);
    }
    if (op == "softmax") {
        need(1);
        return softmax(inputs[0]);
    }
    if (op == "sum") {
        need(1);
        return sum(inputs[0]);
    }
    if (op == "mean") {
        need(1);
        return mean(inputs[0]);
    }
    if (op == "add") {
        need(2);
        return add(inputs[0], inputs[1]);
    }
    if (op == "sub") {
        need(2);
        return sub(inputs[0], inputs[1]);
    }
    if (op == "mul") {
        need(2);
        return mul(inputs[0], inputs[1]);
    }
    if (op == "matmul") {
        need(2);
        return matmul(inputs[0], inputs[1]);
    }
    throw UnsupportedOpError("unsupported op '" + std::string(op) + "'");
}

} // namespace ad

const GradCheckEntry& GradCheckReport::entry(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) {
            return e;
        }
    }
    throw ConfigError("no grad-check entry for '" + name + "'");
}

GradCheckReport grad_check(const LossBuilder& build, ParameterSet params, const GradCheckOptions& options) {
    auto evaluate = [&](const ParameterSet& p) -> double {
        Tape tape;
        Var loss = build(tape, p);
        if (loss.value().size() != 1) {
            throw ShapeError("grad_check: loss must be scalar, got shape " + to_string(loss.shape()));
        }
        return static_cast<double>(loss.value()[0]);
    };

    Gradients analytic;
    {
        Tape tape;
        Var loss = build(tape, params);
        if (loss.value().size() != 1) {
            throw ShapeError("grad_check: loss must be scalar, got shape " + to_string(loss.shape()));
        }
        analytic = tape.backward(loss);
    }

    Rng rng(options.seed);
    GradCheckReport report;
    const double h = options.step;
    for (auto& [name, tensor] : params.entries()) {
        GradCheckEntry e;
        e.name = name;
        auto it = analytic.find(name);
        const Tensor zero(tensor.shape());
        const Tensor& grad = it == analytic.end() ? zero : it->second;

        std::vector<std::size_t> picks;
        if (options.max_elements_per_tensor == 0 || tensor.size() <= options.max_elements_per_tensor) {
            picks.resize(tensor.size());
            for (std::size_t i = 0; i < picks.size(); ++i) {
                picks[i] = i;
            }
        } else {
            auto perm = rng.permutation(tensor.size());
            picks.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(options.max_elements_per_tensor));
        }
        for (auto i : picks) {
            const real original = tensor[i];
            tensor[i] = static_cast<real>(original + h);
            const double up = evaluate(params);
            tensor[i] = static_cast<real>(original - h);
            const double down = evaluate(params);
            tensor[i] = original;
            const double numeric = (up - down) / (2 * h);
            const double a = grad[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            e.max_rel_error = std::max(e.max_rel_error, rel);
            e.max_abs_analytic = std::max(e.max_abs_analytic, std::abs(a));
            e.max_abs_numeric = std::max(e.max_abs_numeric, std::abs(numeric));
            ++e.checked;
        }
        e.vanishing = e.max_abs_analytic < options.vanishing_threshold &&
                      e.max_abs_numeric < options.vanishing_threshold;
        e.passed = e.vanishing || e.max_rel_error < options.tolerance;
        report.passed = report.passed && e.passed;
        if (!e.vanishing) {
            report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

} // namespace igloo
