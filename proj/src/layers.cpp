// SPDX-License-Identifier: Apache-2.0
#include "igloo/layers.hpp"

#include <cmath>

#include "igloo/ops.hpp"

namespace igloo {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

std::string to_string(MemoryMode m) { return m == MemoryMode::literal ? "literal" : "per_patch"; }

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

MemoryMode parse_memory_mode(const std::string& s) {
    if (s == "per_patch") return MemoryMode::per_patch;
    if (s == "literal") return MemoryMode::literal;
    throw ConfigError("unknown memory mode '" + s + "' (expected per_patch or literal)");
}

namespace {

struct PatchDims {
    std::size_t batch, length, channels, patches, patch_size;
};

PatchDims patch_dims(const Tensor& f, std::span<const std::size_t> locations, std::size_t groups,
                     const Tensor& filter) {
    if (f.rank() != 3 || filter.rank() != 3) {
        throw ShapeError("patch_reduce: expected features [B, L, K] and filter [p, K, J], got " +
                         to_string(f.shape()) + " and " + to_string(filter.shape()));
    }
    PatchDims d{f.shape()[0], f.shape()[1], f.shape()[2], filter.shape()[2], filter.shape()[0]};
    if (filter.shape()[1] != d.channels) {
        throw ConfigError("patch_reduce: filter " + to_string(filter.shape()) + " does not match " +
                          std::to_string(d.channels) + " feature channels");
    }
    if (locations.size() != groups * d.patches * d.patch_size) {
        throw ConfigError("patch_reduce: plan holds " + std::to_string(locations.size()) + " indices, expected " +
                          std::to_string(groups) + " x J=" + std::to_string(d.patches) +
                          " x p=" + std::to_string(d.patch_size));
    }
    for (auto loc : locations) {
        if (loc >= d.length) {
            throw IndexError("patch_reduce: plan index " + std::to_string(loc) + " outside [0, " +
                             std::to_string(d.length) + ")");
        }
    }
    return d;
}

// filter [p, K, J] -> [J, p, K] so each patch reads a contiguous block.
Tensor filter_by_patch(const Tensor& filter) { return ops::transpose(filter, {2, 0, 1}); }

Tensor apply_activation(Tensor t, Activation a) { return a == Activation::relu ? ops::relu(t) : t; }

Var apply_activation(const Var& v, Activation a) { return a == Activation::relu ? ad::relu(v) : v; }

// Promotes [L, M] to [1, L, M]; remembers whether to squeeze afterwards.
Tensor as_batched(const Tensor& x, bool& squeezed) {
    squeezed = x.rank() == 2;
    if (x.rank() == 2) {
        return x.reshaped({1, x.shape()[0], x.shape()[1]});
    }
    if (x.rank() != 3) {
        throw ShapeError("expected input [L, M] or [B, L, M], got " + to_string(x.shape()));
    }
    return x;
}

Tensor drop_batch(Tensor t, bool squeezed) {
    if (!squeezed) {
        return t;
    }
    Shape s(t.shape().begin() + 1, t.shape().end());
    return std::move(t).reshaped(s);
}

} // namespace

namespace kernels {

Tensor patch_reduce(const Tensor& f, std::span<const std::size_t> locations, std::size_t groups,
                    const Tensor& filter, const Tensor& bias) {
    const PatchDims d = patch_dims(f, locations, groups, filter);
    if (bias.size() != d.patches) {
        throw ConfigError("patch_reduce: bias has " + std::to_string(bias.size()) + " entries, expected J=" +
                          std::to_string(d.patches));
    }
    const Tensor w = filter_by_patch(filter);
    const std::size_t block = d.patch_size * d.channels;
    Tensor out(Shape{d.batch, groups, d.patches});
    real* dst = out.raw();
    for (std::size_t b = 0; b < d.batch; ++b) {
        const real* fb = f.raw() + b * d.length * d.channels;
        for (std::size_t n = 0; n < groups; ++n) {
            const std::size_t* loc = locations.data() + n * d.patches * d.patch_size;
            for (std::size_t j = 0; j < d.patches; ++j) {
                const real* wj = w.raw() + j * block;
                real acc = 0;
                for (std::size_t i = 0; i < d.patch_size; ++i) {
                    const real* row = fb + loc[j * d.patch_size + i] * d.channels;
                    const real* wi = wj + i * d.channels;
                    for (std::size_t c = 0; c < d.channels; ++c) {
                        acc += row[c] * wi[c];
                    }
                }
                *dst++ = acc + bias[j];
            }
        }
    }
    check_finite(out, "patch_reduce");
    return out;
}

PatchReduceGrads patch_reduce_backward(const Tensor& f, std::span<const std::size_t> locations, std::size_t groups,
                                       const Tensor& filter, const Tensor& grad_out) {
    const PatchDims d = patch_dims(f, locations, groups, filter);
    if (grad_out.size() != d.batch * groups * d.patches) {
        throw ShapeError("patch_reduce_backward: gradient " + to_string(grad_out.shape()) + " does not match output");
    }
    const Tensor w = filter_by_patch(filter);
    const std::size_t block = d.patch_size * d.channels;
    Tensor dw(Shape{d.patches, d.patch_size, d.channels});
    PatchReduceGrads g{Tensor(f.shape()), Tensor(), Tensor(Shape{d.patches})};
    const real* gp = grad_out.raw();
    for (std::size_t b = 0; b < d.batch; ++b) {
        const real* fb = f.raw() + b * d.length * d.channels;
        real* dfb = g.features.raw() + b * d.length * d.channels;
        for (std::size_t n = 0; n < groups; ++n) {
            const std::size_t* loc = locations.data() + n * d.patches * d.patch_size;
            for (std::size_t j = 0; j < d.patches; ++j) {
                const real gj = *gp++;
                if (gj == 0) {
                    continue;
                }
                g.bias[j] += gj;
                const real* wj = w.raw() + j * block;
                real* dwj = dw.raw() + j * block;
                for (std::size_t i = 0; i < d.patch_size; ++i) {
                    const std::size_t t = loc[j * d.patch_size + i];
                    const real* row = fb + t * d.channels;
                    real* drow = dfb + t * d.channels;
                    const real* wi = wj + i * d.channels;
                    real* dwi = dwj + i * d.channels;
                    for (std::size_t c = 0; c < d.channels; ++c) {
                        drow[c] += gj * wi[c];
                        dwi[c] += gj * row[c];
                    }
                }
            }
        }
    }
    g.filter = ops::transpose(dw, {1, 2, 0});
    return g;
}

Tensor spatial_dropout(const Tensor& f, real rate, bool training, std::uint64_t seed) {
    Tape tape;
    Rng rng(seed);
    return ad::spatial_dropout(tape.constant(f), rate, training, rng).value();
}

} // namespace kernels

namespace ad {

Var patch_reduce(const Var& f, std::vector<std::size_t> locations, std::size_t groups, const Var& filter,
                 const Var& bias) {
    Tensor v = kernels::patch_reduce(f.value(), locations, groups, filter.value(), bias.value());
    return f.tape().record(
        "patch_reduce", std::move(v), {f, filter, bias},
        [locations = std::move(locations), groups](const Tape& t, const Node& self, const Tensor& g,
                                                   std::span<Tensor* const> in) {
            auto grads = kernels::patch_reduce_backward(t.value(self.inputs[0]), locations, groups,
                                                        t.value(self.inputs[1]), g);
            auto add_into = [](Tensor* dst, const Tensor& src) {
                if (dst == nullptr) {
                    return;
                }
                for (std::size_t i = 0; i < src.size(); ++i) {
                    (*dst)[i] += src[i];
                }
            };
            add_into(in[0], grads.features);
            add_into(in[1], grads.filter);
            add_into(in[2], grads.bias);
        });
}

} // namespace ad

real glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return static_cast<real>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

Tensor uniform_tensor(Shape shape, real bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = static_cast<real>(rng.uniform(-bound, bound));
    }
    return t;
}

constexpr real kSmallInit = real{0.01};

// ---------------------------------------------------------------------------

CausalConv::CausalConv(std::string prefix, std::size_t width, std::size_t in_channels, std::size_t filters)
    : kernel_(prefix + ".kernel"), bias_(prefix + ".bias"), width_(width), in_(in_channels), filters_(filters) {
    if (width == 0 || in_channels == 0 || filters == 0) {
        throw ConfigError("causal conv '" + prefix + "': width, channels and filters must be >= 1");
    }
}

void CausalConv::init(ParameterSet& params, Rng& rng) const {
    params.add(kernel_, uniform_tensor({width_, in_, filters_}, glorot_bound(width_ * in_, width_ * filters_), rng));
    params.add(bias_, uniform_tensor({filters_}, kSmallInit, rng));
}

Tensor CausalConv::forward(const ParameterSet& params, const Tensor& x) const {
    return ops::causal_conv1d(x, params.get(kernel_), params.get(bias_));
}

Var CausalConv::forward(Tape& tape, const ParameterSet& params, const Var& x) const {
    return ad::causal_conv1d(x, tape.parameter(params, kernel_), tape.parameter(params, bias_));
}

// ---------------------------------------------------------------------------

Dense::Dense(std::string prefix, std::size_t in, std::size_t out, bool use_bias)
    : weight_(prefix + ".weight"), bias_(prefix + ".bias"), in_(in), out_(out), use_bias_(use_bias) {
    if (in == 0 || out == 0) {
        throw ConfigError("dense '" + prefix + "': widths must be >= 1");
    }
}

void Dense::init(ParameterSet& params, Rng& rng) const {
    params.add(weight_, uniform_tensor({in_, out_}, glorot_bound(in_, out_), rng));
    if (use_bias_) {
        params.add(bias_, uniform_tensor({out_}, kSmallInit, rng));
    }
}

Tensor Dense::forward(const ParameterSet& params, const Tensor& x) const {
    Tensor y = ops::matmul(x, params.get(weight_));
    return use_bias_ ? ops::add(y, params.get(bias_)) : y;
}

Var Dense::forward(Tape& tape, const ParameterSet& params, const Var& x) const {
    Var y = ad::matmul(x, tape.parameter(params, weight_));
    return use_bias_ ? ad::add(y, tape.parameter(params, bias_)) : y;
}

// ---------------------------------------------------------------------------

PatchReducer::PatchReducer(std::string prefix, std::size_t filters, PatchPlan plan, Activation activation)
    : filter_(prefix + ".filter"),
      bias_(prefix + ".patch_bias"),
      filters_(filters),
      plan_(std::move(plan)),
      activation_(activation) {}

void PatchReducer::set_plan(PatchPlan plan) {
    if (plan.patches != plan_.patches || plan.patch_size != plan_.patch_size || plan.length != plan_.length) {
        throw ConfigError("patch plan dimensions do not match the layer");
    }
    plan_ = std::move(plan);
}

void PatchReducer::init(ParameterSet& params, Rng& rng) const {
    const std::size_t p = plan_.patch_size;
    params.add(filter_,
               uniform_tensor({p, filters_, plan_.patches}, glorot_bound(p * filters_, 1), rng));
    params.add(bias_, uniform_tensor({plan_.patches}, kSmallInit, rng));
}

Tensor PatchReducer::forward(const ParameterSet& params, const Tensor& features) const {
    if (features.rank() != 3 || features.shape()[1] != plan_.length) {
        throw ConfigError("patch reducer: features " + to_string(features.shape()) + " do not match plan length L=" +
                          std::to_string(plan_.length));
    }
    Tensor u = kernels::patch_reduce(features, plan_.locations, 1, params.get(filter_), params.get(bias_));
    return apply_activation(std::move(u).reshaped({features.shape()[0], plan_.patches}), activation_);
}

Var PatchReducer::forward(Tape& tape, const ParameterSet& params, const Var& features) const {
    if (features.value().rank() != 3 || features.shape()[1] != plan_.length) {
        throw ConfigError("patch reducer: features " + to_string(features.shape()) + " do not match plan length L=" +
                          std::to_string(plan_.length));
    }
    Var u = ad::patch_reduce(features, plan_.locations, 1, tape.parameter(params, filter_),
                             tape.parameter(params, bias_));
    u = ad::reshape(u, {features.shape()[0], plan_.patches});
    return apply_activation(u, activation_);
}

std::size_t PatchReducer::parameter_count() const {
    return plan_.patches * filters_ * plan_.patch_size + plan_.patches;
}

// ---------------------------------------------------------------------------

IglooBase::IglooBase(std::string prefix, const IglooBaseConfig& config, std::vector<PatchPlan> plans)
    : config_(config) {
    if (config.stacks == 0) {
        throw ConfigError("IGLOO-base needs at least one stack (d >= 1)");
    }
    if (plans.size() != config.stacks) {
        throw ConfigError("IGLOO-base: " + std::to_string(plans.size()) + " patch plans for " +
                          std::to_string(config.stacks) + " stacks");
    }
    for (std::size_t i = 0; i < config.stacks; ++i) {
        const auto& plan = plans[i];
        if (plan.patches != config.patches || plan.patch_size != config.patch_size) {
            throw ConfigError("IGLOO-base: plan " + std::to_string(i) + " is J=" + std::to_string(plan.patches) +
                              ", p=" + std::to_string(plan.patch_size) + " but the layer expects J=" +
                              std::to_string(config.patches) + ", p=" + std::to_string(config.patch_size));
        }
        const std::string layer = prefix + ".stack" + std::to_string(i);
        convs_.emplace_back(layer + ".conv", config.kernel_width, i == 0 ? config.in_channels : config.filters,
                            config.filters);
        reducers_.emplace_back(layer, config.filters, std::move(plans[i]), config.activation);
    }
}

void IglooBase::init(ParameterSet& params, Rng& rng) const {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].init(params, rng);
        reducers_[i].init(params, rng);
    }
}

Tensor IglooBase::features(const ParameterSet& params, const Tensor& x, std::size_t layer) const {
    bool squeezed = false;
    Tensor f = convs_.at(0).forward(params, as_batched(x, squeezed));
    for (std::size_t i = 1; i <= layer; ++i) {
        f = convs_.at(i).forward(params, ops::relu(f));
    }
    return drop_batch(std::move(f), squeezed);
}

Tensor IglooBase::forward(const ParameterSet& params, const Tensor& x) const {
    bool squeezed = false;
    const Tensor xb = as_batched(x, squeezed);
    std::vector<Tensor> outputs;
    Tensor f;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        f = i == 0 ? convs_[0].forward(params, xb) : convs_[i].forward(params, ops::relu(f));
        outputs.push_back(reducers_[i].forward(params, f));
    }
    Tensor out = outputs.size() == 1 ? std::move(outputs[0]) : ops::concat(outputs, 1);
    return drop_batch(std::move(out), squeezed);
}

Var IglooBase::forward(Tape& tape, const ParameterSet& params, const Var& x, bool training, Rng* rng) const {
    if (x.value().rank() != 3) {
        throw ShapeError("IGLOO-base taped forward expects [B, L, M], got " + to_string(x.shape()));
    }
    const bool drop = training && config_.dropout > 0;
    if (drop && rng == nullptr) {
        throw ConfigError("IGLOO-base: dropout during training needs a random source");
    }
    std::vector<Var> outputs;
    Var f;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        f = i == 0 ? convs_[0].forward(tape, params, x) : convs_[i].forward(tape, params, ad::relu(f));
        if (drop) {
            f = ad::spatial_dropout(f, config_.dropout, true, *rng);
        }
        outputs.push_back(reducers_[i].forward(tape, params, f));
    }
    return outputs.size() == 1 ? outputs[0] : ad::concat(outputs, 1);
}

std::size_t IglooBase::core_parameter_count() const {
    std::size_t n = 0;
    for (const auto& r : reducers_) {
        n += r.parameter_count();
    }
    return n;
}

std::size_t IglooBase::conv_parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : convs_) {
        n += c.parameter_count();
    }
    return n;
}

// ---------------------------------------------------------------------------

IglooSeqBlock::IglooSeqBlock(std::string prefix, const IglooSeqConfig& config, SeqPatchPlan plan)
    : config_(config),
      conv_(prefix + ".conv", config.kernel_width, config.in_channels, config.filters),
      filter_(prefix + ".filter"),
      bias_(prefix + ".patch_bias"),
      projection_(prefix + ".value_proj"),
      memory_(prefix + ".memory"),
      plan_(std::move(plan)) {
    if (plan_.length != config.length || plan_.patches != config.patches || plan_.patch_size != config.patch_size) {
        throw ConfigError("IGLOO-seq block '" + prefix + "': patch plan does not match L, J, p");
    }
}

void IglooSeqBlock::set_plan(SeqPatchPlan plan) {
    if (plan.length != plan_.length || plan.patches != plan_.patches || plan.patch_size != plan_.patch_size) {
        throw ConfigError("sequence patch plan dimensions do not match the block");
    }
    plan_ = std::move(plan);
}

Shape IglooSeqBlock::memory_shape() const {
    if (config_.memory == MemoryMode::literal) {
        return {config_.length, 1, config_.width};
    }
    return {1, config_.patches, config_.width};
}

void IglooSeqBlock::init(ParameterSet& params, Rng& rng) const {
    conv_.init(params, rng);
    const std::size_t p = config_.patch_size;
    params.add(filter_, uniform_tensor({p, config_.filters, config_.patches}, glorot_bound(p * config_.filters, 1), rng));
    params.add(bias_, uniform_tensor({config_.patches}, kSmallInit, rng));
    params.add(projection_,
               uniform_tensor({config_.filters, config_.width}, glorot_bound(config_.filters, config_.width), rng));
    params.add(memory_, uniform_tensor(memory_shape(), kSmallInit, rng));
}

Tensor IglooSeqBlock::features(const ParameterSet& params, const Tensor& x) const {
    if (x.rank() != 3 || x.shape()[1] != config_.length) {
        throw ConfigError("IGLOO-seq: input " + to_string(x.shape()) + " does not match L=" +
                          std::to_string(config_.length));
    }
    return conv_.forward(params, x);
}

Tensor IglooSeqBlock::logits(const ParameterSet& params, const Tensor& x) const {
    return kernels::patch_reduce(features(params, x), plan_.locations, plan_.length, params.get(filter_),
                                 params.get(bias_));
}

Tensor IglooSeqBlock::mix(const ParameterSet& params, const Tensor& f, const Tensor& logits) const {
    const std::size_t batch = f.shape()[0];
    const std::size_t length = config_.length;
    const std::size_t width = config_.width;
    const Tensor attention = ops::softmax_lastaxis(logits);
    const Tensor values = ops::matmul(f, params.get(projection_)); // F.W  [B, L, Z]
    const Tensor& memory = params.get(memory_);
    if (config_.memory == MemoryMode::per_patch) {
        // sum_j A[t,j] * (FW[t] * B[j]) == FW[t] * (A[t] . B)
        const Tensor mixed = ops::matmul(attention, memory.reshaped({config_.patches, width}));
        return ops::mul(values, mixed);
    }
    const Tensor v = ops::mul(ops::tile(values, 2, config_.patches), memory); // [B, L, J, Z]
    return ops::matmul(attention.reshaped({batch, length, 1, config_.patches}), v).reshaped({batch, length, width});
}

Tensor IglooSeqBlock::forward(const ParameterSet& params, const Tensor& x) const {
    bool squeezed = false;
    const Tensor xb = as_batched(x, squeezed);
    const Tensor f = features(params, xb);
    const Tensor u = kernels::patch_reduce(f, plan_.locations, plan_.length, params.get(filter_), params.get(bias_));
    return drop_batch(mix(params, f, u), squeezed);
}

Tensor IglooSeqBlock::forward_with_logits(const ParameterSet& params, const Tensor& x, const Tensor& logits) const {
    bool squeezed = false;
    const Tensor xb = as_batched(x, squeezed);
    const Tensor f = features(params, xb);
    const Shape expected{f.shape()[0], config_.length, config_.patches};
    if (numel(logits.shape()) != numel(expected)) {
        throw ShapeError("forward_with_logits: logits " + to_string(logits.shape()) + " do not match " +
                         to_string(expected));
    }
    return drop_batch(mix(params, f, logits.reshaped(expected)), squeezed);
}

Var IglooSeqBlock::forward(Tape& tape, const ParameterSet& params, const Var& x, bool training, Rng* rng) const {
    if (x.value().rank() != 3 || x.shape()[1] != config_.length) {
        throw ConfigError("IGLOO-seq: input " + to_string(x.shape()) + " does not match L=" +
                          std::to_string(config_.length));
    }
    const std::size_t batch = x.shape()[0];
    Var f = conv_.forward(tape, params, x);
    if (training && config_.dropout > 0) {
        if (rng == nullptr) {
            throw ConfigError("IGLOO-seq: dropout during training needs a random source");
        }
        f = ad::spatial_dropout(f, config_.dropout, true, *rng);
    }
    Var u = ad::patch_reduce(f, plan_.locations, plan_.length, tape.parameter(params, filter_),
                             tape.parameter(params, bias_));
    Var attention = ad::softmax(u);
    Var values = ad::matmul(f, tape.parameter(params, projection_));
    Var memory = tape.parameter(params, memory_);
    if (config_.memory == MemoryMode::per_patch) {
        Var mixed = ad::matmul(attention, ad::reshape(memory, {config_.patches, config_.width}));
        return ad::mul(values, mixed);
    }
    Var v = ad::mul(ad::tile(values, 2, config_.patches), memory);
    Var a4 = ad::reshape(attention, {batch, config_.length, 1, config_.patches});
    return ad::reshape(ad::matmul(a4, v), {batch, config_.length, config_.width});
}

std::size_t IglooSeqBlock::core_parameter_count() const {
    return config_.patches * config_.filters * config_.patch_size + config_.patches;
}

std::size_t IglooSeqBlock::parameter_count() const {
    return conv_.parameter_count() + core_parameter_count() + config_.filters * config_.width + numel(memory_shape());
}

// ---------------------------------------------------------------------------

namespace {
std::size_t ffn_width(const IglooSeqConfig& c) { return c.ffn_hidden == 0 ? 4 * c.width : c.ffn_hidden; }
} // namespace

IglooSeqLayer::IglooSeqLayer(std::string prefix, const IglooSeqConfig& config, std::vector<SeqPatchPlan> plans)
    : config_(config),
      ffn_in_(prefix + ".ffn1", config.width, ffn_width(config)),
      ffn_out_(prefix + ".ffn2", ffn_width(config), config.width) {
    if (config.blocks == 0) {
        throw ConfigError("IGLOO-seq needs at least one block (k >= 1)");
    }
    if (plans.size() != config.blocks) {
        throw ConfigError("IGLOO-seq: " + std::to_string(plans.size()) + " plans for " +
                          std::to_string(config.blocks) + " blocks");
    }
    for (std::size_t n = 0; n < config.blocks; ++n) {
        blocks_.emplace_back(prefix + ".block" + std::to_string(n), config, std::move(plans[n]));
    }
    if (config.in_channels != config.width) {
        projection_.emplace(prefix + ".residual_proj", config.in_channels, config.width, false);
    }
}

void IglooSeqLayer::init(ParameterSet& params, Rng& rng) const {
    for (const auto& b : blocks_) {
        b.init(params, rng);
    }
    if (projection_) {
        projection_->init(params, rng);
    }
    ffn_in_.init(params, rng);
    ffn_out_.init(params, rng);
}

Tensor IglooSeqLayer::forward(const ParameterSet& params, const Tensor& x) const {
    bool squeezed = false;
    const Tensor xb = as_batched(x, squeezed);
    Tensor out = blocks_[0].forward(params, xb);
    for (std::size_t n = 1; n < blocks_.size(); ++n) {
        out = ops::add(out, blocks_[n].forward(params, xb));
    }
    Tensor y = ops::add(out, projection_ ? projection_->forward(params, xb) : xb);
    Tensor z = ops::add(y, ffn_out_.forward(params, ops::relu(ffn_in_.forward(params, y))));
    return drop_batch(std::move(z), squeezed);
}

Var IglooSeqLayer::forward(Tape& tape, const ParameterSet& params, const Var& x, bool training, Rng* rng) const {
    Var out = blocks_[0].forward(tape, params, x, training, rng);
    for (std::size_t n = 1; n < blocks_.size(); ++n) {
        out = ad::add(out, blocks_[n].forward(tape, params, x, training, rng));
    }
    Var y = ad::add(out, projection_ ? projection_->forward(tape, params, x) : x);
    return ad::add(y, ffn_out_.forward(tape, params, ad::relu(ffn_in_.forward(tape, params, y))));
}

std::size_t IglooSeqLayer::core_parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) {
        n += b.core_parameter_count();
    }
    return n;
}

std::size_t IglooSeqLayer::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) {
        n += b.parameter_count();
    }
    if (projection_) {
        n += projection_->parameter_count();
    }
    return n + ffn_in_.parameter_count() + ffn_out_.parameter_count();
}

} // namespace igloo
