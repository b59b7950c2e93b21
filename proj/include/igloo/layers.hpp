// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "igloo/autodiff.hpp"
#include "igloo/parameters.hpp"
#include "igloo/patch_plan.hpp"
#include "igloo/rng.hpp"
#include "igloo/tensor.hpp"

namespace igloo {

enum class Activation { identity, relu };
enum class MemoryMode { per_patch, literal };

std::string to_string(Activation a);
std::string to_string(MemoryMode m);
Activation parse_activation(const std::string& s);
MemoryMode parse_memory_mode(const std::string& s);

namespace kernels {

/// Fused gather + filter + reduce. `f` is [B, L, K]; `locations` holds
/// `groups` blocks of J*p time indices; `filter` is [p, K, J] and `bias` [J].
/// out[b, n, j] = bias[j] + sum_{i<p, c<K} f[b, loc[n, j, i], c] * filter[i, c, j].
Tensor patch_reduce(const Tensor& f, std::span<const std::size_t> locations, std::size_t groups,
                    const Tensor& filter, const Tensor& bias);

struct PatchReduceGrads {
    Tensor features;
    Tensor filter;
    Tensor bias;
};

PatchReduceGrads patch_reduce_backward(const Tensor& f, std::span<const std::size_t> locations, std::size_t groups,
                                       const Tensor& filter, const Tensor& grad_out);

/// Whole-channel dropout with an explicit seed (eager counterpart of
/// ad::spatial_dropout).
Tensor spatial_dropout(const Tensor& f, real rate, bool training, std::uint64_t seed);

} // namespace kernels

namespace ad {
/// Taped patch_reduce; gradients scatter-add into the gathered rows.
Var patch_reduce(const Var& f, std::vector<std::size_t> locations, std::size_t groups, const Var& filter,
                 const Var& bias);
} // namespace ad

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
real glorot_bound(std::size_t fan_in, std::size_t fan_out);
Tensor uniform_tensor(Shape shape, real bound, Rng& rng);

/// Causal 1D convolution with kernel [w, M, K] and bias [K].
class CausalConv {
public:
    CausalConv(std::string prefix, std::size_t width, std::size_t in_channels, std::size_t filters);

    void init(ParameterSet& params, Rng& rng) const;
    Tensor forward(const ParameterSet& params, const Tensor& x) const;
    Var forward(Tape& tape, const ParameterSet& params, const Var& x) const;

    const std::string& kernel_name() const { return kernel_; }
    const std::string& bias_name() const { return bias_; }
    std::size_t parameter_count() const { return width_ * in_ * filters_ + filters_; }

private:
    std::string kernel_;
    std::string bias_;
    std::size_t width_;
    std::size_t in_;
    std::size_t filters_;
};

/// Affine map over the last axis: x[..., in] -> x[..., out].
class Dense {
public:
    Dense(std::string prefix, std::size_t in, std::size_t out, bool use_bias = true);

    void init(ParameterSet& params, Rng& rng) const;
    Tensor forward(const ParameterSet& params, const Tensor& x) const;
    Var forward(Tape& tape, const ParameterSet& params, const Var& x) const;

    const std::string& weight_name() const { return weight_; }
    const std::string& bias_name() const { return bias_; }
    std::size_t parameter_count() const { return in_ * out_ + (use_bias_ ? out_ : 0); }

private:
    std::string weight_;
    std::string bias_;
    std::size_t in_;
    std::size_t out_;
    bool use_bias_;
};

/// The IGLOO-base reduction over a feature map F [B, L, K]: gathers the J
/// patches of p rows named by the plan, multiplies each p x K patch
/// pointwise by its slice of the filter [p, K, J], sums, adds a bias and
/// applies the activation. Output [B, J].
class PatchReducer {
public:
    PatchReducer(std::string prefix, std::size_t filters, PatchPlan plan, Activation activation);

    void init(ParameterSet& params, Rng& rng) const;
    Tensor forward(const ParameterSet& params, const Tensor& features) const;
    Var forward(Tape& tape, const ParameterSet& params, const Var& features) const;

    const std::string& filter_name() const { return filter_; }
    const std::string& bias_name() const { return bias_; }
    const PatchPlan& plan() const { return plan_; }
    void set_plan(PatchPlan plan);
    Activation activation() const { return activation_; }

    /// J*K*p + J, independent of L.
    std::size_t parameter_count() const;

private:
    std::string filter_;
    std::string bias_;
    std::size_t filters_;
    PatchPlan plan_;
    Activation activation_;
};

struct IglooBaseConfig {
    std::size_t in_channels = 1;  // M
    std::size_t filters = 5;      // K
    std::size_t kernel_width = 3; // w
    std::size_t patches = 100;    // J
    std::size_t patch_size = 4;   // p
    std::size_t stacks = 1;       // d
    Activation activation = Activation::relu;
    real dropout = 0;
};

/// d successive causal convolutions, each feeding its own patch reduction.
/// F0 = conv0(x), Fi = conv_i(relu(F(i-1))); the d reductions are
/// concatenated into [B, d*J]. With d == 1 this is a single IGLOO-base
/// block.
class IglooBase {
public:
    IglooBase(std::string prefix, const IglooBaseConfig& config, std::vector<PatchPlan> plans);

    void init(ParameterSet& params, Rng& rng) const;

    /// Inference forward (dropout off).
    Tensor forward(const ParameterSet& params, const Tensor& x) const;
    Var forward(Tape& tape, const ParameterSet& params, const Var& x, bool training, Rng* rng) const;

    /// Feature map of stack layer `layer` (inference).
    Tensor features(const ParameterSet& params, const Tensor& x, std::size_t layer) const;

    const IglooBaseConfig& config() const { return config_; }
    std::size_t output_width() const { return config_.stacks * config_.patches; }
    const std::vector<CausalConv>& convs() const { return convs_; }
    const std::vector<PatchReducer>& reducers() const { return reducers_; }
    std::vector<PatchReducer>& reducers() { return reducers_; }

    std::size_t core_parameter_count() const;
    std::size_t conv_parameter_count() const;

private:
    IglooBaseConfig config_;
    std::vector<CausalConv> convs_;
    std::vector<PatchReducer> reducers_;
};

struct IglooSeqConfig {
    std::size_t length = 64;        // L
    std::size_t in_channels = 1;    // M
    std::size_t filters = 16;       // K
    std::size_t kernel_width = 3;   // w
    std::size_t patches = 16;       // J
    std::size_t patch_size = 4;     // p
    std::size_t width = 32;         // Z
    std::size_t blocks = 1;         // k
    std::size_t ffn_hidden = 0;     // 0 means 4 * Z
    MemoryMode memory = MemoryMode::per_patch;
    real dropout = 0;
};

/// One attention path: U* = per-step patch logits [B, L, J], A = softmax(U*),
/// V[t] = tile_J(F[t] W) * B, out[t] = A[t] . V[t]  -> [B, L, Z].
class IglooSeqBlock {
public:
    IglooSeqBlock(std::string prefix, const IglooSeqConfig& config, SeqPatchPlan plan);

    void init(ParameterSet& params, Rng& rng) const;

    Tensor features(const ParameterSet& params, const Tensor& x) const;
    /// Per-step logits U* [B, L, J].
    Tensor logits(const ParameterSet& params, const Tensor& x) const;
    Tensor forward(const ParameterSet& params, const Tensor& x) const;
    /// Forward with U* replaced by `logits` (used to probe how much the
    /// attention weights matter).
    Tensor forward_with_logits(const ParameterSet& params, const Tensor& x, const Tensor& logits) const;
    Var forward(Tape& tape, const ParameterSet& params, const Var& x, bool training, Rng* rng) const;

    const SeqPatchPlan& plan() const { return plan_; }
    void set_plan(SeqPatchPlan plan);
    const CausalConv& conv() const { return conv_; }
    const std::string& filter_name() const { return filter_; }
    const std::string& bias_name() const { return bias_; }
    const std::string& projection_name() const { return projection_; }
    const std::string& memory_name() const { return memory_; }
    Shape memory_shape() const;

    std::size_t core_parameter_count() const;
    std::size_t parameter_count() const;

private:
    Tensor mix(const ParameterSet& params, const Tensor& features, const Tensor& logits) const;

    IglooSeqConfig config_;
    CausalConv conv_;
    std::string filter_;
    std::string bias_;
    std::string projection_;
    std::string memory_;
    SeqPatchPlan plan_;
};

/// k summed blocks, a residual from the input (through a learned projection
/// when M != Z) and a two-layer feed-forward with its own residual:
/// y = sum_k block_k(x) + proj(x);  out = y + W2 relu(W1 y + b1) + b2.
class IglooSeqLayer {
public:
    IglooSeqLayer(std::string prefix, const IglooSeqConfig& config, std::vector<SeqPatchPlan> plans);

    void init(ParameterSet& params, Rng& rng) const;
    Tensor forward(const ParameterSet& params, const Tensor& x) const;
    Var forward(Tape& tape, const ParameterSet& params, const Var& x, bool training, Rng* rng) const;

    const IglooSeqConfig& config() const { return config_; }
    const std::vector<IglooSeqBlock>& blocks() const { return blocks_; }
    std::vector<IglooSeqBlock>& blocks() { return blocks_; }
    bool has_projection() const { return projection_.has_value(); }

    std::size_t core_parameter_count() const;
    std::size_t parameter_count() const;

private:
    IglooSeqConfig config_;
    std::vector<IglooSeqBlock> blocks_;
    std::optional<Dense> projection_;
    Dense ffn_in_;
    Dense ffn_out_;
};

} // namespace igloo
