// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "igloo/autodiff.hpp"
#include "igloo/layers.hpp"
#include "igloo/parameters.hpp"
#include "igloo/patch_plan.hpp"

namespace igloo {

enum class Architecture { base, seq };
std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& s);

/// What a task feeds in and expects out.
enum class OutputKind {
    classify, // `positions` independent C-way predictions from one representation
    regress,  // one scalar per sequence
    per_step, // a C-way prediction at every time step
};

struct TaskSpec {
    std::size_t length = 1;   // L
    std::size_t channels = 1; // M
    OutputKind output = OutputKind::classify;
    std::size_t positions = 1;
    std::size_t classes = 2;
};

struct ModelConfig {
    Architecture arch = Architecture::base;
    std::size_t patches = 100;    // J
    std::size_t patch_size = 4;   // p
    std::size_t filters = 5;      // K
    std::size_t kernel_width = 3; // w
    std::size_t width = 32;       // Z (seq)
    std::size_t stacks = 1;       // d (base)
    std::size_t blocks = 1;       // k (seq)
    std::size_t depth = 1;        // stacked residual seq layers
    std::size_t ffn_hidden = 0;   // 0 -> 4 * Z
    std::size_t head_hidden = 0;  // 0 -> single dense head
    MemoryMode memory = MemoryMode::per_patch;
    PlanStrategy plan = PlanStrategy::random;
    double sigma = 8.0;
    Activation activation = Activation::relu;
    double dropout = 0.0;
};

/// Parameter counts per component. `core` is the patch filters and patch
/// biases only (J*K*p + J per reduction), excluding convolutions.
struct ParamBreakdown {
    std::vector<std::pair<std::string, std::size_t>> components;
    std::size_t core = 0;
    std::size_t total = 0;
};

/// Analytic count from the configuration alone.
ParamBreakdown param_count(const ModelConfig& config, const TaskSpec& task);

/// A complete network: IGLOO-base stack or IGLOO-seq layers, plus the
/// task head. Parameters and patch plans are created from named substreams
/// of the seed ("init", "patches").
class Model {
public:
    Model(const ModelConfig& config, const TaskSpec& task, std::uint64_t seed);

    /// Raw head output: classify -> [B, P, C]; regress -> [B, 1];
    /// per_step -> [B, L, C].
    Var forward(Tape& tape, const Tensor& inputs, bool training, Rng* rng) const;
    Tensor predict(const Tensor& inputs) const;

    /// The sequence representation before the head ([B, d*J] or [B, L, Z]).
    Tensor represent(const Tensor& inputs) const;

    const ModelConfig& config() const { return config_; }
    const TaskSpec& task() const { return task_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    std::vector<PatchPlan> patch_plans() const;
    std::vector<SeqPatchPlan> seq_patch_plans() const;
    /// Replaces plans (e.g. from a checkpoint); dimensions must match.
    void set_plans(const std::vector<PatchPlan>& base, const std::vector<SeqPatchPlan>& seq);
    /// Replaces parameter values; names and shapes must match exactly.
    void set_parameters(const ParameterSet& params);

    const std::optional<IglooBase>& base() const { return base_; }
    const std::vector<IglooSeqLayer>& seq_layers() const { return seq_; }

private:
    Tensor head_forward(const Tensor& rep) const;
    Var head_forward(Tape& tape, const Var& rep) const;

    ModelConfig config_;
    TaskSpec task_;
    ParameterSet params_;
    std::optional<IglooBase> base_;
    std::vector<IglooSeqLayer> seq_;
    std::optional<Dense> hidden_;
    std::optional<Dense> head_;
};

} // namespace igloo
