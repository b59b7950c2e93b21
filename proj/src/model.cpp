// SPDX-License-Identifier: Apache-2.0
#include "igloo/model.hpp"

#include <map>

#include "igloo/ops.hpp"

namespace igloo {

std::string to_string(Architecture a) { return a == Architecture::seq ? "seq" : "base"; }

Architecture parse_architecture(const std::string& s) {
    if (s == "base") return Architecture::base;
    if (s == "seq") return Architecture::seq;
    throw ConfigError("unknown architecture '" + s + "' (expected base or seq)");
}

namespace {

void validate(const ModelConfig& c, const TaskSpec& task) {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) {
            throw ConfigError(std::string("model.") + name + " must be >= 1");
        }
    };
    positive(c.patches, "J");
    positive(c.patch_size, "p");
    positive(c.filters, "K");
    positive(c.kernel_width, "w");
    positive(c.width, "Z");
    positive(c.stacks, "stacks");
    positive(c.blocks, "blocks");
    positive(c.depth, "depth");
    if (c.dropout < 0 || c.dropout >= 1) {
        throw ConfigError("model.dropout must be in [0, 1)");
    }
    if (task.length == 0 || task.channels == 0) {
        throw ConfigError("task has an empty input shape");
    }
    if (c.arch == Architecture::base) {
        if (task.output == OutputKind::per_step) {
            throw ConfigError("per-step outputs need model.arch=seq");
        }
        if (c.plan == PlanStrategy::gaussian_causal) {
            throw ConfigError("model.plan=gaussian builds per-step plans and needs model.arch=seq");
        }
    } else if (task.output != OutputKind::per_step) {
        throw ConfigError("model.arch=seq produces per-step outputs; this task needs model.arch=base");
    }
}

std::size_t head_outputs(const TaskSpec& task) {
    switch (task.output) {
    case OutputKind::classify:
        return task.positions * task.classes;
    case OutputKind::regress:
        return 1;
    case OutputKind::per_step:
        return task.classes;
    }
    return 1;
}

std::size_t rep_width(const ModelConfig& c) {
    return c.arch == Architecture::base ? c.stacks * c.patches : c.width;
}

IglooSeqConfig seq_config(const ModelConfig& c, const TaskSpec& task, std::size_t layer) {
    IglooSeqConfig s;
    s.length = task.length;
    s.in_channels = layer == 0 ? task.channels : c.width;
    s.filters = c.filters;
    s.kernel_width = c.kernel_width;
    s.patches = c.patches;
    s.patch_size = c.patch_size;
    s.width = c.width;
    s.blocks = c.blocks;
    s.ffn_hidden = c.ffn_hidden;
    s.memory = c.memory;
    s.dropout = static_cast<real>(c.dropout);
    return s;
}

} // namespace

ParamBreakdown param_count(const ModelConfig& c, const TaskSpec& task) {
    validate(c, task);
    std::map<std::string, std::size_t> parts;
    ParamBreakdown out;
    if (c.arch == Architecture::base) {
        for (std::size_t i = 0; i < c.stacks; ++i) {
            const std::size_t in = i == 0 ? task.channels : c.filters;
            parts["conv"] += c.kernel_width * in * c.filters + c.filters;
            out.core += c.patches * c.filters * c.patch_size + c.patches;
        }
    } else {
        const std::size_t ffn = c.ffn_hidden == 0 ? 4 * c.width : c.ffn_hidden;
        const std::size_t memory = c.memory == MemoryMode::literal ? task.length * c.width : c.patches * c.width;
        for (std::size_t l = 0; l < c.depth; ++l) {
            const std::size_t in = l == 0 ? task.channels : c.width;
            for (std::size_t n = 0; n < c.blocks; ++n) {
                parts["conv"] += c.kernel_width * in * c.filters + c.filters;
                out.core += c.patches * c.filters * c.patch_size + c.patches;
                parts["value_projection"] += c.filters * c.width;
                parts["memory"] += memory;
            }
            if (in != c.width) {
                parts["residual_projection"] += in * c.width;
            }
            parts["feed_forward"] += c.width * ffn + ffn + ffn * c.width + c.width;
        }
    }
    std::size_t head_in = rep_width(c);
    if (c.head_hidden > 0) {
        parts["head_hidden"] += head_in * c.head_hidden + c.head_hidden;
        head_in = c.head_hidden;
    }
    parts["head"] += head_in * head_outputs(task) + head_outputs(task);

    out.components.emplace_back("patch_core", out.core);
    out.total = out.core;
    for (const auto& [name, n] : parts) {
        out.components.emplace_back(name, n);
        out.total += n;
    }
    return out;
}

Model::Model(const ModelConfig& config, const TaskSpec& task, std::uint64_t seed) : config_(config), task_(task) {
    validate(config, task);
    if (config.arch == Architecture::base) {
        IglooBaseConfig bc;
        bc.in_channels = task.channels;
        bc.filters = config.filters;
        bc.kernel_width = config.kernel_width;
        bc.patches = config.patches;
        bc.patch_size = config.patch_size;
        bc.stacks = config.stacks;
        bc.activation = config.activation;
        bc.dropout = static_cast<real>(config.dropout);
        std::vector<PatchPlan> plans;
        for (std::size_t i = 0; i < config.stacks; ++i) {
            if (config.plan == PlanStrategy::deterministic) {
                plans.push_back(make_deterministic_plan(task.length, config.patches, config.patch_size));
            } else {
                const auto s = Rng::derive_seed(seed, "patches/base/stack" + std::to_string(i));
                plans.push_back(make_random_plan(task.length, config.patches, config.patch_size, s));
            }
        }
        base_.emplace("base", bc, std::move(plans));
    } else {
        for (std::size_t l = 0; l < config.depth; ++l) {
            std::vector<SeqPatchPlan> plans;
            for (std::size_t n = 0; n < config.blocks; ++n) {
                const auto s = Rng::derive_seed(seed, "patches/seq/layer" + std::to_string(l) + "/block" +
                                                          std::to_string(n));
                plans.push_back(
                    make_causal_seq_plan(task.length, config.patches, config.patch_size, config.sigma, s));
            }
            seq_.emplace_back("seq" + std::to_string(l), seq_config(config, task, l), std::move(plans));
        }
    }
    std::size_t head_in = rep_width(config);
    if (config.head_hidden > 0) {
        hidden_.emplace("head_hidden", head_in, config.head_hidden);
        head_in = config.head_hidden;
    }
    head_.emplace("head", head_in, head_outputs(task));

    Rng init = Rng::substream(seed, "init");
    if (base_) {
        base_->init(params_, init);
    }
    for (const auto& layer : seq_) {
        layer.init(params_, init);
    }
    if (hidden_) {
        hidden_->init(params_, init);
    }
    head_->init(params_, init);
}

Tensor Model::head_forward(const Tensor& rep) const {
    Tensor h = hidden_ ? ops::relu(hidden_->forward(params_, rep)) : rep;
    return head_->forward(params_, h);
}

Var Model::head_forward(Tape& tape, const Var& rep) const {
    Var h = hidden_ ? ad::relu(hidden_->forward(tape, params_, rep)) : rep;
    return head_->forward(tape, params_, h);
}

namespace {
void check_inputs(const Tensor& inputs, const TaskSpec& task) {
    if (inputs.rank() != 3 || inputs.shape()[1] != task.length || inputs.shape()[2] != task.channels) {
        throw ShapeError("model expects inputs [B, " + std::to_string(task.length) + ", " +
                         std::to_string(task.channels) + "], got " + to_string(inputs.shape()));
    }
}
} // namespace

Tensor Model::represent(const Tensor& inputs) const {
    check_inputs(inputs, task_);
    if (base_) {
        return base_->forward(params_, inputs);
    }
    Tensor h = inputs;
    for (const auto& layer : seq_) {
        h = layer.forward(params_, h);
    }
    return h;
}

Tensor Model::predict(const Tensor& inputs) const {
    Tensor out = head_forward(represent(inputs));
    if (task_.output == OutputKind::classify) {
        return std::move(out).reshaped({inputs.shape()[0], task_.positions, task_.classes});
    }
    return out;
}

Var Model::forward(Tape& tape, const Tensor& inputs, bool training, Rng* rng) const {
    check_inputs(inputs, task_);
    Var x = tape.constant(inputs);
    Var rep;
    if (base_) {
        rep = base_->forward(tape, params_, x, training, rng);
    } else {
        rep = x;
        for (const auto& layer : seq_) {
            rep = layer.forward(tape, params_, rep, training, rng);
        }
    }
    Var out = head_forward(tape, rep);
    if (task_.output == OutputKind::classify) {
        return ad::reshape(out, {inputs.shape()[0], task_.positions, task_.classes});
    }
    return out;
}

std::vector<PatchPlan> Model::patch_plans() const {
    std::vector<PatchPlan> plans;
    if (base_) {
        for (const auto& r : base_->reducers()) {
            plans.push_back(r.plan());
        }
    }
    return plans;
}

std::vector<SeqPatchPlan> Model::seq_patch_plans() const {
    std::vector<SeqPatchPlan> plans;
    for (const auto& layer : seq_) {
        for (const auto& b : layer.blocks()) {
            plans.push_back(b.plan());
        }
    }
    return plans;
}

void Model::set_plans(const std::vector<PatchPlan>& base, const std::vector<SeqPatchPlan>& seq) {
    if (base.size() != patch_plans().size() || seq.size() != seq_patch_plans().size()) {
        throw FormatError("patch plan count does not match the model configuration");
    }
    if (base_) {
        for (std::size_t i = 0; i < base.size(); ++i) {
            base_->reducers()[i].set_plan(base[i]);
        }
    }
    std::size_t k = 0;
    for (auto& layer : seq_) {
        for (auto& b : layer.blocks()) {
            b.set_plan(seq[k++]);
        }
    }
}

void Model::set_parameters(const ParameterSet& params) {
    if (params.size() != params_.size()) {
        throw FormatError("parameter count " + std::to_string(params.size()) + " does not match the model's " +
                          std::to_string(params_.size()));
    }
    for (auto& [name, tensor] : params_) {
        if (!params.contains(name)) {
            throw FormatError("missing parameter '" + name + "'");
        }
        const Tensor& src = params.get(name);
        if (src.shape() != tensor.shape()) {
            throw FormatError("parameter '" + name + "' has shape " + to_string(src.shape()) + ", expected " +
                              to_string(tensor.shape()));
        }
        tensor = src;
    }
}

} // namespace igloo
