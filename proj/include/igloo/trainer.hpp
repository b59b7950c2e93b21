// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "igloo/errors.hpp"
#include "igloo/model.hpp"
#include "igloo/parameters.hpp"
#include "igloo/tasks.hpp"

namespace igloo {

/// Which eval quantity the early-stop threshold watches. `metric` is
/// accuracy for classification tasks (higher is better) and MSE for
/// regression (lower is better); `loss` is always lower-is-better.
enum class ThresholdOn { none, metric, loss };
std::string to_string(ThresholdOn t);
ThresholdOn parse_threshold_on(const std::string& s);

struct TrainConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 1.0; // <= 0 disables clipping
    std::size_t batch = 128;
    std::size_t max_steps = 20000;
    std::size_t max_epochs = 0; // 0 = no epoch limit
    std::size_t eval_interval = 100;
    std::size_t eval_batch = 500;
    ThresholdOn threshold_on = ThresholdOn::none;
    double threshold = 0;
    bool stop_at_threshold = true;

    void validate() const;
};

struct AdamState {
    std::size_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

double global_norm(const Gradients& grads);
/// Scales every gradient by clip_norm / ||g|| when the joint norm exceeds
/// clip_norm. Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double clip_norm);

/// One Adam update with bias correction, after global-norm clipping.
/// Returns the pre-clip gradient norm. Non-finite gradients raise
/// NumericsError in checked mode.
double adam_step(ParameterSet& params, Gradients grads, AdamState& state, const TrainConfig& config);

struct EvalResult {
    double loss = 0;
    double metric = 0; // accuracy or MSE
    std::size_t samples = 0;
};

/// Higher-is-better for accuracy tasks, lower for regression.
bool metric_is_accuracy(OutputKind kind);
std::string metric_name(OutputKind kind);

/// Loss of the raw model output against a batch, recorded on the tape.
Var task_loss(const Var& output, const Batch& batch, OutputKind kind);
/// Eager mean loss and metric for a batch of predictions.
EvalResult score(const Tensor& output, const Batch& batch, OutputKind kind);

/// Inference-mode pass over the whole dataset. Empty datasets raise
/// DataError.
EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch = 500);

struct EvalRecord {
    std::size_t step = 0;
    double epoch = 0;
    double wall_time_s = 0;
    double train_loss = 0;
    double eval_loss = 0;
    double eval_metric = 0;
};

struct RunMetrics {
    std::vector<EvalRecord> records;
    std::size_t steps = 0;
    std::optional<double> threshold_time_s;
    std::optional<std::size_t> threshold_step;
    double total_time_s = 0;
};

class DivergenceError : public NumericsError {
public:
    DivergenceError(const std::string& what, RunMetrics partial)
        : NumericsError(what), metrics_(std::move(partial)) {}
    const RunMetrics& metrics() const { return metrics_; }

private:
    RunMetrics metrics_;
};

struct TrainHooks {
    /// Called after every evaluation, including the initial one.
    std::function<void(const EvalRecord&, const Model&, const AdamState&)> on_eval;
};

/// Trains until max_steps / max_epochs or the threshold is crossed. The
/// batch order and dropout masks come from the "order" and "dropout"
/// substreams of `seed`. Wall time starts at the first optimizer step.
RunMetrics train(Model& model, const TaskData& data, const TrainConfig& config, std::uint64_t seed,
                 const TrainHooks& hooks = {}, AdamState* state = nullptr);

struct BenchRun {
    std::uint64_t seed = 0;
    bool crossed = false;
    bool diverged = false;
    double time_s = 0;
    std::size_t steps = 0;
    double final_metric = 0;
};

struct BenchSummary {
    std::vector<BenchRun> runs;
    std::size_t failures = 0;
    double mean_time_s = 0; // over runs that crossed
    double std_time_s = 0;
    ParamBreakdown params;
};

/// n_runs independent trainings, each from its own "run<i>" seed
/// substream.
BenchSummary bench(const ModelConfig& model, const TaskConfig& task, const TrainConfig& train_config,
                   std::size_t n_runs, std::uint64_t seed);

} // namespace igloo
