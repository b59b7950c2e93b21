// SPDX-License-Identifier: Apache-2.0
#include "igloo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "igloo/ops.hpp"
#include "igloo/rng.hpp"

namespace igloo {

std::string to_string(ThresholdOn t) {
    switch (t) {
    case ThresholdOn::none:
        return "none";
    case ThresholdOn::metric:
        return "metric";
    case ThresholdOn::loss:
        return "loss";
    }
    return "none";
}

ThresholdOn parse_threshold_on(const std::string& s) {
    if (s == "none") return ThresholdOn::none;
    if (s == "metric") return ThresholdOn::metric;
    if (s == "loss") return ThresholdOn::loss;
    throw ConfigError("unknown threshold target '" + s + "' (expected none, metric or loss)");
}

void TrainConfig::validate() const {
    if (!(lr >= 0) || !std::isfinite(lr)) {
        throw ConfigError("train.lr must be a finite value >= 0");
    }
    if (!(beta1 >= 0 && beta1 < 1)) {
        throw ConfigError("train.beta1 must be in [0, 1)");
    }
    if (!(beta2 >= 0 && beta2 < 1)) {
        throw ConfigError("train.beta2 must be in [0, 1)");
    }
    if (!(epsilon > 0)) {
        throw ConfigError("train.epsilon must be > 0");
    }
    if (batch == 0) {
        throw ConfigError("train.batch must be >= 1");
    }
    if (eval_interval == 0) {
        throw ConfigError("train.eval_interval must be >= 1");
    }
    if (eval_batch == 0) {
        throw ConfigError("train.eval_batch must be >= 1");
    }
}

double global_norm(const Gradients& grads) {
    long double sq = 0;
    for (const auto& [name, g] : grads) {
        for (real v : g.data()) {
            sq += static_cast<long double>(v) * v;
        }
    }
    return static_cast<double>(std::sqrt(sq));
}

double clip_global_norm(Gradients& grads, double clip_norm) {
    const double norm = global_norm(grads);
    if (clip_norm > 0 && norm > clip_norm) {
        const real factor = static_cast<real>(clip_norm / norm);
        for (auto& [name, g] : grads) {
            for (real& v : g.data()) {
                v *= factor;
            }
        }
    }
    return norm;
}

double adam_step(ParameterSet& params, Gradients grads, AdamState& state, const TrainConfig& config) {
    if (checked_mode()) {
        for (const auto& [name, g] : grads) {
            for (real v : g.data()) {
                if (!std::isfinite(v)) {
                    throw NumericsError("non-finite gradient for parameter '" + name + "'");
                }
            }
        }
    }
    const double norm = clip_global_norm(grads, config.clip_norm);
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1 - std::pow(config.beta1, t);
    const double c2 = 1 - std::pow(config.beta2, t);
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            continue;
        }
        const Tensor& g = git->second;
        require_same_shape(p, g, "adam_step");
        auto [mit, m_new] = state.m.try_emplace(name, p.shape(), real{0});
        auto [vit, v_new] = state.v.try_emplace(name, p.shape(), real{0});
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        require_same_shape(p, m, "adam_step state");
        require_same_shape(p, v, "adam_step state");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = config.beta1 * m[i] + (1 - config.beta1) * gi;
            const double vi = config.beta2 * v[i] + (1 - config.beta2) * gi * gi;
            m[i] = static_cast<real>(mi);
            v[i] = static_cast<real>(vi);
            if (config.lr == 0) {
                continue;
            }
            const double mhat = mi / c1;
            const double vhat = vi / c2;
            p[i] = static_cast<real>(p[i] - config.lr * mhat / (std::sqrt(vhat) + config.epsilon));
        }
    }
    return norm;
}

bool metric_is_accuracy(OutputKind kind) { return kind != OutputKind::regress; }

std::string metric_name(OutputKind kind) { return metric_is_accuracy(kind) ? "accuracy" : "mse"; }

Var task_loss(const Var& output, const Batch& batch, OutputKind kind) {
    if (kind == OutputKind::regress) {
        return ad::mse(output, batch.targets);
    }
    const Shape& s = output.value().shape();
    const std::size_t classes = s.back();
    return ad::softmax_cross_entropy(ad::reshape(output, {output.value().size() / classes, classes}), batch.labels);
}

EvalResult score(const Tensor& output, const Batch& batch, OutputKind kind) {
    EvalResult r;
    r.samples = batch.size();
    if (kind == OutputKind::regress) {
        require_same_shape(output, batch.targets, "score");
        double sq = 0;
        for (std::size_t i = 0; i < output.size(); ++i) {
            const double d = output[i] - batch.targets[i];
            sq += d * d;
        }
        r.loss = sq / static_cast<double>(output.size());
        r.metric = r.loss;
        return r;
    }
    const std::size_t classes = output.shape().back();
    const std::size_t rows = output.size() / classes;
    if (batch.labels.size() != rows) {
        throw ShapeError("score: " + std::to_string(batch.labels.size()) + " labels for " + std::to_string(rows) +
                         " predictions");
    }
    const Tensor logp = ops::log_softmax_lastaxis(output.reshaped({rows, classes}));
    double nll = 0;
    std::size_t correct = 0;
    for (std::size_t r_i = 0; r_i < rows; ++r_i) {
        const int label = batch.labels[r_i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
        }
        const real* row = logp.raw() + r_i * classes;
        nll -= row[label];
        const auto best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
        correct += best == static_cast<std::size_t>(label) ? 1 : 0;
    }
    r.loss = nll / static_cast<double>(rows);
    r.metric = static_cast<double>(correct) / static_cast<double>(rows);
    return r;
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch) {
    if (data.samples == 0) {
        throw DataError("evaluation set is empty");
    }
    if (batch == 0) {
        throw ConfigError("evaluation batch must be >= 1");
    }
    double loss = 0;
    double metric = 0;
    for (std::size_t begin = 0; begin < data.samples; begin += batch) {
        const Batch b = data.range(begin, begin + batch);
        const EvalResult r = score(model.predict(b.inputs), b, data.spec.output);
        const double w = static_cast<double>(b.size());
        loss += r.loss * w;
        metric += r.metric * w;
    }
    const double n = static_cast<double>(data.samples);
    return {loss / n, metric / n, data.samples};
}

namespace {

bool crossed(const EvalRecord& rec, const TrainConfig& c, OutputKind kind) {
    switch (c.threshold_on) {
    case ThresholdOn::none:
        return false;
    case ThresholdOn::loss:
        return rec.eval_loss < c.threshold;
    case ThresholdOn::metric:
        return metric_is_accuracy(kind) ? rec.eval_metric > c.threshold : rec.eval_metric < c.threshold;
    }
    return false;
}

class BatchOrder {
public:
    BatchOrder(std::size_t samples, std::size_t batch, std::uint64_t seed)
        : samples_(samples), batch_(std::min(batch, samples)), rng_(seed) {
        reshuffle();
    }

    std::span<const std::size_t> next() {
        if (pos_ + batch_ > order_.size()) {
            reshuffle();
        }
        std::span<const std::size_t> out(order_.data() + pos_, batch_);
        pos_ += batch_;
        return out;
    }

    std::size_t batch() const { return batch_; }

private:
    void reshuffle() {
        order_ = rng_.permutation(samples_);
        pos_ = 0;
    }

    std::size_t samples_;
    std::size_t batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

} // namespace

RunMetrics train(Model& model, const TaskData& data, const TrainConfig& config, std::uint64_t seed,
                 const TrainHooks& hooks, AdamState* state) {
    config.validate();
    if (data.train.samples == 0) {
        throw DataError("training set is empty");
    }
    if (data.train.spec.length != model.task().length || data.train.spec.channels != model.task().channels) {
        throw ConfigError("dataset shape does not match the model's task");
    }
    AdamState local;
    AdamState& adam = state ? *state : local;
    const OutputKind kind = data.train.spec.output;
    BatchOrder order(data.train.samples, config.batch, Rng::derive_seed(seed, "order"));
    Rng dropout = Rng::substream(seed, "dropout");
    const double samples = static_cast<double>(data.train.samples);

    RunMetrics metrics;
    using clock = std::chrono::steady_clock;
    std::optional<clock::time_point> start;
    auto elapsed = [&] {
        return start ? std::chrono::duration<double>(clock::now() - *start).count() : 0.0;
    };

    double loss_sum = 0;
    std::size_t loss_count = 0;
    auto record = [&](std::size_t step) {
        EvalRecord rec;
        rec.step = step;
        rec.epoch = static_cast<double>(step * order.batch()) / samples;
        if (loss_count == 0) {
            const std::size_t n = std::min(config.eval_batch, data.train.samples);
            const Batch b = data.train.range(0, n);
            rec.train_loss = score(model.predict(b.inputs), b, kind).loss;
        } else {
            rec.train_loss = loss_sum / static_cast<double>(loss_count);
        }
        const EvalResult ev = evaluate(model, data.test, config.eval_batch);
        rec.eval_loss = ev.loss;
        rec.eval_metric = ev.metric;
        rec.wall_time_s = elapsed();
        loss_sum = 0;
        loss_count = 0;
        metrics.records.push_back(rec);
        if (!metrics.threshold_step && crossed(rec, config, kind)) {
            metrics.threshold_step = step;
            metrics.threshold_time_s = rec.wall_time_s;
        }
        if (hooks.on_eval) {
            hooks.on_eval(rec, model, adam);
        }
        if (!std::isfinite(rec.eval_loss)) {
            throw DivergenceError("evaluation loss is not finite at step " + std::to_string(step), metrics);
        }
    };

    record(0);
    const std::size_t epoch_steps =
        config.max_epochs == 0 ? 0 : (config.max_epochs * data.train.samples + order.batch() - 1) / order.batch();
    std::size_t step = 0;
    auto done = [&] {
        if (step >= config.max_steps) return true;
        if (epoch_steps > 0 && step >= epoch_steps) return true;
        return config.stop_at_threshold && metrics.threshold_step.has_value();
    };
    while (!done()) {
        const Batch b = data.train.batch(order.next());
        if (!start) {
            start = clock::now();
        }
        double loss_value = 0;
        try {
            Tape tape;
            const Var out = model.forward(tape, b.inputs, true, &dropout);
            const Var loss = task_loss(out, b, kind);
            loss_value = loss.value().item();
            if (!std::isfinite(loss_value)) {
                throw NumericsError("training loss is not finite");
            }
            adam_step(model.parameters(), tape.backward(loss), adam, config);
        } catch (const NumericsError& e) {
            metrics.steps = step;
            metrics.total_time_s = elapsed();
            throw DivergenceError(std::string("diverged at step ") + std::to_string(step + 1) + ": " + e.what(),
                                  metrics);
        }
        ++step;
        loss_sum += loss_value;
        ++loss_count;
        if (step % config.eval_interval == 0 || done()) {
            record(step);
        }
    }
    metrics.steps = step;
    metrics.total_time_s = elapsed();
    return metrics;
}

BenchSummary bench(const ModelConfig& model_config, const TaskConfig& task_config, const TrainConfig& train_config,
                   std::size_t n_runs, std::uint64_t seed) {
    if (n_runs == 0) {
        throw ConfigError("bench needs at least one run");
    }
    if (train_config.threshold_on == ThresholdOn::none) {
        throw ConfigError("bench needs a threshold (train.threshold_on)");
    }
    BenchSummary summary;
    std::vector<double> times;
    for (std::size_t i = 0; i < n_runs; ++i) {
        BenchRun run;
        run.seed = Rng::derive_seed(seed, "run" + std::to_string(i));
        const TaskData data = make_task(task_config, run.seed);
        Model model(model_config, data.train.spec, run.seed);
        if (i == 0) {
            summary.params = param_count(model_config, data.train.spec);
        }
        try {
            const RunMetrics m = train(model, data, train_config, run.seed);
            run.steps = m.steps;
            run.final_metric = m.records.back().eval_metric;
            if (m.threshold_time_s) {
                run.crossed = true;
                run.time_s = *m.threshold_time_s;
                times.push_back(run.time_s);
            } else {
                run.time_s = m.total_time_s;
            }
        } catch (const DivergenceError& e) {
            run.diverged = true;
            run.steps = e.metrics().steps;
            run.time_s = e.metrics().total_time_s;
            run.final_metric = std::numeric_limits<double>::quiet_NaN();
        }
        if (!run.crossed) {
            ++summary.failures;
        }
        summary.runs.push_back(run);
    }
    if (!times.empty()) {
        double sum = 0;
        for (double t : times) sum += t;
        summary.mean_time_s = sum / static_cast<double>(times.size());
        if (times.size() > 1) {
            double var = 0;
            for (double t : times) var += (t - summary.mean_time_s) * (t - summary.mean_time_s);
            summary.std_time_s = std::sqrt(var / static_cast<double>(times.size() - 1));
        }
    } else {
        summary.mean_time_s = std::numeric_limits<double>::quiet_NaN();
        summary.std_time_s = std::numeric_limits<double>::quiet_NaN();
    }
    return summary;
}

} // namespace igloo
