// SPDX-License-Identifier: Apache-2.0
// igloo: train, evaluate, benchmark and gradient-check IGLOO models.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "igloo/checkpoint.hpp"
#include "igloo/config.hpp"
#include "igloo/errors.hpp"
#include "igloo/model.hpp"
#include "igloo/tasks.hpp"
#include "igloo/trainer.hpp"

namespace fs = std::filesystem;
using namespace igloo;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_diverged = 2;

struct Options {
    std::string config_path;
    std::map<std::string, std::string> overrides;
    std::string checkpoint;
    std::size_t runs = 1;
    bool inject_bad_grad = false;
    bool unchecked = false;
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void add_config_flags(CLI::App& app, Options& opt) {
    for (const auto& key : config_keys()) {
        std::string names = flag_for_key(key.key);
        if (key.key.rfind("train.", 0) == 0) {
            names += "," + flag_for_key(key.key.substr(6));
        }
        app.add_option_function<std::string>(
               names, [&opt, k = key.key](const std::string& v) { opt.overrides[k] = v; }, key.help)
            ->group("Config keys");
    }
}

RunConfig build_config(const Options& opt) {
    RunConfig config;
    if (!opt.config_path.empty()) {
        config = load_config_file(opt.config_path);
    }
    for (const auto& [key, value] : opt.overrides) {
        set_config_value(config, key, value);
    }
    resolve(config);
    return config;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write '" + path.string() + "'");
    }
    out << text;
}

void print_params(const ParamBreakdown& pc) {
    std::cout << "params: core=" << pc.core << " total=" << pc.total << " (";
    bool first = true;
    for (const auto& [name, n] : pc.components) {
        std::cout << (first ? "" : ", ") << name << "=" << n;
        first = false;
    }
    std::cout << ")\n";
}

int cmd_train(const Options& opt) {
    const RunConfig config = build_config(opt);
    const fs::path out(config.out);
    fs::create_directories(out);
    write_text(out / "config.txt", config_to_text(config));

    const TaskData data = make_task(config.task, config.seed);
    Model model(config.model, data.train.spec, config.seed);
    print_params(param_count(config.model, data.train.spec));

    std::ofstream csv(out / "metrics.csv");
    if (!csv) {
        throw FormatError("cannot write '" + (out / "metrics.csv").string() + "'");
    }
    csv << "step,epoch,wall_time_s,train_loss,eval_loss,eval_metric\n" << std::flush;

    const bool higher_better = metric_is_accuracy(data.train.spec.output);
    std::optional<double> best;
    TrainHooks hooks;
    hooks.on_eval = [&](const EvalRecord& r, const Model& m, const AdamState& adam) {
        csv << r.step << ',' << num(r.epoch) << ',' << num(r.wall_time_s) << ',' << num(r.train_loss) << ','
            << num(r.eval_loss) << ',' << num(r.eval_metric) << '\n'
            << std::flush;
        std::cout << "step " << r.step << " epoch " << r.epoch << " time " << r.wall_time_s << "s train_loss "
                  << r.train_loss << " eval_loss " << r.eval_loss << " " << metric_name(data.train.spec.output)
                  << " " << r.eval_metric << std::endl;
        const bool better =
            !best || (higher_better ? r.eval_metric > *best : r.eval_metric < *best);
        if (better && std::isfinite(r.eval_metric)) {
            best = r.eval_metric;
            save_checkpoint((out / "best.ckpt").string(), make_checkpoint(m, config, &adam));
        }
    };

    AdamState adam;
    try {
        const RunMetrics metrics = train(model, data, config.train, config.seed, hooks, &adam);
        save_checkpoint((out / "final.ckpt").string(), make_checkpoint(model, config, &adam));
        if (metrics.threshold_time_s) {
            std::cout << "threshold crossed at step " << *metrics.threshold_step << " after "
                      << *metrics.threshold_time_s << "s\n";
        }
        std::cout << "final " << metric_name(data.train.spec.output) << " " << num(metrics.records.back().eval_metric)
                  << " eval_loss " << num(metrics.records.back().eval_loss) << "\n";
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_diverged;
    }
    return exit_ok;
}

int cmd_eval(const Options& opt) {
    if (opt.checkpoint.empty()) {
        throw ConfigError("eval needs --checkpoint");
    }
    const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
    RestoredRun run = restore(ckpt);
    for (const auto& [key, value] : opt.overrides) {
        if (key.rfind("model.", 0) == 0 || key == "seed") {
            throw ConfigError("'" + key + "' is fixed by the checkpoint and cannot be overridden in eval");
        }
        set_config_value(run.config, key, value);
    }
    const TaskData data = make_task(run.config.task, run.config.seed);
    if (data.test.spec.length != ckpt.task.length || data.test.spec.channels != ckpt.task.channels ||
        data.test.spec.output != ckpt.task.output || data.test.spec.classes != ckpt.task.classes) {
        throw ConfigError("task data does not match the checkpoint's model");
    }
    const EvalResult r = evaluate(run.model, data.test, run.config.train.eval_batch);
    std::cout << "eval_loss " << num(r.loss) << "\n"
              << metric_name(data.test.spec.output) << " " << num(r.metric) << "\n"
              << "samples " << r.samples << "\n";
    return exit_ok;
}

int cmd_bench(const Options& opt) {
    const RunConfig config = build_config(opt);
    const BenchSummary s = bench(config.model, config.task, config.train, opt.runs, config.seed);
    const fs::path out(config.out);
    fs::create_directories(out);
    write_text(out / "config.txt", config_to_text(config));
    std::ofstream csv(out / "bench.csv");
    csv << "run,seed,crossed,diverged,time_s,steps,final_metric,params\n";
    std::printf("%-8s %-22s %-8s %-12s %-8s %-14s %s\n", "run", "seed", "crossed", "time_s", "steps", "final_metric",
                "params");
    for (std::size_t i = 0; i < s.runs.size(); ++i) {
        const auto& r = s.runs[i];
        csv << i << ',' << r.seed << ',' << r.crossed << ',' << r.diverged << ',' << num(r.time_s) << ',' << r.steps
            << ',' << num(r.final_metric) << ',' << s.params.total << '\n';
        std::printf("%-8zu %-22llu %-8s %-12.3f %-8zu %-14.6g %zu\n", i, static_cast<unsigned long long>(r.seed),
                    r.crossed ? "yes" : "no", r.time_s, r.steps, r.final_metric, s.params.total);
    }
    csv << "summary,,,," << num(s.mean_time_s) << ",,std=" << num(s.std_time_s) << " failures=" << s.failures << ','
        << s.params.total << '\n';
    std::printf("summary  mean_time_s %.3f std %.3f failures %zu/%zu params %zu (core %zu)\n", s.mean_time_s,
                s.std_time_s, s.failures, s.runs.size(), s.params.total, s.params.core);
    return exit_ok;
}

int cmd_gradcheck(const Options& opt) {
    const RunConfig config = build_config(opt);
    const TaskData data = make_task(config.task, config.seed);
    if (data.train.spec.length > 64) {
        throw ConfigError("gradcheck needs sequence length <= 64, task has " + std::to_string(data.train.spec.length));
    }
    const Model model(config.model, data.train.spec, config.seed);
    const Batch batch = data.train.range(0, std::max<std::size_t>(1, config.gradcheck.batch));
    const OutputKind kind = data.train.spec.output;
    const real factor = opt.inject_bad_grad ? real{2} : real{1};

    Model probe = model;
    LossBuilder build = [&](Tape& tape, const ParameterSet& params) {
        probe.set_parameters(params);
        Var out = probe.forward(tape, batch.inputs, false, nullptr);
        return task_loss(ad::scale_gradient(out, factor), batch, kind);
    };
    GradCheckOptions go;
    go.step = config.gradcheck.step;
    go.tolerance = config.gradcheck.tolerance;
    go.max_elements_per_tensor = config.gradcheck.max_elements;
    go.seed = config.seed;
    const GradCheckReport report = grad_check(build, model.parameters(), go);

    std::printf("%-32s %8s %14s %14s %s\n", "tensor", "checked", "max_rel_err", "max_abs_grad", "status");
    for (const auto& e : report.entries) {
        std::printf("%-32s %8zu %14.3e %14.3e %s\n", e.name.c_str(), e.checked, e.max_rel_error, e.max_abs_analytic,
                    !e.passed ? "FAIL" : (e.vanishing ? "ok (vanishing)" : "ok"));
    }
    if (config.model.arch == Architecture::seq && config.model.memory == MemoryMode::literal) {
        std::printf("note: memory=literal is degenerate: every row of V is identical, so the attention logits "
                    "(conv, filter, patch_bias) receive no gradient and do not affect the output\n");
    }
    std::printf("%s: max relative error %.3e (tolerance %.1e)\n", report.passed ? "PASS" : "FAIL",
                report.max_rel_error, go.tolerance);
    return report.passed ? exit_ok : exit_config;
}

void write_rows(const fs::path& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write '" + path.string() + "'");
    }
    const std::size_t L = d.spec.length;
    const std::size_t M = d.spec.channels;
    const std::size_t w = d.label_width();
    for (std::size_t s = 0; s < d.samples; ++s) {
        bool first = true;
        auto put = [&](const std::string& v) {
            out << (first ? "" : ",") << v;
            first = false;
        };
        if (!d.tokens.empty()) {
            for (std::size_t t = 0; t < L; ++t) put(std::to_string(d.tokens[s * L + t]));
        } else {
            for (std::size_t i = 0; i < L * M; ++i) put(num(d.dense[s * L * M + i]));
        }
        if (w > 0) {
            for (std::size_t i = 0; i < w; ++i) put(std::to_string(d.labels[s * w + i]));
        } else {
            put(num(d.targets[s]));
        }
        out << '\n';
    }
}

int cmd_gen_data(const Options& opt) {
    const RunConfig config = build_config(opt);
    const fs::path out(config.out);
    fs::create_directories(out);
    const TaskData data = make_task(config.task, config.seed);
    write_rows(out / "train.csv", data.train);
    write_rows(out / "test.csv", data.test);
    write_text(out / "config.txt", config_to_text(config));
    std::cout << "wrote " << data.train.samples << " train and " << data.test.samples << " test samples to "
              << out.string() << "\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IGLOO sequence models: train, eval, bench, gradcheck, gen-data"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--config,-c", opt.config_path, "key = value config file");
    app.add_flag("--unchecked", opt.unchecked, "disable NaN/Inf checks after every op");
    add_config_flags(app, opt);

    auto* train = app.add_subcommand("train", "train a model and write metrics.csv and checkpoints");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its task's test split");
    eval->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
    auto* bench = app.add_subcommand("bench", "repeat training and report time to threshold");
    bench->add_option("--runs", opt.runs, "number of independent runs")->check(CLI::PositiveNumber);
    auto* gradcheck = app.add_subcommand("gradcheck", "compare backward() with finite differences");
    gradcheck->add_flag("--inject-bad-grad", opt.inject_bad_grad, "double the output gradient (detector check)");
    auto* gen = app.add_subcommand("gen-data", "write the task's train/test samples as CSV");
    for (auto* sub : {train, eval, bench, gradcheck, gen}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }
    set_checked_mode(!opt.unchecked);

    try {
        if (*train) return cmd_train(opt);
        if (*eval) return cmd_eval(opt);
        if (*bench) return cmd_bench(opt);
        if (*gradcheck) return cmd_gradcheck(opt);
        if (*gen) return cmd_gen_data(opt);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_diverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_config;
}
