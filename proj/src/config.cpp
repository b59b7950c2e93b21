// SPDX-License-Identifier: Apache-2.0
#include "igloo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "igloo/errors.hpp"

namespace igloo {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        bad_value(key, v, "a non-negative integer");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        bad_value(key, v, "a number");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "true or false");
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename Parse>
auto wrap(const std::string& key, const std::string& value, Parse parse) {
    try {
        return parse(value);
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

using Getter = std::function<std::string(const RunConfig&)>;
using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename Field>
ConfigKey size_field(std::string key, std::string help, Field field) {
    Setter set = [key, field](RunConfig& c, const std::string& v) {
        field(c) = static_cast<std::size_t>(parse_u64(key, v));
    };
    Getter get = [field](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(field(c))); };
    return {std::move(key), std::move(help), set, get};
}

template <typename Field>
ConfigKey double_field(std::string key, std::string help, Field field) {
    Setter set = [key, field](RunConfig& c, const std::string& v) { field(c) = parse_double(key, v); };
    Getter get = [field](const RunConfig& c) { return fmt(field(c)); };
    return {std::move(key), std::move(help), set, get};
}

template <typename Field>
ConfigKey string_field(std::string key, std::string help, Field field) {
    Setter set = [field](RunConfig& c, const std::string& v) { field(c) = v; };
    Getter get = [field](const RunConfig& c) { return field(c); };
    return {std::move(key), std::move(help), set, get};
}

template <typename Field, typename Parse, typename Print>
ConfigKey enum_field(std::string key, std::string help, Field field, Parse parse, Print print) {
    Setter set = [key, field, parse](RunConfig& c, const std::string& v) { field(c) = wrap(key, v, parse); };
    Getter get = [field, print](const RunConfig& c) { return print(field(c)); };
    return {std::move(key), std::move(help), set, get};
}

std::vector<ConfigKey> build_keys() {
    std::vector<ConfigKey> k;
    k.push_back(enum_field(
        "task", "copy | addition | mnist | pmnist | charlm", [](auto& c) -> auto& { return c.task.kind; },
        parse_task_kind, [](TaskKind t) { return to_string(t); }));
    k.push_back({"seed", "root seed for data, init, dropout, patches and batch order",
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                 [](const RunConfig& c) { return fmt(c.seed); }});
    k.push_back(string_field("out", "output directory", [](auto& c) -> auto& { return c.out; }));

    k.push_back({"model.arch", "auto | base | seq (auto: seq for charlm, base otherwise)",
                 [](RunConfig& c, const std::string& v) {
                     if (v == "auto") {
                         c.auto_arch = true;
                     } else {
                         c.model.arch = wrap("model.arch", v, parse_architecture);
                         c.auto_arch = false;
                     }
                 },
                 [](const RunConfig& c) { return c.auto_arch ? std::string("auto") : to_string(c.model.arch); }});
    k.push_back(size_field("model.J", "patches per reduction", [](auto& c) -> auto& { return c.model.patches; }));
    k.push_back(size_field("model.p", "time slices per patch", [](auto& c) -> auto& { return c.model.patch_size; }));
    k.push_back(size_field("model.K", "convolution filters", [](auto& c) -> auto& { return c.model.filters; }));
    k.push_back(size_field("model.w", "convolution kernel width", [](auto& c) -> auto& { return c.model.kernel_width; }));
    k.push_back(size_field("model.Z", "seq model width", [](auto& c) -> auto& { return c.model.width; }));
    k.push_back(size_field("model.d", "base stacks (successive convolutions)", [](auto& c) -> auto& { return c.model.stacks; }));
    k.push_back(size_field("model.k", "seq blocks summed per layer", [](auto& c) -> auto& { return c.model.blocks; }));
    k.push_back(size_field("model.depth", "stacked residual seq layers", [](auto& c) -> auto& { return c.model.depth; }));
    k.push_back(size_field("model.ffn_hidden", "seq feed-forward width (0: 4*Z)", [](auto& c) -> auto& { return c.model.ffn_hidden; }));
    k.push_back(size_field("model.head_hidden", "hidden relu layer before the head (0: none)", [](auto& c) -> auto& { return c.model.head_hidden; }));
    k.push_back(enum_field(
        "model.memory", "per_patch | literal", [](auto& c) -> auto& { return c.model.memory; },
        parse_memory_mode, [](MemoryMode m) { return to_string(m); }));
    k.push_back(enum_field(
        "model.plan", "random | deterministic (base patch placement)",
        [](auto& c) -> auto& { return c.model.plan; }, parse_plan_strategy,
        [](PlanStrategy s) { return to_string(s); }));
    k.push_back(double_field("model.sigma", "seq patch spread below the current step", [](auto& c) -> auto& { return c.model.sigma; }));
    k.push_back(enum_field(
        "model.activation", "identity | relu (base reductions)",
        [](auto& c) -> auto& { return c.model.activation; }, parse_activation,
        [](Activation a) { return to_string(a); }));
    k.push_back(double_field("model.dropout", "spatial dropout rate on feature maps", [](auto& c) -> auto& { return c.model.dropout; }));

    k.push_back(double_field("train.lr", "Adam learning rate", [](auto& c) -> auto& { return c.train.lr; }));
    k.push_back(double_field("train.beta1", "Adam beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    k.push_back(double_field("train.beta2", "Adam beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    k.push_back(double_field("train.epsilon", "Adam epsilon", [](auto& c) -> auto& { return c.train.epsilon; }));
    k.push_back(double_field("train.clip_norm", "global gradient norm clip (<= 0: off)", [](auto& c) -> auto& { return c.train.clip_norm; }));
    k.push_back(size_field("train.batch", "training batch size", [](auto& c) -> auto& { return c.train.batch; }));
    k.push_back(size_field("train.max_steps", "optimizer step budget", [](auto& c) -> auto& { return c.train.max_steps; }));
    k.push_back(size_field("train.max_epochs", "epoch budget (0: none)", [](auto& c) -> auto& { return c.train.max_epochs; }));
    k.push_back(size_field("train.eval_interval", "steps between evaluations", [](auto& c) -> auto& { return c.train.eval_interval; }));
    k.push_back(size_field("train.eval_batch", "evaluation batch size", [](auto& c) -> auto& { return c.train.eval_batch; }));
    k.push_back(enum_field(
        "train.threshold_on", "none | metric | loss",
        [](auto& c) -> auto& { return c.train.threshold_on; }, parse_threshold_on,
        [](ThresholdOn t) { return to_string(t); }));
    k.push_back(double_field("train.threshold", "accuracy above / mse or loss below this value", [](auto& c) -> auto& { return c.train.threshold; }));
    k.push_back({"train.stop_at_threshold", "stop once the threshold is crossed",
                 [](RunConfig& c, const std::string& v) {
                     c.train.stop_at_threshold = parse_bool("train.stop_at_threshold", v);
                 },
                 [](const RunConfig& c) { return fmt(c.train.stop_at_threshold); }});

    k.push_back(size_field("copy.T", "blank steps between symbols and marker", [](auto& c) -> auto& { return c.task.copy_delay; }));
    k.push_back(size_field("copy.train", "training samples", [](auto& c) -> auto& { return c.task.copy_train; }));
    k.push_back(size_field("copy.test", "test samples", [](auto& c) -> auto& { return c.task.copy_test; }));
    k.push_back(size_field("addition.T", "sequence length", [](auto& c) -> auto& { return c.task.addition_length; }));
    k.push_back(size_field("addition.train", "training samples", [](auto& c) -> auto& { return c.task.addition_train; }));
    k.push_back(size_field("addition.test", "test samples", [](auto& c) -> auto& { return c.task.addition_test; }));
    k.push_back(string_field("mnist.dir", "directory with the four IDX files", [](auto& c) -> auto& { return c.task.mnist_dir; }));
    k.push_back(size_field("mnist.train", "keep the first N training images (0: all)", [](auto& c) -> auto& { return c.task.mnist_train; }));
    k.push_back(size_field("mnist.test", "keep the first N test images (0: all)", [](auto& c) -> auto& { return c.task.mnist_test; }));
    k.push_back(string_field("charlm.path", "plain text corpus", [](auto& c) -> auto& { return c.task.charlm_path; }));
    k.push_back(size_field("charlm.L", "window length", [](auto& c) -> auto& { return c.task.charlm_window; }));
    k.push_back(double_field("charlm.train_fraction", "share of windows used for training", [](auto& c) -> auto& { return c.task.charlm_train_fraction; }));

    k.push_back(double_field("gradcheck.h", "finite-difference step", [](auto& c) -> auto& { return c.gradcheck.step; }));
    k.push_back(double_field("gradcheck.tol", "relative error tolerance", [](auto& c) -> auto& { return c.gradcheck.tolerance; }));
    k.push_back(size_field("gradcheck.batch", "samples in the checked loss", [](auto& c) -> auto& { return c.gradcheck.batch; }));
    k.push_back(size_field("gradcheck.max_elements", "elements probed per tensor (0: all)", [](auto& c) -> auto& { return c.gradcheck.max_elements; }));
    return k;
}

const ConfigKey& find_key(const std::string& key) {
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.key == key; });
    if (it == keys.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return *it;
}

} // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

std::string flag_for_key(const std::string& key) {
    std::string flag = "--" + key;
    std::replace(flag.begin() + 2, flag.end(), '.', '-');
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    return flag;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    find_key(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return find_key(key).get(config); }

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!seen.insert(key).second) {
            throw ConfigError(source + ":" + std::to_string(number) + ": key '" + key + "' given twice");
        }
        try {
            set_config_value(config, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig config;
    apply_config_text(config, ss.str(), path);
    return config;
}

std::string config_to_text(const RunConfig& config) {
    std::string out;
    for (const auto& k : config_keys()) {
        out += k.key + " = " + k.get(config) + "\n";
    }
    return out;
}

void resolve(RunConfig& config) {
    if (config.auto_arch) {
        config.model.arch = config.task.kind == TaskKind::charlm ? Architecture::seq : Architecture::base;
        config.auto_arch = false;
    }
    config.train.validate();
}

} // namespace igloo
