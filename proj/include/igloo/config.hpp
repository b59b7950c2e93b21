// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "igloo/model.hpp"
#include "igloo/tasks.hpp"
#include "igloo/trainer.hpp"

namespace igloo {

struct GradcheckConfig {
    double step = 1e-5;
    double tolerance = 1e-4;
    std::size_t batch = 2;
    std::size_t max_elements = 0; // per tensor, 0 = all
};

/// Everything a run needs. `auto_arch` picks seq for per-step tasks and
/// base otherwise; resolve() fixes it before the config is echoed.
struct RunConfig {
    TaskConfig task;
    ModelConfig model;
    TrainConfig train;
    GradcheckConfig gradcheck;
    bool auto_arch = true;
    std::uint64_t seed = 1;
    std::string out = "runs/latest";
};

/// One entry of the flat key schema. Flags are derived from keys:
/// "model.J" -> --model-J, "train.max_steps" -> --train-max-steps.
struct ConfigKey {
    std::string key;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
std::string flag_for_key(const std::string& key);

/// Unknown keys and unparsable values raise ConfigError naming the key.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Parses `key = value` lines; '#' starts a comment. Repeated keys within
/// one text are rejected.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source = "<text>");
RunConfig load_config_file(const std::string& path);

/// Every key in schema order, one `key = value` per line.
std::string config_to_text(const RunConfig& config);

void resolve(RunConfig& config);

} // namespace igloo
