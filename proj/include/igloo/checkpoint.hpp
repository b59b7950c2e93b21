// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igloo/config.hpp"
#include "igloo/model.hpp"
#include "igloo/parameters.hpp"
#include "igloo/patch_plan.hpp"
#include "igloo/trainer.hpp"

namespace igloo {

/// Binary layout, all integers little-endian:
///   "IGLO" | u32 version | u32 len + resolved config text
///   | task spec (u32 length, channels, output, positions, classes)
///   | u32 n + base plans | u32 n + seq plans
///   | u32 n + tensors (u32 name len, name, u32 rank, u32 dims, f64 data)
///   | u8 has_adam [u64 step | m tensors | v tensors]
constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
    std::string config_text;
    TaskSpec task;
    std::vector<PatchPlan> plans;
    std::vector<SeqPatchPlan> seq_plans;
    ParameterSet params;
    std::optional<AdamState> adam;
};

Checkpoint make_checkpoint(const Model& model, const RunConfig& config, const AdamState* adam = nullptr);

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Bad magic, version mismatch or truncation raise FormatError.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the config and model stored in a checkpoint.
struct RestoredRun {
    RunConfig config;
    Model model;
};
RestoredRun restore(const Checkpoint& ckpt);

} // namespace igloo
