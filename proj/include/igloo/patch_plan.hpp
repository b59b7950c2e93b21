// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace igloo {

enum class PlanStrategy { random, deterministic, gaussian_causal };

std::string to_string(PlanStrategy s);
PlanStrategy parse_plan_strategy(const std::string& s);

/// Which time rows each of the J patches gathers: `locations` is J x p,
/// row-major. Built once with the model and never resampled.
struct PatchPlan {
    std::size_t length = 0;     // L
    std::size_t patches = 0;    // J
    std::size_t patch_size = 0; // p
    PlanStrategy strategy = PlanStrategy::random;
    std::uint64_t seed = 0;
    std::vector<std::size_t> locations;

    std::span<const std::size_t> patch(std::size_t j) const {
        return std::span<const std::size_t>(locations).subspan(j * patch_size, patch_size);
    }
    bool operator==(const PatchPlan&) const = default;
};

/// One J x p plan per time step; entry t only references steps <= t.
/// `locations` is L x J x p, row-major.
struct SeqPatchPlan {
    std::size_t length = 0;
    std::size_t patches = 0;
    std::size_t patch_size = 0;
    double sigma = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> locations;

    std::span<const std::size_t> step(std::size_t t) const {
        return std::span<const std::size_t>(locations).subspan(t * patches * patch_size, patches * patch_size);
    }
    bool operator==(const SeqPatchPlan&) const = default;
};

/// Every index i.i.d. uniform on [0, L). Requires J >= 1 and 1 <= p <= L.
PatchPlan make_random_plan(std::size_t length, std::size_t patches, std::size_t patch_size, std::uint64_t seed);

/// Even-stride grid: patch j, slot i gets floor((j*p + i) * L / (J*p)).
PatchPlan make_deterministic_plan(std::size_t length, std::size_t patches, std::size_t patch_size);

/// Per-step plans concentrated just behind each step: index =
/// round(t - |N(0, sigma)|) clamped to [0, t], sampled with replacement.
SeqPatchPlan make_causal_seq_plan(std::size_t length, std::size_t patches, std::size_t patch_size, double sigma,
                                  std::uint64_t seed);

} // namespace igloo
