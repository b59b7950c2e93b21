// SPDX-License-Identifier: Apache-2.0
#include "igloo/patch_plan.hpp"

#include <algorithm>
#include <cmath>

#include "igloo/errors.hpp"
#include "igloo/rng.hpp"

namespace igloo {

std::string to_string(PlanStrategy s) {
    switch (s) {
    case PlanStrategy::random:
        return "random";
    case PlanStrategy::deterministic:
        return "deterministic";
    case PlanStrategy::gaussian_causal:
        return "gaussian";
    }
    return "unknown";
}

PlanStrategy parse_plan_strategy(const std::string& s) {
    if (s == "random") return PlanStrategy::random;
    if (s == "deterministic") return PlanStrategy::deterministic;
    if (s == "gaussian") return PlanStrategy::gaussian_causal;
    throw ConfigError("unknown patch plan strategy '" + s + "'");
}

namespace {

void check_dims(std::size_t length, std::size_t patches, std::size_t patch_size) {
    if (length == 0) {
        throw ConfigError("patch plan: sequence length must be >= 1");
    }
    if (patches == 0) {
        throw ConfigError("patch plan: need at least one patch (J >= 1)");
    }
    if (patch_size == 0) {
        throw ConfigError("patch plan: patch size must be >= 1");
    }
}

} // namespace

PatchPlan make_random_plan(std::size_t length, std::size_t patches, std::size_t patch_size, std::uint64_t seed) {
    check_dims(length, patches, patch_size);
    if (patch_size > length) {
        throw ConfigError("patch plan: patch size p=" + std::to_string(patch_size) + " exceeds sequence length L=" +
                          std::to_string(length));
    }
    PatchPlan plan{length, patches, patch_size, PlanStrategy::random, seed, {}};
    plan.locations.resize(patches * patch_size);
    Rng rng(seed);
    for (auto& loc : plan.locations) {
        loc = static_cast<std::size_t>(rng.below(length));
    }
    return plan;
}

PatchPlan make_deterministic_plan(std::size_t length, std::size_t patches, std::size_t patch_size) {
    check_dims(length, patches, patch_size);
    PatchPlan plan{length, patches, patch_size, PlanStrategy::deterministic, 0, {}};
    const std::size_t slots = patches * patch_size;
    plan.locations.resize(slots);
    for (std::size_t k = 0; k < slots; ++k) {
        plan.locations[k] = k * length / slots;
    }
    return plan;
}

SeqPatchPlan make_causal_seq_plan(std::size_t length, std::size_t patches, std::size_t patch_size, double sigma,
                                  std::uint64_t seed) {
    check_dims(length, patches, patch_size);
    if (!(sigma > 0)) {
        throw ConfigError("causal patch plan: sigma must be > 0");
    }
    SeqPatchPlan plan{length, patches, patch_size, sigma, seed, {}};
    plan.locations.resize(length * patches * patch_size);
    Rng rng(seed);
    const std::size_t per_step = patches * patch_size;
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t k = 0; k < per_step; ++k) {
            const double offset = std::abs(rng.normal()) * sigma;
            const double pos = std::round(static_cast<double>(t) - offset);
            plan.locations[t * per_step + k] =
                static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(t)));
        }
    }
    return plan;
}

} // namespace igloo
