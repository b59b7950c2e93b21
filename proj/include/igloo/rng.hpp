// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace igloo {

/// Deterministic random source built on std::mt19937_64, whose output
/// sequence is fixed by the C++ standard. The standard distributions are
/// implementation-defined, so every conversion (uniform real, bounded
/// integer, normal) is done here to keep streams identical across
/// toolchains.
///
/// Substreams: `Rng::substream(root, "init")` derives an independent stream
/// by hashing the name (FNV-1a) and mixing it with the root seed through
/// splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

    static Rng substream(std::uint64_t root, std::string_view name);
    static std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n) by rejection; n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller; no cached spare, two uniforms per draw.
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace igloo
