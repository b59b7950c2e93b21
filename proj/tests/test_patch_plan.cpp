// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "igloo/errors.hpp"
#include "igloo/patch_plan.hpp"

using namespace igloo;

TEST_CASE("random plan examples") {
    const PatchPlan one = make_random_plan(1, 3, 1, 7);
    CHECK(one.locations == std::vector<std::size_t>{0, 0, 0});
    CHECK(make_random_plan(10, 5, 4, 42) == make_random_plan(10, 5, 4, 42));
    CHECK(make_random_plan(10, 5, 4, 42).locations != make_random_plan(10, 5, 4, 43).locations);
    CHECK_THROWS_AS(make_random_plan(3, 2, 4, 1), ConfigError);
    CHECK_THROWS_AS(make_random_plan(3, 0, 1, 1), ConfigError);
    const PatchPlan p = make_random_plan(10, 5, 4, 42);
    CHECK(p.locations.size() == 20);
    CHECK(p.patch(2).size() == 4);
    CHECK(p.patch(2)[1] == p.locations[9]);
}

TEST_CASE("random plan indices are uniform") {
    const std::size_t L = 100;
    const PatchPlan plan = make_random_plan(L, 10000, 4, 2024);
    std::vector<double> counts(L, 0);
    for (std::size_t v : plan.locations) {
        REQUIRE(v < L);
        counts[v] += 1;
    }
    const double n = static_cast<double>(plan.locations.size());
    const double expect = n / L;
    const double sigma = std::sqrt(n * (1.0 / L) * (1 - 1.0 / L));
    double chi2 = 0;
    for (double c : counts) {
        CHECK(std::abs(c - expect) < 3.5 * sigma);
        chi2 += (c - expect) * (c - expect) / expect;
    }
    CHECK(chi2 < 150);
}

TEST_CASE("deterministic plan examples") {
    CHECK(make_deterministic_plan(4, 2, 2).locations == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(make_deterministic_plan(8, 4, 2).locations == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(make_deterministic_plan(10, 2, 2).locations == std::vector<std::size_t>{0, 2, 5, 7});
    const PatchPlan cover = make_deterministic_plan(37, 12, 4);
    std::vector<bool> hit(37, false);
    for (std::size_t v : cover.locations) hit.at(v) = true;
    CHECK(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }));
}

TEST_CASE("causal seq plan examples") {
    const SeqPatchPlan plan = make_causal_seq_plan(200, 50, 4, 5.0, 77);
    for (std::size_t v : plan.step(0)) CHECK(v == 0);
    CHECK_THROWS_AS(make_causal_seq_plan(10, 2, 2, 0.0, 1), ConfigError);
    CHECK(make_causal_seq_plan(30, 3, 2, 2.0, 5) == make_causal_seq_plan(30, 3, 2, 2.0, 5));
}

TEST_CASE("causal seq plan concentrates below the current step") {
    const std::size_t t = 100;
    const SeqPatchPlan plan = make_causal_seq_plan(t + 1, 2500, 4, 5.0, 9);
    const auto step = plan.step(t);
    REQUIRE(step.size() == 10000);
    double sum = 0;
    std::size_t near = 0;
    for (std::size_t v : step) {
        CHECK(v <= t);
        sum += static_cast<double>(v);
        near += v + 20 >= t ? 1 : 0;
    }
    const double mean = sum / static_cast<double>(step.size());
    CHECK(mean >= 92);
    CHECK(mean <= 100);
    CHECK(static_cast<double>(near) / static_cast<double>(step.size()) >= 0.99);
}

TEST_CASE("causal plan never looks ahead at any step") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const SeqPatchPlan plan = make_causal_seq_plan(64, 8, 4, 12.0, seed);
        for (std::size_t t = 0; t < 64; ++t) {
            const auto s = plan.step(t);
            CHECK(*std::max_element(s.begin(), s.end()) <= t);
        }
    }
}

TEST_CASE("plans stay in bounds under every strategy") {
    for (std::size_t L : {1u, 2u, 9u, 50u}) {
        for (std::size_t p : {1u, 2u}) {
            if (p > L) continue;
            for (std::size_t v : make_random_plan(L, 7, p, L).locations) CHECK(v < L);
            for (std::size_t v : make_deterministic_plan(L, 7, p).locations) CHECK(v < L);
            for (std::size_t v : make_causal_seq_plan(L, 7, p, 3.0, L).locations) CHECK(v < L);
        }
    }
}

TEST_CASE("strategy names round trip") {
    for (auto s : {PlanStrategy::random, PlanStrategy::deterministic, PlanStrategy::gaussian_causal})
        CHECK(parse_plan_strategy(to_string(s)) == s);
    CHECK_THROWS_AS(parse_plan_strategy("spiral"), ConfigError);
}
