// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "igloo/autodiff.hpp"
#include "igloo/layers.hpp"
#include "igloo/ops.hpp"
#include "support.hpp"

using namespace igloo;
using igloo::test::random_tensor;

namespace {

std::size_t op_nodes(const Tape& tape) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < tape.size(); ++i) n += tape.node(i).inputs.empty() ? 0 : 1;
    return n;
}

Var weighted_sum(Tape& tape, const Var& y, std::uint64_t seed) {
    Rng rng(seed);
    return ad::sum(ad::mul(y, tape.constant(random_tensor(y.value().shape(), rng))));
}

void expect_pass(const GradCheckReport& r) {
    for (const auto& e : r.entries) {
        INFO(e.name << " rel " << e.max_rel_error);
        CHECK(e.passed);
        CHECK(e.max_rel_error < 1e-4);
    }
    CHECK(r.passed);
}

ParameterSet params_of(std::initializer_list<std::pair<const char*, Shape>> specs, std::uint64_t seed) {
    Rng rng(seed);
    ParameterSet p;
    for (const auto& [name, shape] : specs) p.add(name, random_tensor(shape, rng));
    return p;
}

} // namespace

TEST_CASE("forward records op nodes and matches eager evaluation") {
    Tape tape;
    const Var x = tape.constant(Tensor::vector({-1, 2}));
    const Var y = ad::relu(x);
    CHECK(y.value() == Tensor::vector({0, 2}));
    CHECK(op_nodes(tape) == 1);

    Tape t2;
    Rng rng(1);
    const Tensor xv = random_tensor({3, 4}, rng);
    const Tensor vv = random_tensor({4, 2}, rng);
    const Var out = ad::matmul(ad::softmax(t2.constant(xv)), t2.constant(vv));
    CHECK(op_nodes(t2) == 2);
    CHECK(out.value() == ops::matmul(ops::softmax_lastaxis(xv), vv));
}

TEST_CASE("taped IGLOO-base forward equals eager forward") {
    IglooBaseConfig c;
    c.in_channels = 3;
    c.filters = 4;
    c.patches = 6;
    c.patch_size = 3;
    c.stacks = 2;
    const std::size_t L = 20;
    IglooBase base("b", c, {make_random_plan(L, 6, 3, 1), make_random_plan(L, 6, 3, 2)});
    ParameterSet params;
    Rng rng(5);
    base.init(params, rng);
    const Tensor x = random_tensor({2, L, 3}, rng);
    Tape tape;
    const Var y = base.forward(tape, params, tape.constant(x), false, nullptr);
    CHECK(max_abs_diff(y.value(), base.forward(params, x)) < 1e-12);
}

TEST_CASE("backward examples") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor({3, 2}, real{0.3}));
    const Gradients g = tape.backward(ad::sum(x));
    CHECK(g.at("x") == Tensor({3, 2}, real{1}));

    Tape t2;
    const Var f = t2.parameter("f", Tensor({3, 1}, std::vector<real>{4, 5, 6}));
    const Gradients g2 = t2.backward(ad::sum(ad::gather_time(f, {1, 1})));
    CHECK(g2.at("f") == Tensor({3, 1}, std::vector<real>{0, 2, 0}));

    Tape t3;
    const Var v = t3.parameter("v", Tensor({2}, real{1}));
    CHECK_THROWS_AS(t3.backward(ad::relu(v), Tensor({3})), ShapeError);
    CHECK_THROWS_AS(t3.backward(ad::relu(v)), ShapeError);
    const Gradients g3 = t3.backward(ad::relu(v), Tensor::vector({2, 3}));
    CHECK(g3.at("v") == Tensor::vector({2, 3}));
}

TEST_CASE("unused parameters get zero gradients and shapes match") {
    Tape tape;
    const Var a = tape.parameter("a", Tensor({2, 2}, real{1}));
    tape.parameter("unused", Tensor({5}, real{1}));
    const Gradients g = tape.backward(ad::sum(a));
    CHECK(g.at("unused") == Tensor({5}, real{0}));
    CHECK(g.at("a").shape() == Shape{2, 2});
}

TEST_CASE("apply dispatches by name") {
    Tape tape;
    const Var x = tape.constant(Tensor::vector({-1, 3}));
    const Var in[] = {x};
    CHECK(ad::apply("relu", in).value() == Tensor::vector({0, 3}));
    CHECK_THROWS_AS(ad::apply("conv3d", in), UnsupportedOpError);
}

TEST_CASE("grad_check rejects non-scalar losses") {
    ParameterSet p = params_of({{"w", {3}}}, 1);
    CHECK_THROWS_AS(grad_check([](Tape& t, const ParameterSet& ps) { return ad::relu(t.parameter(ps, "w")); }, p),
                    ShapeError);
}

TEST_CASE("elementwise ops pass gradient checks") {
    ParameterSet p = params_of({{"a", {3, 4}}, {"b", {4}}, {"c", {3, 1}}}, 2);
    expect_pass(grad_check(
        [](Tape& t, const ParameterSet& ps) {
            const Var a = t.parameter(ps, "a"), b = t.parameter(ps, "b"), c = t.parameter(ps, "c");
            const Var y = ad::add(ad::mul(a, b), ad::sub(ad::scale(c, 1.7), ad::mul(c, b)));
            return weighted_sum(t, y, 3);
        },
        p));
}

TEST_CASE("relu gradient check away from the kink") {
    ParameterSet p;
    Tensor w({10});
    for (std::size_t i = 0; i < 10; ++i) w[i] = (i % 2 ? 1 : -1) * (0.1 + 0.05 * static_cast<double>(i));
    p.add("w", w);
    expect_pass(grad_check([](Tape& t, const ParameterSet& ps) { return weighted_sum(t, ad::relu(t.parameter(ps, "w")), 4); },
                           p));
    Tape tape;
    const Var z = tape.parameter("z", Tensor::vector({0, 1}));
    CHECK(tape.backward(ad::sum(ad::relu(z))).at("z") == Tensor::vector({0, 1}));
}

TEST_CASE("shape ops pass gradient checks") {
    ParameterSet p = params_of({{"x", {2, 3, 4}}}, 5);
    const auto check = [&](std::function<Var(const Var&)> op, std::uint64_t seed) {
        expect_pass(grad_check(
            [&](Tape& t, const ParameterSet& ps) { return weighted_sum(t, op(t.parameter(ps, "x")), seed); }, p));
    };
    check([](const Var& x) { return ad::sum_axes(x, {0, 2}); }, 1);
    check([](const Var& x) { return ad::tile(x, 1, 3); }, 2);
    check([](const Var& x) { return ad::transpose(x, {2, 0, 1}); }, 3);
    check([](const Var& x) { return ad::slice(x, 2, 1, 3); }, 4);
    check([](const Var& x) { return ad::reshape(x, {6, 4}); }, 5);
    check([](const Var& x) {
        const Var parts[] = {x, ad::slice(x, 1, 0, 2)};
        return ad::concat(parts, 1);
    }, 6);
    check([](const Var& x) { return ad::gather_time(x, {2, 0, 2, 1, 1}); }, 7);
    check([](const Var& x) { return ad::softmax(ad::scale(x, 3)); }, 8);
    expect_pass(grad_check([](Tape& t, const ParameterSet& ps) { return ad::mean(t.parameter(ps, "x")); }, p));
}

TEST_CASE("matmul passes gradient checks") {
    ParameterSet p = params_of({{"a", {2, 3, 4}}, {"b", {4, 5}}, {"c", {2, 5, 3}}}, 6);
    expect_pass(grad_check(
        [](Tape& t, const ParameterSet& ps) {
            const Var ab = ad::matmul(t.parameter(ps, "a"), t.parameter(ps, "b"));
            return weighted_sum(t, ad::matmul(t.parameter(ps, "c"), ab), 9);
        },
        p));
}

TEST_CASE("causal convolution passes gradient checks") {
    ParameterSet p = params_of({{"x", {2, 7, 3}}, {"k", {3, 3, 4}}, {"b", {4}}}, 7);
    expect_pass(grad_check(
        [](Tape& t, const ParameterSet& ps) {
            return weighted_sum(
                t, ad::causal_conv1d(t.parameter(ps, "x"), t.parameter(ps, "k"), t.parameter(ps, "b")), 10);
        },
        p));
}

TEST_CASE("spatial dropout passes gradient checks with a fixed mask") {
    ParameterSet p = params_of({{"f", {3, 6, 8}}}, 8);
    expect_pass(grad_check(
        [](Tape& t, const ParameterSet& ps) {
            Rng rng(99);
            return weighted_sum(t, ad::spatial_dropout(t.parameter(ps, "f"), 0.4, true, rng), 11);
        },
        p));
}

TEST_CASE("loss heads pass gradient checks") {
    ParameterSet p = params_of({{"z", {5, 4}}}, 9);
    const std::vector<int> labels{0, 3, 2, 2, 1};
    expect_pass(grad_check(
        [&](Tape& t, const ParameterSet& ps) { return ad::softmax_cross_entropy(t.parameter(ps, "z"), labels); }, p));
    Rng rng(3);
    const Tensor target = random_tensor({5, 4}, rng);
    expect_pass(grad_check([&](Tape& t, const ParameterSet& ps) { return ad::mse(t.parameter(ps, "z"), target); }, p));

    Tape tape;
    const std::vector<int> bad{0, 4, 0, 0, 0};
    CHECK_THROWS_AS(ad::softmax_cross_entropy(tape.constant(p.get("z")), bad), DataError);
}

TEST_CASE("linear layer with MSE passes gradient check") {
    Dense dense("lin", 3, 2);
    ParameterSet p;
    Rng rng(12);
    dense.init(p, rng);
    const Tensor x = random_tensor({6, 3}, rng);
    const Tensor y = random_tensor({6, 2}, rng);
    expect_pass(grad_check(
        [&](Tape& t, const ParameterSet& ps) { return ad::mse(dense.forward(t, ps, t.constant(x)), y); }, p));
}

TEST_CASE("IGLOO-base with cross-entropy head passes gradient check") {
    IglooBaseConfig c;
    c.in_channels = 2;
    c.filters = 3;
    c.patches = 5;
    c.patch_size = 2;
    IglooBase base("b", c, {make_random_plan(12, 5, 2, 3)});
    Dense head("head", 5, 4);
    ParameterSet p;
    Rng rng(13);
    base.init(p, rng);
    head.init(p, rng);
    const Tensor x = random_tensor({3, 12, 2}, rng);
    const std::vector<int> labels{1, 0, 3};
    expect_pass(grad_check(
        [&](Tape& t, const ParameterSet& ps) {
            const Var rep = base.forward(t, ps, t.constant(x), false, nullptr);
            return ad::softmax_cross_entropy(head.forward(t, ps, rep), labels);
        },
        p));
}

TEST_CASE("corrupted backward rule is detected") {
    ParameterSet p = params_of({{"w", {4, 3}}}, 14);
    const auto report = grad_check(
        [](Tape& t, const ParameterSet& ps) {
            return weighted_sum(t, ad::scale_gradient(ad::softmax(t.parameter(ps, "w")), 2), 1);
        },
        p);
    CHECK_FALSE(report.passed);
    CHECK(report.max_rel_error > 0.3);
}

TEST_CASE("vanishing gradients are reported and do not fail") {
    ParameterSet p = params_of({{"w", {3}}, {"dead", {2}}}, 15);
    const auto report = grad_check(
        [](Tape& t, const ParameterSet& ps) {
            const Var dead = ad::scale(t.parameter(ps, "dead"), 0);
            return ad::add(ad::sum(ad::mul(t.parameter(ps, "w"), t.parameter(ps, "w"))), ad::sum(dead));
        },
        p);
    CHECK(report.passed);
    CHECK(report.entry("dead").vanishing);
    CHECK_FALSE(report.entry("w").vanishing);
}

TEST_CASE("backward is linear over summed subgraphs") {
    Rng rng(16);
    const Tensor wv = random_tensor({4, 3}, rng);
    const auto g1 = [&](Tape& t, const Var& w) { return weighted_sum(t, ad::softmax(w), 21); };
    const auto g2 = [&](Tape& t, const Var& w) { return weighted_sum(t, ad::mul(w, w), 22); };
    Tape ta, tb, tc;
    const Gradients sa = ta.backward(g1(ta, ta.parameter("w", wv)));
    const Gradients sb = tb.backward(g2(tb, tb.parameter("w", wv)));
    const Var w = tc.parameter("w", wv);
    const Gradients sc = tc.backward(ad::add(g1(tc, w), g2(tc, w)));
    CHECK(max_abs_diff(sc.at("w"), ops::add(sa.at("w"), sb.at("w"))) < 1e-12);
}

TEST_CASE("repeated forward and backward runs are bit-identical") {
    IglooBaseConfig c;
    c.in_channels = 2;
    c.filters = 3;
    c.patches = 4;
    c.patch_size = 2;
    c.dropout = 0.3;
    IglooBase base("b", c, {make_random_plan(10, 4, 2, 3)});
    ParameterSet p;
    Rng init(17);
    base.init(p, init);
    const Tensor x = random_tensor({2, 10, 2}, init);
    const auto run = [&] {
        Tape t;
        Rng drop(5);
        return t.backward(ad::sum(base.forward(t, p, t.constant(x), true, &drop)));
    };
    const Gradients a = run();
    const Gradients b = run();
    for (const auto& [name, g] : a) CHECK(g == b.at(name));
}
