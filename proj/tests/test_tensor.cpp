// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "igloo/ops.hpp"
#include "support.hpp"

using namespace igloo;
using igloo::test::random_tensor;

TEST_CASE("tensor construction checks shapes") {
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<real>{1, 2, 3}), ShapeError);
    Tensor t({2, 3}, real{1.5});
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 1.5);
    CHECK_THROWS_AS(t.at({2, 0}), IndexError);
    CHECK(Tensor::scalar(4).item() == 4);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("checked mode rejects non-finite results") {
    set_checked_mode(true);
    const Tensor big = Tensor::vector({1e308});
    CHECK_THROWS_AS(ops::add(big, big), NumericsError);
    set_checked_mode(false);
    CHECK(std::isinf(ops::add(big, big)[0]));
    set_checked_mode(true);
}

TEST_CASE("matmul examples") {
    const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor col = Tensor::matrix({{3}, {4}});
    CHECK(ops::matmul(id, col) == col);
    CHECK(ops::matmul(Tensor::matrix({{1, 2}}), col) == Tensor::matrix({{11}}));
    CHECK_THROWS_AS(ops::matmul(col, col), ShapeError);
    try {
        ops::matmul(col, col);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[2,1]") != std::string::npos);
    }
}

TEST_CASE("matmul matches triple loop oracle") {
    Rng rng(11);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    Tensor expect({3, 2});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a.at({i, k}) * b.at({k, j});
            expect.at({i, j}) = s;
        }
    CHECK(max_abs_diff(ops::matmul(a, b), expect) < 1e-12);

    const Tensor ba = random_tensor({2, 3, 3, 4}, rng);
    const Tensor bb = random_tensor({3, 4, 5}, rng);
    const Tensor out = ops::matmul(ba, bb);
    REQUIRE(out.shape() == Shape{2, 3, 3, 5});
    double err = 0;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t m = 0; m < 3; ++m)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 5; ++j) {
                    double s = 0;
                    for (std::size_t k = 0; k < 4; ++k) s += ba.at({n, m, i, k}) * bb.at({m, k, j});
                    err = std::max(err, std::abs(s - out.at({n, m, i, j})));
                }
    CHECK(err < 1e-12);

    const Tensor t1 = random_tensor({4, 3}, rng);
    const Tensor t2 = random_tensor({2, 4}, rng);
    CHECK(max_abs_diff(ops::matmul(t1, t2, true, true), ops::transpose(ops::matmul(t2, t1), {1, 0})) < 1e-12);
}

TEST_CASE("gather_time examples") {
    const Tensor f = Tensor::matrix({{1}, {2}, {3}});
    CHECK(ops::gather_time(f, {0, 1, 2}) == f);
    CHECK(ops::gather_time(f, {2, 2}) == Tensor::matrix({{3}, {3}}));
    CHECK_THROWS_AS(ops::gather_time(f, {3}), IndexError);
    try {
        ops::gather_time(f, {0, 7});
    } catch (const IndexError& e) {
        CHECK(std::string(e.what()).find('7') != std::string::npos);
    }

    Rng rng(3);
    const Tensor g = random_tensor({10, 4}, rng);
    const Tensor out = ops::gather_time(g, {7, 0, 3, 3});
    const std::size_t rows[] = {7, 0, 3, 3};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 4; ++c) CHECK(out.at({i, c}) == g.at({rows[i], c}));
}

TEST_CASE("gather_time batched and scatter adjoint") {
    Rng rng(5);
    const Tensor f = random_tensor({2, 6, 3}, rng);
    const std::vector<std::size_t> idx{5, 1, 1};
    const Tensor out = ops::gather_time(f, idx);
    REQUIRE(out.shape() == Shape{2, 3, 3});
    CHECK(out.at({1, 0, 2}) == f.at({1, 5, 2}));
    const Tensor g = random_tensor(out.shape(), rng);
    const Tensor back = ops::scatter_time_add(g, idx, f.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < out.size(); ++i) lhs += out[i] * g[i];
    for (std::size_t i = 0; i < f.size(); ++i) rhs += f[i] * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gather with identity indices is identity") {
    Rng rng(8);
    for (std::size_t L : {1u, 5u, 17u}) {
        const Tensor f = random_tensor({L, 3}, rng);
        std::vector<std::size_t> idx(L);
        for (std::size_t i = 0; i < L; ++i) idx[i] = i;
        CHECK(ops::gather_time(f, idx) == f);
    }
}

Tensor conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b) {
    const std::size_t L = x.dim(0), M = x.dim(1), w = k.dim(0), K = k.dim(2);
    Tensor padded({L + w - 1, M});
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t m = 0; m < M; ++m) padded.at({t + w - 1, m}) = x.at({t, m});
    Tensor out({L, K});
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < K; ++c) {
            double s = b[c];
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t m = 0; m < M; ++m) s += padded.at({t + i, m}) * k.at({i, m, c});
            out.at({t, c}) = s;
        }
    return out;
}

TEST_CASE("causal_conv1d examples") {
    Rng rng(21);
    const Tensor x = random_tensor({6, 3}, rng);
    Tensor id({1, 3, 3});
    for (std::size_t i = 0; i < 3; ++i) id.at({0, i, i}) = 1;
    CHECK(ops::causal_conv1d(x, id, Tensor({3})) == x);

    const Tensor pair = ops::causal_conv1d(Tensor({3, 1}, std::vector<real>{1, 2, 3}),
                                           Tensor({2, 1, 1}, std::vector<real>{1, 1}), Tensor({1}));
    CHECK(pair == Tensor({3, 1}, std::vector<real>{1, 3, 5}));

    const Tensor xr = random_tensor({16, 3}, rng);
    const Tensor k = random_tensor({3, 3, 5}, rng);
    const Tensor b = random_tensor({5}, rng);
    CHECK(max_abs_diff(ops::causal_conv1d(xr, k, b), conv_oracle(xr, k, b)) < 1e-12);
    CHECK_THROWS_AS(ops::causal_conv1d(xr, random_tensor({3, 2, 5}, rng), b), ShapeError);
}

TEST_CASE("causal_conv1d is causal") {
    Rng rng(4);
    const std::size_t L = 12;
    const Tensor k = random_tensor({4, 2, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    const Tensor x = random_tensor({L, 2}, rng);
    const Tensor y = ops::causal_conv1d(x, k, b);
    for (std::size_t t = 0; t < L; ++t) {
        Tensor x2 = x;
        for (std::size_t s = t + 1; s < L; ++s)
            for (std::size_t m = 0; m < 2; ++m) x2.at({s, m}) = static_cast<real>(rng.uniform(-5, 5));
        const Tensor y2 = ops::causal_conv1d(x2, k, b);
        for (std::size_t s = 0; s <= t; ++s)
            for (std::size_t c = 0; c < 3; ++c) CHECK(y2.at({s, c}) == y.at({s, c}));
    }
}

TEST_CASE("softmax examples and invariants") {
    const Tensor u = ops::softmax_lastaxis(Tensor::vector({0, 0, 0}));
    for (real v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const Tensor big = ops::softmax_lastaxis(Tensor::vector({1000, 1000}));
    CHECK(big[0] == 0.5);
    CHECK(big[1] == 0.5);
    const Tensor a = ops::softmax_lastaxis(Tensor::vector({0, std::log(3.0)}));
    CHECK(std::abs(a[0] - 0.25) < 1e-15);
    CHECK(std::abs(a[1] - 0.75) < 1e-15);

    Rng rng(9);
    const Tensor x = random_tensor({7, 9}, rng, -20, 20);
    const Tensor s = ops::softmax_lastaxis(x);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 7; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 9; ++c) {
            sum += s.at({r, c});
            shifted.at({r, c}) += static_cast<real>(r * 13.5 - 40);
        }
        CHECK(std::abs(sum - 1) < 1e-12);
    }
    CHECK(max_abs_diff(ops::softmax_lastaxis(shifted), s) < 1e-12);

    const Tensor ls = ops::log_softmax_lastaxis(x);
    double err = 0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(std::exp(ls[i]) - s[i]));
    CHECK(err < 1e-12);
}

TEST_CASE("pointwise examples") {
    CHECK(ops::tile(Tensor::vector({1, 2}), 0, 3) == Tensor::matrix({{1, 2}, {1, 2}, {1, 2}}));
    const Tensor ones({4, 3, 5}, real{1});
    const Tensor summed = ops::sum_axes(ones, {0, 1});
    CHECK(summed == Tensor({5}, real{12}));
    CHECK(ops::relu(Tensor::vector({-1, 0, 2})) == Tensor::vector({0, 0, 2}));
    CHECK_THROWS_AS(ops::add(Tensor({2, 3}), Tensor({4})), ShapeError);
    CHECK(ops::broadcast_shapes({2, 1, 3}, {4, 1}) == Shape{2, 4, 3});
}

TEST_CASE("binary ops match naive loops with broadcasting") {
    Rng rng(12);
    const Tensor a = random_tensor({3, 4, 5}, rng);
    const Tensor b = random_tensor({4, 1}, rng);
    const Tensor c = random_tensor({3, 1, 5}, rng);
    const Tensor sum = ops::add(a, b);
    const Tensor prod = ops::mul(a, c);
    const Tensor diff = ops::sub(c, b);
    REQUIRE(diff.shape() == Shape{3, 4, 5});
    double err = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t k = 0; k < 5; ++k) {
                err = std::max(err, std::abs(sum.at({i, j, k}) - (a.at({i, j, k}) + b.at({j, 0}))));
                err = std::max(err, std::abs(prod.at({i, j, k}) - a.at({i, j, k}) * c.at({i, 0, k})));
                err = std::max(err, std::abs(diff.at({i, j, k}) - (c.at({i, 0, k}) - b.at({j, 0}))));
            }
    CHECK(err < 1e-12);
    CHECK(max_abs_diff(ops::scale(a, 2.5), ops::add(ops::add(a, a), ops::scale(a, 0.5))) < 1e-12);
}

TEST_CASE("reductions, transpose, slice and concat agree with loops") {
    Rng rng(13);
    const Tensor x = random_tensor({2, 3, 4}, rng);
    const Tensor s1 = ops::sum_axes(x, {1});
    REQUIRE(s1.shape() == Shape{2, 4});
    double err = 0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 4; ++k) {
            double s = 0;
            for (std::size_t j = 0; j < 3; ++j) s += x.at({i, j, k});
            err = std::max(err, std::abs(s - s1.at({i, k})));
        }
    CHECK(err < 1e-12);
    CHECK(ops::sum_to_shape(x, {3, 1}).shape() == Shape{3, 1});
    CHECK(std::abs(ops::sum_all(x).item() - ops::sum_all(ops::sum_axes(x, {0, 2})).item()) < 1e-12);

    const Tensor t = ops::transpose(x, {2, 0, 1});
    REQUIRE(t.shape() == Shape{4, 2, 3});
    CHECK(t.at({3, 1, 2}) == x.at({1, 2, 3}));

    const Tensor sl = ops::slice(x, 1, 1, 3);
    REQUIRE(sl.shape() == Shape{2, 2, 4});
    CHECK(sl.at({1, 0, 2}) == x.at({1, 1, 2}));
    CHECK_THROWS(ops::slice(x, 1, 2, 2));

    const Tensor parts[] = {ops::slice(x, 2, 0, 1), ops::slice(x, 2, 1, 4)};
    CHECK(ops::concat(parts, 2) == x);
}
