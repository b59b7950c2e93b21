// SPDX-License-Identifier: Apache-2.0
#include "igloo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace igloo::ops {

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        s[i - 1] = s[i] * shape[i];
    }
    return s;
}

// Strides of `shape` viewed inside a broadcast result of rank `rank`;
// broadcast axes get stride 0.
std::vector<std::size_t> aligned_strides(const Shape& shape, std::size_t rank) {
    std::vector<std::size_t> out(rank, 0);
    auto own = strides_of(shape);
    const std::size_t lead = rank - shape.size();
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out[lead + i] = shape[i] == 1 ? 0 : own[i];
    }
    return out;
}

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f, const char* op) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
            out[i] = f(a[i], b[i]);
        }
        check_finite(out, op);
        return out;
    }
    Shape shape;
    try {
        shape = broadcast_shapes(a.shape(), b.shape());
    } catch (const ShapeError&) {
        throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " +
                         to_string(b.shape()));
    }
    Tensor out(shape);
    const std::size_t rank = shape.size();
    // b repeats as a trailing block of a
    if (a.shape() == shape && b.size() > 0 && shape.size() >= b.rank() &&
        std::equal(b.shape().begin(), b.shape().end(), shape.end() - static_cast<std::ptrdiff_t>(b.rank()))) {
        const std::size_t n = b.size();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = f(a[i], b[i % n]);
        }
        check_finite(out, op);
        return out;
    }
    auto sa = aligned_strides(a.shape(), rank);
    auto sb = aligned_strides(b.shape(), rank);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0;
    std::size_t ob = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(a[oa], b[ob]);
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            oa += sa[ax];
            ob += sb[ax];
            if (idx[ax] < shape[ax]) {
                break;
            }
            oa -= sa[ax] * shape[ax];
            ob -= sb[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
    check_finite(out, op);
    return out;
}

// Sums x into a tensor whose aligned strides are `dst_strides` (0 on
// reduced axes).
void accumulate_strided(const Tensor& x, const std::vector<std::size_t>& dst_strides, Tensor& dst) {
    const auto& shape = x.shape();
    const std::size_t rank = shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t od = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dst[od] += x[i];
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            od += dst_strides[ax];
            if (idx[ax] < shape[ax]) {
                break;
            }
            od -= dst_strides[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}

std::size_t time_axis(const Tensor& f, const char* op) {
    if (f.rank() != 2 && f.rank() != 3) {
        throw ShapeError(std::string(op) + ": expected [L, K] or [B, L, K], got " + to_string(f.shape()));
    }
    return f.rank() - 2;
}

} // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, [](real x, real y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, [](real x, real y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, [](real x, real y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& x, real factor) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * factor;
    }
    check_finite(out, "scale");
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] > 0 ? x[i] : real{0};
    }
    return out;
}

Tensor sum_to_shape(const Tensor& x, const Shape& target) {
    if (x.shape() == target) {
        return x;
    }
    if (broadcast_shapes(x.shape(), target) != x.shape()) {
        throw ShapeError("sum_to_shape: " + to_string(target) + " does not broadcast to " + to_string(x.shape()));
    }
    Tensor out(target);
    accumulate_strided(x, aligned_strides(target, x.rank()), out);
    return out;
}

Tensor sum_axes(const Tensor& x, std::span<const std::size_t> axes) {
    std::vector<bool> reduce(x.rank(), false);
    for (auto ax : axes) {
        if (ax >= x.rank()) {
            throw ShapeError("sum_axes: axis " + std::to_string(ax) + " out of range for " + to_string(x.shape()));
        }
        reduce[ax] = true;
    }
    Shape kept;
    Shape with_ones = x.shape();
    for (std::size_t i = 0; i < x.rank(); ++i) {
        if (reduce[i]) {
            with_ones[i] = 1;
        } else {
            kept.push_back(x.shape()[i]);
        }
    }
    Tensor out(with_ones);
    accumulate_strided(x, aligned_strides(with_ones, x.rank()), out);
    return std::move(out).reshaped(kept);
}

Tensor sum_axes(const Tensor& x, std::initializer_list<std::size_t> axes) {
    return sum_axes(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor sum_all(const Tensor& x) {
    real s = 0;
    for (auto v : x.data()) {
        s += v;
    }
    return Tensor::scalar(s);
}

Tensor tile(const Tensor& x, std::size_t axis, std::size_t times) {
    if (axis > x.rank() || times == 0) {
        throw ShapeError("tile: invalid axis/times for " + to_string(x.shape()));
    }
    Shape shape = x.shape();
    shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), times);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= x.shape()[i];
    }
    const std::size_t inner = x.size() / outer;
    Tensor out(shape);
    real* dst = out.raw();
    for (std::size_t o = 0; o < outer; ++o) {
        const real* src = x.raw() + o * inner;
        for (std::size_t j = 0; j < times; ++j) {
            std::copy(src, src + inner, dst);
            dst += inner;
        }
    }
    return out;
}

Tensor transpose(const Tensor& x, std::span<const std::size_t> perm) {
    const std::size_t rank = x.rank();
    if (perm.size() != rank) {
        throw ShapeError("transpose: permutation rank mismatch for " + to_string(x.shape()));
    }
    std::vector<bool> seen(rank, false);
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (perm[i] >= rank || seen[perm[i]]) {
            throw ShapeError("transpose: invalid permutation");
        }
        seen[perm[i]] = true;
        shape[i] = x.shape()[perm[i]];
    }
    const auto src_strides = strides_of(x.shape());
    std::vector<std::size_t> step(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        step[i] = src_strides[perm[i]];
    }
    Tensor out(shape);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t os = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[os];
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            os += step[ax];
            if (idx[ax] < shape[ax]) {
                break;
            }
            os -= step[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

Tensor transpose(const Tensor& x, std::initializer_list<std::size_t> perm) {
    return transpose(x, std::span<const std::size_t>(perm.begin(), perm.size()));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= x.rank() || begin >= end || end > x.shape()[axis]) {
        throw ShapeError("slice: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + to_string(x.shape()));
    }
    Shape shape = x.shape();
    shape[axis] = end - begin;
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= x.shape()[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) {
        inner *= x.shape()[i];
    }
    Tensor out(shape);
    const std::size_t extent = x.shape()[axis];
    const std::size_t len = (end - begin) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        const real* src = x.raw() + (o * extent + begin) * inner;
        std::copy(src, src + len, out.raw() + o * len);
    }
    return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) {
        throw ShapeError("concat: no inputs");
    }
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) {
        throw ShapeError("concat: axis out of range for " + to_string(first));
    }
    Shape shape = first;
    shape[axis] = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.size()) {
            throw ShapeError("concat: rank mismatch " + to_string(first) + " vs " + to_string(p.shape()));
        }
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != axis && p.shape()[i] != first[i]) {
                throw ShapeError("concat: extent mismatch " + to_string(first) + " vs " + to_string(p.shape()));
            }
        }
        shape[axis] += p.shape()[axis];
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= first[i];
    }
    Tensor out(shape);
    real* dst = out.raw();
    for (std::size_t o = 0; o < outer; ++o) {
        for (const auto& p : parts) {
            const std::size_t block = p.size() / outer;
            const real* src = p.raw() + o * block;
            dst = std::copy(src, src + block, dst);
        }
    }
    return out;
}

namespace {

// c (m x q) += op(a) * op(b); a is m x n (or n x m when ta), b is n x q (or
// q x n when tb).
void gemm(const real* a, const real* b, real* c, std::size_t m, std::size_t n, std::size_t q, bool ta, bool tb) {
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i) {
            real* crow = c + i * q;
            for (std::size_t k = 0; k < n; ++k) {
                const real aik = a[i * n + k];
                const real* brow = b + k * q;
                for (std::size_t j = 0; j < q; ++j) {
                    crow[j] += aik * brow[j];
                }
            }
        }
    } else if (ta && !tb) {
        for (std::size_t k = 0; k < n; ++k) {
            const real* arow = a + k * m;
            const real* brow = b + k * q;
            for (std::size_t i = 0; i < m; ++i) {
                const real aki = arow[i];
                real* crow = c + i * q;
                for (std::size_t j = 0; j < q; ++j) {
                    crow[j] += aki * brow[j];
                }
            }
        }
    } else if (!ta && tb) {
        for (std::size_t i = 0; i < m; ++i) {
            const real* arow = a + i * n;
            for (std::size_t j = 0; j < q; ++j) {
                const real* brow = b + j * n;
                real s = 0;
                for (std::size_t k = 0; k < n; ++k) {
                    s += arow[k] * brow[k];
                }
                c[i * q + j] += s;
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < q; ++j) {
                real s = 0;
                for (std::size_t k = 0; k < n; ++k) {
                    s += a[k * m + i] * b[j * n + k];
                }
                c[i * q + j] += s;
            }
        }
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul: operands need rank >= 2, got " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
    }
    const std::size_t ar = a.shape()[a.rank() - 2];
    const std::size_t ac = a.shape()[a.rank() - 1];
    const std::size_t br = b.shape()[b.rank() - 2];
    const std::size_t bc = b.shape()[b.rank() - 1];
    const std::size_t m = ta ? ac : ar;
    const std::size_t n = ta ? ar : ac;
    const std::size_t nb = tb ? bc : br;
    const std::size_t q = tb ? br : bc;
    if (n != nb) {
        throw ShapeError("matmul: inner dimensions differ for " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
    }
    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    Shape batch;
    try {
        batch = broadcast_shapes(a_batch, b_batch);
    } catch (const ShapeError&) {
        throw ShapeError("matmul: batch dimensions of " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " do not broadcast");
    }
    Shape shape = batch;
    shape.push_back(m);
    shape.push_back(q);
    Tensor out(shape);

    // Shared right operand and untransposed left: one tall product.
    if (b_batch.empty() && !ta) {
        gemm(a.raw(), b.raw(), out.raw(), numel(a_batch) * m, n, q, false, tb);
        check_finite(out, "matmul");
        return out;
    }

    const std::size_t rank = batch.size();
    auto sa = aligned_strides(a_batch, rank);
    auto sb = aligned_strides(b_batch, rank);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0;
    std::size_t ob = 0;
    const std::size_t nbatch = numel(batch);
    for (std::size_t t = 0; t < nbatch; ++t) {
        gemm(a.raw() + oa * m * n, b.raw() + ob * n * q, out.raw() + t * m * q, m, n, q, ta, tb);
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            oa += sa[ax];
            ob += sb[ax];
            if (idx[ax] < batch[ax]) {
                break;
            }
            oa -= sa[ax] * batch[ax];
            ob -= sb[ax] * batch[ax];
            idx[ax] = 0;
        }
    }
    check_finite(out, "matmul");
    return out;
}

Tensor gather_time(const Tensor& f, std::span<const std::size_t> indices) {
    const std::size_t axis = time_axis(f, "gather_time");
    const std::size_t length = f.shape()[axis];
    const std::size_t width = f.shape()[axis + 1];
    const std::size_t batch = axis == 1 ? f.shape()[0] : 1;
    if (indices.empty()) {
        throw ShapeError("gather_time: empty index list");
    }
    for (auto i : indices) {
        if (i >= length) {
            throw IndexError("gather_time: index " + std::to_string(i) + " outside [0, " + std::to_string(length) +
                             ")");
        }
    }
    Shape shape = f.shape();
    shape[axis] = indices.size();
    Tensor out(shape);
    real* dst = out.raw();
    for (std::size_t b = 0; b < batch; ++b) {
        const real* src = f.raw() + b * length * width;
        for (auto i : indices) {
            dst = std::copy(src + i * width, src + (i + 1) * width, dst);
        }
    }
    return out;
}

Tensor gather_time(const Tensor& f, std::initializer_list<std::size_t> indices) {
    return gather_time(f, std::span<const std::size_t>(indices.begin(), indices.size()));
}

Tensor scatter_time_add(const Tensor& g, std::span<const std::size_t> indices, const Shape& source_shape) {
    Tensor out(source_shape);
    const std::size_t axis = time_axis(out, "scatter_time_add");
    const std::size_t length = source_shape[axis];
    const std::size_t width = source_shape[axis + 1];
    const std::size_t batch = axis == 1 ? source_shape[0] : 1;
    if (g.size() != batch * indices.size() * width) {
        throw ShapeError("scatter_time_add: gradient " + to_string(g.shape()) + " does not match " +
                         std::to_string(indices.size()) + " rows of " + to_string(source_shape));
    }
    const real* src = g.raw();
    for (std::size_t b = 0; b < batch; ++b) {
        real* dst = out.raw() + b * length * width;
        for (auto i : indices) {
            if (i >= length) {
                throw IndexError("scatter_time_add: index " + std::to_string(i) + " out of range");
            }
            for (std::size_t c = 0; c < width; ++c) {
                dst[i * width + c] += src[c];
            }
            src += width;
        }
    }
    return out;
}

namespace {

struct ConvDims {
    std::size_t batch, length, in, width, out;
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernel) {
    if ((x.rank() != 2 && x.rank() != 3) || kernel.rank() != 3) {
        throw ShapeError("causal_conv1d: expected x [L,M] or [B,L,M] and kernel [w,M,K], got " +
                         to_string(x.shape()) + " and " + to_string(kernel.shape()));
    }
    ConvDims d{};
    d.batch = x.rank() == 3 ? x.shape()[0] : 1;
    d.length = x.shape()[x.rank() - 2];
    d.in = x.shape()[x.rank() - 1];
    d.width = kernel.shape()[0];
    d.out = kernel.shape()[2];
    if (kernel.shape()[1] != d.in) {
        throw ShapeError("causal_conv1d: kernel " + to_string(kernel.shape()) + " does not match input channels of " +
                         to_string(x.shape()));
    }
    return d;
}

} // namespace

Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    const ConvDims d = conv_dims(x, kernel);
    if (bias.rank() != 1 || bias.size() != d.out) {
        throw ShapeError("causal_conv1d: bias " + to_string(bias.shape()) + " does not match kernel " +
                         to_string(kernel.shape()));
    }
    Shape shape = x.shape();
    shape.back() = d.out;
    Tensor out(shape);
    for (std::size_t b = 0; b < d.batch; ++b) {
        const real* xb = x.raw() + b * d.length * d.in;
        real* ob = out.raw() + b * d.length * d.out;
        for (std::size_t t = 0; t < d.length; ++t) {
            real* orow = ob + t * d.out;
            std::copy(bias.raw(), bias.raw() + d.out, orow);
            for (std::size_t i = 0; i < d.width; ++i) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(d.width - 1);
                if (s < 0) {
                    continue;
                }
                const real* xrow = xb + static_cast<std::size_t>(s) * d.in;
                for (std::size_t m = 0; m < d.in; ++m) {
                    const real xv = xrow[m];
                    if (xv == 0) {
                        continue;
                    }
                    const real* krow = kernel.raw() + (i * d.in + m) * d.out;
                    for (std::size_t k = 0; k < d.out; ++k) {
                        orow[k] += xv * krow[k];
                    }
                }
            }
        }
    }
    check_finite(out, "causal_conv1d");
    return out;
}

ConvGrads causal_conv1d_backward(const Tensor& x, const Tensor& kernel, const Tensor& grad_out) {
    const ConvDims d = conv_dims(x, kernel);
    ConvGrads g{Tensor(x.shape()), Tensor(kernel.shape()), Tensor(Shape{d.out})};
    for (std::size_t b = 0; b < d.batch; ++b) {
        const real* xb = x.raw() + b * d.length * d.in;
        real* dxb = g.input.raw() + b * d.length * d.in;
        const real* gb = grad_out.raw() + b * d.length * d.out;
        for (std::size_t t = 0; t < d.length; ++t) {
            const real* grow = gb + t * d.out;
            for (std::size_t k = 0; k < d.out; ++k) {
                g.bias[k] += grow[k];
            }
            for (std::size_t i = 0; i < d.width; ++i) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(d.width - 1);
                if (s < 0) {
                    continue;
                }
                const real* xrow = xb + static_cast<std::size_t>(s) * d.in;
                real* dxrow = dxb + static_cast<std::size_t>(s) * d.in;
                for (std::size_t m = 0; m < d.in; ++m) {
                    const real* krow = kernel.raw() + (i * d.in + m) * d.out;
                    real* dkrow = g.kernel.raw() + (i * d.in + m) * d.out;
                    const real xv = xrow[m];
                    real acc = 0;
                    for (std::size_t k = 0; k < d.out; ++k) {
                        acc += grow[k] * krow[k];
                        dkrow[k] += xv * grow[k];
                    }
                    dxrow[m] += acc;
                }
            }
        }
    }
    return g;
}

Tensor softmax_lastaxis(const Tensor& x) {
    const std::size_t n = x.rank() == 0 ? 1 : x.shape().back();
    const std::size_t rows = x.size() / n;
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const real* src = x.raw() + r * n;
        real* dst = out.raw() + r * n;
        const real mx = *std::max_element(src, src + n);
        real total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = std::exp(src[i] - mx);
            total += dst[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] /= total;
        }
    }
    check_finite(out, "softmax");
    return out;
}

Tensor log_softmax_lastaxis(const Tensor& x) {
    const std::size_t n = x.rank() == 0 ? 1 : x.shape().back();
    const std::size_t rows = x.size() / n;
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const real* src = x.raw() + r * n;
        real* dst = out.raw() + r * n;
        const real mx = *std::max_element(src, src + n);
        real total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            total += std::exp(src[i] - mx);
        }
        const real lse = mx + std::log(total);
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = src[i] - lse;
        }
    }
    check_finite(out, "log_softmax");
    return out;
}

} // namespace igloo::ops
