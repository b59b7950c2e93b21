// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "igloo/tensor.hpp"

// Eager tensor primitives. Every layer in the library is composed from these,
// and the autodiff tape calls them for forward values.
//
// Broadcasting follows the usual right-aligned rule: two extents are
// compatible when equal or when one of them is 1; missing leading axes count
// as 1. Only mul/add/sub broadcast; everything else is shape-exact.
namespace igloo::ops {

Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real factor);
Tensor relu(const Tensor& x);

/// Sums a broadcast result back down to `target` (the reverse of
/// broadcasting). Used for gradients of broadcast binary ops.
Tensor sum_to_shape(const Tensor& x, const Shape& target);

/// Sums over the listed axes and drops them. Summing every axis yields a
/// rank-0 tensor.
Tensor sum_axes(const Tensor& x, std::span<const std::size_t> axes);
Tensor sum_axes(const Tensor& x, std::initializer_list<std::size_t> axes);
Tensor sum_all(const Tensor& x);

/// Inserts a new axis of extent `times` at position `axis` and repeats the
/// input along it: tile([a,b], 0, 3) == [[a,b],[a,b],[a,b]].
Tensor tile(const Tensor& x, std::size_t axis, std::size_t times);

/// General axis permutation; out.shape[i] == x.shape[perm[i]].
Tensor transpose(const Tensor& x, std::span<const std::size_t> perm);
Tensor transpose(const Tensor& x, std::initializer_list<std::size_t> perm);

/// Half-open [begin, end) slice along one axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Concatenation along an existing axis; other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

/// Batched matrix product over the last two axes. Leading axes broadcast.
/// `ta`/`tb` multiply by the transpose of the corresponding operand.
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);

/// Rows of the time axis (second to last) picked by `indices`. Accepts
/// [L, K] or [B, L, K]; duplicates are allowed.
Tensor gather_time(const Tensor& f, std::span<const std::size_t> indices);
Tensor gather_time(const Tensor& f, std::initializer_list<std::size_t> indices);

/// Adds the rows of `g` ([p, K] or [B, p, K]) into the rows `indices` of a
/// zero tensor shaped like the gather source.
Tensor scatter_time_add(const Tensor& g, std::span<const std::size_t> indices, const Shape& source_shape);

/// out[t, k] = bias[k] + sum_{i<w, m<M} x[t-w+1+i, m] * kernel[i, m, k],
/// with x zero-padded on the left. x is [L, M] or [B, L, M]; kernel is
/// [w, M, K]; bias is [K].
Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};

/// Gradients of causal_conv1d given the upstream gradient of its output.
ConvGrads causal_conv1d_backward(const Tensor& x, const Tensor& kernel, const Tensor& grad_out);

/// Softmax over the last axis with max subtraction.
Tensor softmax_lastaxis(const Tensor& x);

/// log(softmax(x)) over the last axis.
Tensor log_softmax_lastaxis(const Tensor& x);

} // namespace igloo::ops
