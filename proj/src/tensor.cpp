// SPDX-License-Identifier: Apache-2.0
#include "igloo/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace igloo {

namespace {
std::atomic<bool> g_checked{true};
} // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, real fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) {
            throw ShapeError("zero extent in shape " + to_string(shape_));
        }
    }
    data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) {
            throw ShapeError("zero extent in shape " + to_string(shape_));
        }
    }
    if (numel(shape_) != data_.size()) {
        throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                         " elements, got " + std::to_string(data_.size()));
    }
}

Tensor Tensor::vector(std::initializer_list<real> values) {
    return Tensor(Shape{values.size()}, std::vector<real>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<real> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw IndexError("index rank " + std::to_string(index.size()) + " does not match shape " +
                         to_string(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) {
            throw IndexError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis) +
                             " of shape " + to_string(shape_));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

real& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

real Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

real Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + to_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    if (numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), std::move(data_));
}

void Tensor::fill(real value) { std::fill(data_.begin(), data_.end(), value); }

real max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

void set_checked_mode(bool enabled) noexcept { g_checked.store(enabled, std::memory_order_relaxed); }

bool checked_mode() noexcept { return g_checked.load(std::memory_order_relaxed); }

void check_finite(const Tensor& t, std::string_view op) {
    if (!checked_mode()) {
        return;
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) {
            throw NumericsError("non-finite value produced by " + std::string(op) + " at flat index " +
                                std::to_string(i));
        }
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

} // namespace igloo
