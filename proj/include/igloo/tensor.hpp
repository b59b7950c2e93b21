// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "igloo/errors.hpp"

namespace igloo {

#ifdef IGLOO_FLOAT32
using real = float;
#else
using real = double;
#endif

/// Extents of a tensor, outermost first. Unbatched sequences are (time,
/// channel); batched ones are (batch, time, channel).
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of `real`. A rank-0 tensor holds one element.
class Tensor {
public:
    Tensor() : data_(1, real{0}) {}
    explicit Tensor(Shape shape, real fill = real{0});
    Tensor(Shape shape, std::vector<real> data);

    static Tensor scalar(real value) { return Tensor(Shape{}, std::vector<real>{value}); }
    static Tensor vector(std::initializer_list<real> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<real>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }

    std::span<real> data() noexcept { return data_; }
    std::span<const real> data() const noexcept { return data_; }
    real* raw() noexcept { return data_.data(); }
    const real* raw() const noexcept { return data_.data(); }

    real& operator[](std::size_t i) noexcept { return data_[i]; }
    real operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Bounds-checked multi-index access.
    real& at(std::initializer_list<std::size_t> index);
    real at(std::initializer_list<std::size_t> index) const;

    real item() const;

    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(real value);

    bool operator==(const Tensor& other) const = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<real> data_;
};

/// Largest absolute elementwise difference; throws ShapeError on mismatch.
real max_abs_diff(const Tensor& a, const Tensor& b);

/// Checked mode: ops verify their outputs are finite and raise NumericsError
/// otherwise. On by default; the trainer switches it off for benchmarks.
void set_checked_mode(bool enabled) noexcept;
bool checked_mode() noexcept;

/// Raises NumericsError naming `op` if checked mode is on and `t` has a
/// non-finite element.
void check_finite(const Tensor& t, std::string_view op);

/// Throws ShapeError unless the shapes are equal.
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op);

} // namespace igloo
