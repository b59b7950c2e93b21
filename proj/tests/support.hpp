// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "igloo/rng.hpp"
#include "igloo/tensor.hpp"

namespace igloo::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = static_cast<real>(rng.uniform(lo, hi));
    }
    return t;
}

inline double max_abs(const Tensor& t) {
    double m = 0;
    for (real v : t.data()) {
        m = std::max(m, std::abs(static_cast<double>(v)));
    }
    return m;
}

} // namespace igloo::test
