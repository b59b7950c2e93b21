// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "igloo/tensor.hpp"

namespace igloo {

/// Named trainable tensors in insertion order. Names are unique and
/// hierarchical by convention ("seq0.block1.filter").
class ParameterSet {
public:
    using Entry = std::pair<std::string, Tensor>;

    /// Adds a new tensor; throws ConfigError on a duplicate name.
    Tensor& add(std::string name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Sum of element counts over all tensors.
    std::size_t element_count() const;

    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Gradient per parameter name; each has the shape of its parameter.
using Gradients = std::map<std::string, Tensor>;

} // namespace igloo
