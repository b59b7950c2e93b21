// SPDX-License-Identifier: Apache-2.0
#include "igloo/parameters.hpp"

namespace igloo {

Tensor& ParameterSet::add(std::string name, Tensor value) {
    if (contains(name)) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
    return entries_.back().second;
}

Tensor& ParameterSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ConfigError("unknown parameter '" + name + "'");
    }
    return entries_[it->second].second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ConfigError("unknown parameter '" + name + "'");
    }
    return entries_[it->second].second;
}

std::size_t ParameterSet::element_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) {
        n += t.size();
    }
    return n;
}

} // namespace igloo
