// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sentinel/tensor.hpp"

namespace sentinel {

// Named trainable tensors in deterministic construction order.
class ParamStore {
 public:
  ag::Tensor add(const std::string& name, ag::Tensor t) {
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
  }

  const ag::Tensor& find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    throw std::out_of_range("parameter not found: " + name);
  }

  bool contains(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return true;
    return false;
  }

  std::vector<std::pair<std::string, ag::Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, ag::Tensor>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void zero_grads() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

  std::size_t value_count() const {
    std::size_t c = 0;
    for (const auto& [n, t] : items_) c += static_cast<std::size_t>(t.size());
    return c;
  }

 private:
  std::vector<std::pair<std::string, ag::Tensor>> items_;
};

}  // namespace sentinel
