#pragma once

#include <string>
#include <utility>
#include <vector>

#include "leap/core/tensor.hpp"

namespace leap {

// Named parameter collection with deterministic iteration order. Registration
// order defines checkpoint layout and optimizer update order.
template <class T>
class ParamMap {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    for (auto& [n, _] : items_)
      if (n == name) throw Error("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  Tensor<T>& at(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw Error("unknown parameter: " + name);
  }

  bool contains(const std::string& name) const {
    for (auto& [n, _] : items_)
      if (n == name) return true;
    return false;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  size_t size() const { return items_.size(); }

  void zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

  // Merge another collection under a name prefix; tensors stay shared.
  void adopt(const std::string& prefix, ParamMap<T>& other) {
    for (auto& [n, t] : other) items_.emplace_back(prefix + n, t);
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

}  // namespace leap
