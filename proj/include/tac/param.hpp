#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tac/errors.hpp"
#include "tac/tensor.hpp"

namespace tac {

// A named trainable tensor with its gradient slot.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value, zero-initialized

  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
};

// Ordered, name-addressable parameter collection. Iteration follows insertion
// order so every enumeration (init, checkpoints, optimizers, grad checks) is
// deterministic. Param addresses are stable for the store's lifetime; moving
// the store does not invalidate them.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param& add(std::string name, Tensor value) {
    if (index_.count(name)) {
      throw ConfigError("duplicate parameter name: " + name);
    }
    items_.push_back(std::make_unique<Param>(std::move(name), std::move(value)));
    Param& p = *items_.back();
    index_.emplace(p.name, &p);
    return p;
  }

  Param* find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : it->second;
  }
  const Param* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : it->second;
  }

  Param& at(std::string_view name) {
    Param* p = find(name);
    if (!p) throw ConfigError("unknown parameter: " + std::string(name));
    return *p;
  }
  const Param& at(std::string_view name) const {
    const Param* p = find(name);
    if (!p) throw ConfigError("unknown parameter: " + std::string(name));
    return *p;
  }

  std::size_t size() const { return items_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p->grad.zero();
  }

  // Insertion-order view.
  std::vector<Param*> params() {
    std::vector<Param*> out;
    out.reserve(items_.size());
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }
  std::vector<const Param*> params() const {
    std::vector<const Param*> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(p.get());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::unordered_map<std::string, Param*> index_;
};

}  // namespace tac
