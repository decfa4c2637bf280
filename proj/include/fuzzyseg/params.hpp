#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fuzzyseg/tensor.hpp"

namespace fuzzyseg {

enum class StoreRole { kStudent, kTeacher };

// Named parameter tensors. Teacher stores are only ever changed by
// ema_update; the optimizer refuses them.
class ParameterStore {
 public:
  explicit ParameterStore(StoreRole role = StoreRole::kStudent) : role_(role) {}

  StoreRole role() const { return role_; }
  ParameterStore as_role(StoreRole role) const;

  void set(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& mutable_at(const std::string& name);

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  // Order-sensitive FNV-1a over names and value bytes.
  std::uint64_t checksum() const;

  // Same names and shapes.
  bool matches(const ParameterStore& other) const;

 private:
  StoreRole role_;
  std::map<std::string, Tensor> entries_;
};

// theta_t <- alpha * theta_t + (1 - alpha) * theta_s for every entry.
// Throws ConfigError when the stores do not match.
void ema_update(ParameterStore& teacher, const ParameterStore& student, double alpha = 0.99);

}  // namespace fuzzyseg
