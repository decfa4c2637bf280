#include "fuzzyseg/params.hpp"

#include <cstring>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/kernels.hpp"

namespace fuzzyseg {

ParameterStore ParameterStore::as_role(StoreRole role) const {
  ParameterStore out(role);
  out.entries_ = entries_;
  return out;
}

void ParameterStore::set(const std::string& name, Tensor t) { entries_[name] = std::move(t); }

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("parameter '" + name + "' is not initialized");
  return it->second;
}

Tensor& ParameterStore::mutable_at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("parameter '" + name + "' is not initialized");
  return it->second;
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : entries_) {
    mix(name.data(), name.size());
    mix(t.data(), t.numel() * sizeof(double));
  }
  return h;
}

bool ParameterStore::matches(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
  }
  return true;
}

void ema_update(ParameterStore& teacher, const ParameterStore& student, double alpha) {
  if (!teacher.matches(student)) {
    throw ConfigError("ema_update: teacher and student stores differ in names or shapes");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("ema_update: alpha must lie in (0,1)");
  const auto& kt = kernels::active();
  for (const auto& [name, src] : student.entries()) {
    Tensor& dst = teacher.mutable_at(name);
    kt.axpby(dst.numel(), 1.0 - alpha, src.data(), alpha, dst.data());
  }
}

}  // namespace fuzzyseg
