#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace fuzzyseg::kernels {
namespace {

[[maybe_unused]] bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  const char* env = std::getenv("FUZZYSEG_KERNELS");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable* avx2_table() {
#ifdef FUZZYSEG_HAVE_AVX2
  static const bool ok = cpu_has_avx2_fma();
  return ok ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const KernelTable* t = nullptr;
  if (name == "scalar") {
    t = &scalar_table();
  } else if (name == "avx2") {
    t = avx2_table();
  }
  if (!t) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace fuzzyseg::kernels
