#include <atomic>
#include <cstdlib>
#include <string>

#include "routing/kernels.hpp"

namespace routing::simd {

#if defined(ROUTING_HAVE_AVX2)
const KernelTable& avx2_kernel_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(ROUTING_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_default() {
  if (const char* env = std::getenv("ROUTING_SIMD"); env != nullptr && std::string(env) == "scalar")
    return &scalar_kernels();
  if (const KernelTable* wide = avx2_kernels()) return wide;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_kernels() {
#if defined(ROUTING_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() { return *active_table().load(std::memory_order_relaxed); }

Isa active_isa() { return kernels().isa; }

bool force_isa(Isa isa) {
  const KernelTable* table = isa == Isa::scalar ? &scalar_kernels() : avx2_kernels();
  if (table == nullptr) return false;
  active_table().store(table, std::memory_order_relaxed);
  return true;
}

}  // namespace routing::simd
