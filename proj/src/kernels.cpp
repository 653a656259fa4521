#include <atomic>
#include <cstdlib>
#include <string_view>

#include "ttsnap/kernels.hpp"

namespace ttsnap::kernels {

#if defined(TTSNAP_HAVE_AVX2)
const KernelTable& avx2_table_impl() noexcept;
#endif

const KernelTable* avx2_table() noexcept {
#if defined(TTSNAP_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("TTSNAP_KERNELS")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(Backend backend) noexcept {
  const KernelTable* t = backend == Backend::Scalar ? &scalar_table() : avx2_table();
  if (t == nullptr) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

std::string_view name(Backend backend) noexcept {
  return backend == Backend::Scalar ? "scalar" : "avx2";
}

}  // namespace ttsnap::kernels
