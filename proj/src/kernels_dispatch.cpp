#include <atomic>
#include <cstdlib>
#include <string_view>

#include "bdfsde/kernels.hpp"

namespace bdfsde::kernels {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& table(Backend b) noexcept {
  if (b == Backend::avx2 && cpu_has_avx2()) {
    if (const KernelTable* t = avx2_table()) return *t;
  }
  return scalar_table();
}

namespace {

const KernelTable* initial_selection() noexcept {
  if (const char* env = std::getenv("BDFSDE_KERNELS")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  return &table(Backend::avx2);
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> sel{initial_selection()};
  return sel;
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

void select(Backend b) noexcept { current().store(&table(b), std::memory_order_release); }

}  // namespace bdfsde::kernels
