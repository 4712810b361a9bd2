#include <atomic>
#include <cstdlib>
#include <string_view>

#include "rhlp/kernels.hpp"

namespace rhlp::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(RHLP_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa best_available() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

Isa initial_isa() {
  if (const char* env = std::getenv("RHLP_KERNELS")) {
    Isa requested;
    if (parse_isa(env, requested) && isa_available(requested)) return requested;
  }
  return best_available();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(initial_isa())};
  return slot;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return cpu_has_avx2();
  }
  return false;
}

const KernelTable& table(Isa isa) {
#if defined(RHLP_HAVE_AVX2_KERNELS)
  if (isa == Isa::avx2 && cpu_has_avx2()) return detail::kAvx2Table;
#endif
  (void)isa;
  return detail::kScalarTable;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) {
  active_slot().store(&table(isa), std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool parse_isa(std::string_view name, Isa& out) {
  if (name == "scalar") {
    out = Isa::scalar;
  } else if (name == "avx2") {
    out = Isa::avx2;
  } else if (name == "auto") {
    out = best_available();
  } else {
    return false;
  }
  return true;
}

}  // namespace rhlp::kernels
