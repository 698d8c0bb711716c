#include <cstdlib>
#include <string_view>

#include "otkd/log.hpp"
#include "otkd/simd/kernels.hpp"

namespace otkd::simd {

#if defined(OTKD_HAVE_AVX2_KERNELS)
namespace detail {
const KernelTable& avx2_table();
}
#endif

const KernelTable* avx2_kernels() {
#if defined(OTKD_HAVE_AVX2_KERNELS)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (supported) return &detail::avx2_table();
#endif
  return nullptr;
}

namespace {

const KernelTable& select_kernels() {
  if (const char* forced = std::getenv("OTKD_SIMD");
      forced != nullptr && std::string_view(forced) == "scalar") {
    return scalar_kernels();
  }
  if (const KernelTable* vector = avx2_kernels()) return *vector;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = []() -> const KernelTable& {
    const KernelTable& chosen = select_kernels();
    log::debug("simd kernels: ", chosen.name);
    return chosen;
  }();
  return table;
}

}  // namespace otkd::simd
