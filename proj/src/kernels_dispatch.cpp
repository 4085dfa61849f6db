#include <atomic>
#include <cstdlib>
#include <string>

#include "alba/errors.hpp"
#include "alba/kernels.hpp"

#if defined(__x86_64__) && !defined(_MSC_VER)
#include <cpuid.h>
#endif

namespace alba::kern {

bool cpu_has_avx2() {
#if defined(__x86_64__) && !defined(_MSC_VER)
  unsigned a, b, c, d;
  if (!__get_cpuid(1, &a, &b, &c, &d)) return false;
  const bool osxsave = (c & (1u << 27)) != 0;
  const bool avx = (c & (1u << 28)) != 0;
  if (!osxsave || !avx) return false;
  // OS must enable XMM+YMM state saving.
  unsigned eax_x, edx_x;
  __asm__ volatile(".byte 0x0f, 0x01, 0xd0" : "=a"(eax_x), "=d"(edx_x) : "c"(0));
  if ((eax_x & 0x6) != 0x6) return false;
  unsigned a7, b7, c7, d7;
  if (!__get_cpuid_count(7, 0, &a7, &b7, &c7, &d7)) return false;
  return (b7 & (1u << 5)) != 0;
#else
  return false;
#endif
}

namespace {

std::atomic<const KernelsF32*> g_active{nullptr};

const KernelsF32* lookup(const std::string& name) {
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") {
    const KernelsF32* t = avx2_kernels();
    if (!t || !cpu_has_avx2()) throw ConfigError("AVX2 kernels requested but unavailable on this CPU");
    return t;
  }
  throw ConfigError("unknown kernel table '" + name + "' (expected scalar|avx2)");
}

const KernelsF32* pick() {
  if (const char* env = std::getenv("ALBA_KERNELS")) return lookup(env);
  const KernelsF32* t = avx2_kernels();
  if (t && cpu_has_avx2()) return t;
  return &scalar_kernels();
}

}  // namespace

const KernelsF32& active() {
  const KernelsF32* p = g_active.load(std::memory_order_acquire);
  if (!p) {
    p = pick();
    g_active.store(p, std::memory_order_release);
  }
  return *p;
}

void force(const std::string& name) { g_active.store(lookup(name), std::memory_order_release); }

}  // namespace alba::kern
