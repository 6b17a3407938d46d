#include <atomic>
#include <cstdlib>
#include <string>

#include "tlc/error.hpp"
#include "tlc/kernels.hpp"

namespace tlc::kernels {
namespace {

bool cpu_has_avx2_fma() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() noexcept {
  if (const char* env = std::getenv("TLC_KERNELS"); env && std::string_view(env) == "scalar")
    return Backend::kScalar;
  return backend_available(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& current() noexcept {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::kScalar: return true;
    case Backend::kAvx2: return detail::avx2_table() != nullptr && cpu_has_avx2_fma();
  }
  return false;
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b))
    throw InvalidArgument("kernel backend '" + std::string(backend_name(b)) +
                          "' is not available on this machine");
  current().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
  if (!backend_available(b))
    throw InvalidArgument("kernel backend '" + std::string(backend_name(b)) +
                          "' is not available on this machine");
  return b == Backend::kAvx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& active() {
  return active_backend() == Backend::kAvx2 ? *detail::avx2_table() : detail::scalar_table();
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw InvalidArgument("axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace tlc::kernels
