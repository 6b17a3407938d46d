#pragma once

// Dense arithmetic kernels behind the network's affine layers.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2+FMA variant is compiled in a separate translation unit and picked at
// first use when the CPU advertises both features. The environment variable
// TLC_KERNELS=scalar (or set_backend) pins the reference path.
//
// Results are bit-reproducible for a fixed backend. Across backends they agree
// to rounding: the vector path reassociates sums and contracts mul+add.

#include <cstddef>
#include <span>
#include <string_view>

namespace tlc::kernels {

enum class Backend { kScalar, kAvx2 };

std::string_view backend_name(Backend b) noexcept;

/// True when `b` can run on this machine.
bool backend_available(Backend b) noexcept;

/// Backend currently used by the free functions below.
Backend active_backend() noexcept;

/// Pins the backend. Throws InvalidArgument if unavailable here.
void set_backend(Backend b);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[r] = bias[r] + sum_c w[r*cols + c] * x[c]
  void (*affine)(const double* w, const double* bias, const double* x, double* y,
                 std::size_t rows, std::size_t cols);
  // x_grad[c] += sum_r w[r*cols + c] * y_grad[r]
  void (*affine_transpose_acc)(const double* w, const double* y_grad, double* x_grad,
                               std::size_t rows, std::size_t cols);
  // w_grad[r*cols + c] += y_grad[r] * x[c]
  void (*outer_acc)(const double* y_grad, const double* x, double* w_grad,
                    std::size_t rows, std::size_t cols);
};

/// Table for a specific backend (for equivalence tests and benchmarks).
const KernelTable& table(Backend b);

/// Table for the active backend.
const KernelTable& active();

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace detail {
const KernelTable& scalar_table() noexcept;
// Null when the AVX2 translation unit is not built for this target.
const KernelTable* avx2_table() noexcept;
}  // namespace detail

}  // namespace tlc::kernels
