#include "tlc/kernels.hpp"

namespace tlc::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void affine_scalar(const double* w, const double* bias, const double* x, double* y,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot_scalar(w + r * cols, x, cols);
}

void affine_transpose_acc_scalar(const double* w, const double* y_grad, double* x_grad,
                                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(y_grad[r], w + r * cols, x_grad, cols);
}

void outer_acc_scalar(const double* y_grad, const double* x, double* w_grad, std::size_t rows,
                      std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(y_grad[r], x, w_grad + r * cols, cols);
}

constexpr KernelTable kScalar{dot_scalar, axpy_scalar, affine_scalar,
                              affine_transpose_acc_scalar, outer_acc_scalar};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace tlc::kernels::detail
