#pragma once

// Dense row-major kernels used by the autodiff tape.
//
// `serial::` is the reference implementation. `parallel::` splits the outer
// loop across OpenMP threads; every output element is still accumulated in the
// same order as the reference, so both produce bit-identical results.

#include <cstddef>
#include <span>

namespace alo::kernels {

/// Work (m*k*n multiply-adds) below which the parallel kernels stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

namespace serial {

/// c[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
/// da[m×k] += g[m×n] · bᵀ
void matmul_grad_lhs(std::span<const double> g, std::span<const double> b, std::span<double> da,
                     std::size_t m, std::size_t k, std::size_t n);
/// db[k×n] += aᵀ · g[m×n]
void matmul_grad_rhs(std::span<const double> a, std::span<const double> g, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n);
/// Row-wise log-softmax with max subtraction.
void log_softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows,
                      std::size_t cols);
/// dz += g - softmax(out) * rowsum(g), where out = log_softmax(z).
void log_softmax_grad_rows(std::span<const double> out, std::span<const double> g,
                           std::span<double> dz, std::size_t rows, std::size_t cols);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_grad_lhs(std::span<const double> g, std::span<const double> b, std::span<double> da,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_grad_rhs(std::span<const double> a, std::span<const double> g, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n);
void log_softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows,
                      std::size_t cols);
void log_softmax_grad_rows(std::span<const double> out, std::span<const double> g,
                           std::span<double> dz, std::size_t rows, std::size_t cols);

}  // namespace parallel

}  // namespace alo::kernels
