#include "alo/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace alo::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aip * b[p * n + j];
        }
    }
}

void matmul_grad_lhs(std::span<const double> g, std::span<const double> b, std::span<double> da,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
            da[i * k + p] += acc;
        }
    }
}

void matmul_grad_rhs(std::span<const double> a, std::span<const double> g, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * g[i * n + j];
        }
    }
}

void log_softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows,
                      std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = z.data() + r * cols;
        double* o = out.data() + r * cols;
        const double mx = *std::max_element(zr, zr + cols);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += std::exp(zr[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < cols; ++j) o[j] = zr[j] - lse;
    }
}

void log_softmax_grad_rows(std::span<const double> out, std::span<const double> g,
                           std::span<double> dz, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
            dz[r * cols + j] += g[r * cols + j] - std::exp(out[r * cols + j]) * gs;
    }
}

}  // namespace alo::kernels::serial
