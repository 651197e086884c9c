#include "alo/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace alo::kernels::parallel {

namespace {
bool worth_it(std::size_t work) { return work >= kParallelThreshold; }
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* ci = c.data() + i * n;
        std::fill(ci, ci + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b.data() + p * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_grad_lhs(std::span<const double> g, std::span<const double> b, std::span<double> da,
                     std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
            da[i * k + p] += acc;
        }
    }
}

// Parallel over output rows p; each db[p, j] still sums over i ascending.
void matmul_grad_rhs(std::span<const double> a, std::span<const double> g, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n) {
    const auto out_rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
    for (std::int64_t pp = 0; pp < out_rows; ++pp) {
        const auto p = static_cast<std::size_t>(pp);
        double* dbp = db.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double aip = a[i * k + p];
            const double* gi = g.data() + i * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * gi[j];
        }
    }
}

void log_softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows,
                      std::size_t cols) {
    const auto nrows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
    for (std::int64_t rr = 0; rr < nrows; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
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
    const auto nrows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
    for (std::int64_t rr = 0; rr < nrows; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        double gs = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
            dz[r * cols + j] += g[r * cols + j] - std::exp(out[r * cols + j]) * gs;
    }
}

}  // namespace alo::kernels::parallel
