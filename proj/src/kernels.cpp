#include "stylealign/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace stylealign::kernels {

namespace {

// One output row. Accumulation runs over p = 0..k-1 for every element.
inline void gemm_row(Transpose t, GemmDims d, const double *a, const double *b, double *out, std::size_t i) {
    double *row = out + i * d.n;
    std::fill(row, row + d.n, 0.0);
    switch (t) {
    case Transpose::none:
        // a: m x k, b: k x n
        for (std::size_t p = 0; p < d.k; ++p) {
            const double av = a[i * d.k + p];
            const double *brow = b + p * d.n;
            for (std::size_t j = 0; j < d.n; ++j) {
                row[j] += av * brow[j];
            }
        }
        break;
    case Transpose::lhs:
        // a: k x m, b: k x n
        for (std::size_t p = 0; p < d.k; ++p) {
            const double av = a[p * d.m + i];
            const double *brow = b + p * d.n;
            for (std::size_t j = 0; j < d.n; ++j) {
                row[j] += av * brow[j];
            }
        }
        break;
    case Transpose::rhs:
        // a: m x k, b: n x k
        for (std::size_t j = 0; j < d.n; ++j) {
            double acc = 0.0;
            const double *arow = a + i * d.k;
            const double *brow = b + j * d.k;
            for (std::size_t p = 0; p < d.k; ++p) {
                acc += arow[p] * brow[p];
            }
            row[j] = acc;
        }
        break;
    }
}

}    // namespace

void gemm_reference(Transpose t, GemmDims dims, std::span<const double> a, std::span<const double> b,
                    std::span<double> out) {
    for (std::size_t i = 0; i < dims.m; ++i) {
        gemm_row(t, dims, a.data(), b.data(), out.data(), i);
    }
}

void gemm_parallel(Transpose t, GemmDims dims, std::span<const double> a, std::span<const double> b,
                   std::span<double> out) {
    const auto m = static_cast<std::int64_t>(dims.m);
    const double *pa = a.data();
    const double *pb = b.data();
    double *po = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        gemm_row(t, dims, pa, pb, po, static_cast<std::size_t>(i));
    }
}

void gemm(Transpose t, GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> out) {
    if (dims.m > 1 && dims.m * dims.k * dims.n >= kParallelWork) {
        gemm_parallel(t, dims, a, b, out);
    } else {
        gemm_reference(t, dims, a, b, out);
    }
}

}    // namespace stylealign::kernels
