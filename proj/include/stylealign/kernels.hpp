#pragma once

// Dense matrix-product kernels. Each product has a serial reference and an
// OpenMP version that splits output rows across threads. Both accumulate
// every output element in the same order, so their results are
// bit-identical; the reference exists for tests and benchmarks.

#include <cstddef>
#include <span>

namespace stylealign::kernels {

enum class Transpose { none, lhs, rhs };

struct GemmDims {
    std::size_t m;    // output rows
    std::size_t k;    // contraction length
    std::size_t n;    // output cols
};

// out = op(a) * op(b) where op transposes the flagged operand. `a` and `b`
// are row-major in their stored (untransposed) layout; out is m x n and is
// overwritten.
void gemm_reference(Transpose t, GemmDims dims, std::span<const double> a, std::span<const double> b,
                    std::span<double> out);
void gemm_parallel(Transpose t, GemmDims dims, std::span<const double> a, std::span<const double> b,
                   std::span<double> out);

// Picks the parallel kernel above a work threshold.
void gemm(Transpose t, GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> out);

// m*k*n at or above which gemm() uses threads.
inline constexpr std::size_t kParallelWork = 1U << 15U;

}    // namespace stylealign::kernels
