#pragma once

#include <cstddef>

namespace demixkit::kernels {

// Dense row-major GEMM kernels. All accumulate into C, which the caller
// zeroes (or seeds) beforehand. Reduction order is fixed, so results are
// bit-identical across runs and thread counts.

// C[m x n] += A[m x k] * B[k x n]
void gemm(const double* a, const double* b, double* c,
          std::size_t m, std::size_t k, std::size_t n);

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k);

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);

}  // namespace demixkit::kernels
