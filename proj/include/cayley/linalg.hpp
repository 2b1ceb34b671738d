#pragma once

#include "cayley/common.hpp"

// Thin row-major GEMM wrapper over the BLAS backend. The backend is forced
// to a single thread: batched math must be bit-reproducible for a fixed
// chunking, and thread-count-dependent reduction orders would break that.

namespace cayley {

// C (m x n) = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is m x k after optional transpose; lda/ldb/ldc are row strides of
// the stored (untransposed) matrices.
void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha, const float* a, i64 lda,
          const float* b, i64 ldb, float beta, float* c, i64 ldc);
void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, double alpha, const double* a, i64 lda,
          const double* b, i64 ldb, double beta, double* c, i64 ldc);

}  // namespace cayley
