#pragma once

// Dense float32 kernels backing the reference transformer and the attribution
// sweeps. Two variants share one scalar body:
//
//   posbias::kernels::         OpenMP-parallel (used by the library)
//   posbias::kernels::serial   single-threaded reference (kept for testing)
//
// Parallel loops only distribute whole output elements; the per-element
// accumulation order is fixed, so both variants produce bit-identical results
// at any thread count. tests/test_kernels.cpp asserts this, and bench/
// compares their throughput.

namespace posbias::kernels {

/// y[m][n] = x[m][k] @ w[k][n], row-major, accumulated in ascending k.
void matmul(const float* x, const float* w, float* y, int m, int k, int n);

/// Row-wise RMS normalization: y = x / sqrt(mean(x^2) + eps) * gain.
void rmsnorm_rows(const float* x, const float* gain, float* y, int rows,
                  int width, float eps);

/// In-place row softmax with max subtraction.
void softmax_rows(float* x, int rows, int cols);

/// In-place exact (erf-based) GELU.
void gelu(float* x, int n);

/// acc += v, elementwise.
void add(float* acc, const float* v, int n);

namespace serial {

void matmul(const float* x, const float* w, float* y, int m, int k, int n);
void rmsnorm_rows(const float* x, const float* gain, float* y, int rows,
                  int width, float eps);
void softmax_rows(float* x, int rows, int cols);
void gelu(float* x, int n);
void add(float* acc, const float* v, int n);

}  // namespace serial

}  // namespace posbias::kernels
