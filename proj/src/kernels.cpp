#include "posbias/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace posbias::kernels {

namespace {

// One output row of a row-major matmul: y_row[j] = sum_k x_row[k] * w[k][j],
// accumulated in ascending k for every j.
inline void matmul_row(const float* x_row, const float* w, float* y_row, int k,
                       int n) {
  std::memset(y_row, 0, sizeof(float) * static_cast<size_t>(n));
  for (int kk = 0; kk < k; ++kk) {
    const float a = x_row[kk];
    const float* w_row = w + static_cast<size_t>(kk) * n;
    for (int j = 0; j < n; ++j) {
      y_row[j] += a * w_row[j];
    }
  }
}

inline void rmsnorm_row(const float* x, const float* gain, float* y, int width,
                        float eps) {
  float sumsq = 0.0f;
  for (int i = 0; i < width; ++i) {
    sumsq += x[i] * x[i];
  }
  const float inv = 1.0f / std::sqrt(sumsq / static_cast<float>(width) + eps);
  for (int i = 0; i < width; ++i) {
    y[i] = x[i] * inv * gain[i];
  }
}

inline void softmax_row(float* x, int cols) {
  float mx = x[0];
  for (int i = 1; i < cols; ++i) {
    mx = std::max(mx, x[i]);
  }
  float sum = 0.0f;
  for (int i = 0; i < cols; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  const float inv = 1.0f / sum;
  for (int i = 0; i < cols; ++i) {
    x[i] *= inv;
  }
}

inline float gelu_one(float v) {
  return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752440f));
}

}  // namespace

void matmul(const float* x, const float* w, float* y, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    matmul_row(x + static_cast<size_t>(i) * k, w,
               y + static_cast<size_t>(i) * n, k, n);
  }
}

void rmsnorm_rows(const float* x, const float* gain, float* y, int rows,
                  int width, float eps) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    rmsnorm_row(x + static_cast<size_t>(r) * width, gain,
                y + static_cast<size_t>(r) * width, width, eps);
  }
}

void softmax_rows(float* x, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    softmax_row(x + static_cast<size_t>(r) * cols, cols);
  }
}

void gelu(float* x, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    x[i] = gelu_one(x[i]);
  }
}

void add(float* acc, const float* v, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    acc[i] += v[i];
  }
}

namespace serial {

void matmul(const float* x, const float* w, float* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    matmul_row(x + static_cast<size_t>(i) * k, w,
               y + static_cast<size_t>(i) * n, k, n);
  }
}

void rmsnorm_rows(const float* x, const float* gain, float* y, int rows,
                  int width, float eps) {
  for (int r = 0; r < rows; ++r) {
    rmsnorm_row(x + static_cast<size_t>(r) * width, gain,
                y + static_cast<size_t>(r) * width, width, eps);
  }
}

void softmax_rows(float* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    softmax_row(x + static_cast<size_t>(r) * cols, cols);
  }
}

void gelu(float* x, int n) {
  for (int i = 0; i < n; ++i) {
    x[i] = gelu_one(x[i]);
  }
}

void add(float* acc, const float* v, int n) {
  for (int i = 0; i < n; ++i) {
    acc[i] += v[i];
  }
}

}  // namespace serial

}  // namespace posbias::kernels
