#include <doctest.h>

#include <cmath>
#include <vector>

#include "posbias/kernels.hpp"
#include "posbias/rng.hpp"

using namespace posbias;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
  SplitMix64 g(seed);
  std::vector<float> v(n);
  for (auto& x : v) {
    x = g.next_gauss_f();
  }
  return v;
}

}  // namespace

TEST_CASE("parallel kernels match the serial reference bitwise") {
  const int m = 13, k = 37, n = 29;
  const auto x = random_vec(static_cast<size_t>(m) * k, 1);
  const auto w = random_vec(static_cast<size_t>(k) * n, 2);

  std::vector<float> y_par(static_cast<size_t>(m) * n);
  std::vector<float> y_ser(y_par.size());
  kernels::matmul(x.data(), w.data(), y_par.data(), m, k, n);
  kernels::serial::matmul(x.data(), w.data(), y_ser.data(), m, k, n);
  CHECK(y_par == y_ser);

  const auto gain = random_vec(static_cast<size_t>(k), 3);
  std::vector<float> r_par(static_cast<size_t>(m) * k), r_ser(r_par.size());
  kernels::rmsnorm_rows(x.data(), gain.data(), r_par.data(), m, k, 1e-5f);
  kernels::serial::rmsnorm_rows(x.data(), gain.data(), r_ser.data(), m, k,
                                1e-5f);
  CHECK(r_par == r_ser);

  auto s_par = x;
  auto s_ser = x;
  kernels::softmax_rows(s_par.data(), m, k);
  kernels::serial::softmax_rows(s_ser.data(), m, k);
  CHECK(s_par == s_ser);

  auto g_par = x;
  auto g_ser = x;
  kernels::gelu(g_par.data(), m * k);
  kernels::serial::gelu(g_ser.data(), m * k);
  CHECK(g_par == g_ser);

  auto a_par = x;
  auto a_ser = x;
  kernels::add(a_par.data(), w.data(), std::min(m * k, k * n));
  kernels::serial::add(a_ser.data(), w.data(), std::min(m * k, k * n));
  CHECK(a_par == a_ser);
}

TEST_CASE("matmul matches a double-precision scalar oracle") {
  const int m = 5, k = 17, n = 9;
  const auto x = random_vec(static_cast<size_t>(m) * k, 4);
  const auto w = random_vec(static_cast<size_t>(k) * n, 5);
  std::vector<float> y(static_cast<size_t>(m) * n);
  kernels::matmul(x.data(), w.data(), y.data(), m, k, n);

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        acc += static_cast<double>(x[static_cast<size_t>(i) * k + kk]) *
               static_cast<double>(w[static_cast<size_t>(kk) * n + j]);
      }
      CHECK(y[static_cast<size_t>(i) * n + j] ==
            doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("softmax rows are normalized and order-preserving") {
  auto x = random_vec(64, 6);
  auto orig = x;
  kernels::softmax_rows(x.data(), 4, 16);
  for (int r = 0; r < 4; ++r) {
    float sum = 0.0f;
    for (int c = 0; c < 16; ++c) {
      const float v = x[static_cast<size_t>(r) * 16 + c];
      CHECK(v > 0.0f);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
    for (int c = 1; c < 16; ++c) {
      const size_t i = static_cast<size_t>(r) * 16 + c;
      if (orig[i] > orig[i - 1]) {
        CHECK(x[i] > x[i - 1]);
      }
    }
  }
}

TEST_CASE("rmsnorm yields unit mean square under unit gain") {
  const int width = 32;
  auto x = random_vec(width, 7);
  std::vector<float> gain(width, 1.0f);
  std::vector<float> y(width);
  kernels::rmsnorm_rows(x.data(), gain.data(), y.data(), 1, width, 1e-9f);
  double msq = 0.0;
  for (float v : y) {
    msq += static_cast<double>(v) * v;
  }
  msq /= width;
  CHECK(msq == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("gelu fixes the origin and is asymptotically identity") {
  std::vector<float> x = {0.0f, 10.0f, -10.0f, 1.0f};
  kernels::gelu(x.data(), 4);
  CHECK(x[0] == 0.0f);
  CHECK(x[1] == doctest::Approx(10.0f));
  CHECK(x[2] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(x[3] == doctest::Approx(0.5f * (1.0f + std::erf(1.0f / std::sqrt(2.0f)))));
}
