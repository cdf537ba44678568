#include <doctest.h>

#include <vector>

#include "sharppath/kernels.hpp"
#include "sharppath/rng.hpp"

using namespace sharppath;

namespace {

std::vector<double> randn(size_t n, SeededRng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Naive reference with explicit index arithmetic, no shared code.
std::vector<double> naive_matmul(int m, int k, int n,
                                 const std::vector<double>& a,
                                 const std::vector<double>& b, bool ta,
                                 bool tb) {
  std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[static_cast<size_t>(p) * m + i]
                             : a[static_cast<size_t>(i) * k + p];
        const double bv = tb ? b[static_cast<size_t>(j) * k + p]
                             : b[static_cast<size_t>(p) * n + j];
        acc += av * bv;
      }
      c[static_cast<size_t>(i) * n + j] = acc;
    }
  return c;
}

} // namespace

TEST_CASE("matmul matches a naive reference in all transpose modes") {
  SeededRng rng(11);
  const int m = 13, k = 17, n = 9;
  for (const bool ta : {false, true})
    for (const bool tb : {false, true}) {
      const auto a = randn(static_cast<size_t>(m) * k, rng);
      const auto b = randn(static_cast<size_t>(k) * n, rng);
      const auto want = naive_matmul(m, k, n, a, b, ta, tb);
      std::vector<double> got(static_cast<size_t>(m) * n);
      kernels::matmul_serial(m, k, n, a.data(), b.data(), got.data(), ta, tb);
      for (size_t i = 0; i < want.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul accumulate adds onto the destination") {
  SeededRng rng(12);
  const int m = 4, k = 5, n = 3;
  const auto a = randn(static_cast<size_t>(m) * k, rng);
  const auto b = randn(static_cast<size_t>(k) * n, rng);
  std::vector<double> c(static_cast<size_t>(m) * n, 1.0);
  kernels::matmul_serial(m, k, n, a.data(), b.data(), c.data(), false, false,
                         true);
  const auto plain = naive_matmul(m, k, n, a, b, false, false);
  for (size_t i = 0; i < c.size(); ++i)
    CHECK(c[i] == doctest::Approx(plain[i] + 1.0));
}

TEST_CASE("parallel kernels are bit-identical to the serial references") {
  SeededRng rng(13);
  // Sizes above the parallel threshold.
  const int m = 300, k = 80, n = 64;
  const auto a = randn(static_cast<size_t>(m) * k, rng);
  const auto b = randn(static_cast<size_t>(k) * n, rng);
  std::vector<double> ser(static_cast<size_t>(m) * n), par(ser.size());
  kernels::matmul_serial(m, k, n, a.data(), b.data(), ser.data());
  kernels::set_parallel(true);
  kernels::matmul(m, k, n, a.data(), b.data(), par.data());
  CHECK(ser == par);

  const int ni = 4, h = 16, w = 16, c = 8;
  const auto x = randn(static_cast<size_t>(ni) * h * w * c, rng);
  std::vector<double> cols_s(static_cast<size_t>(ni) * h * w * 9 * c);
  std::vector<double> cols_p(cols_s.size());
  kernels::im2col3x3_serial(ni, h, w, c, x.data(), cols_s.data());
  kernels::im2col3x3(ni, h, w, c, x.data(), cols_p.data());
  CHECK(cols_s == cols_p);

  std::vector<double> back_s(x.size(), 0.0), back_p(x.size(), 0.0);
  kernels::col2im3x3_add_serial(ni, h, w, c, cols_s.data(), back_s.data());
  kernels::col2im3x3_add(ni, h, w, c, cols_p.data(), back_p.data());
  CHECK(back_s == back_p);
}

TEST_CASE("col2im is the exact adjoint of im2col") {
  // <im2col(x), y> == <x, col2im(y)> for random x, y.
  SeededRng rng(14);
  const int n = 2, h = 6, w = 6, c = 3;
  const auto x = randn(static_cast<size_t>(n) * h * w * c, rng);
  const auto y = randn(static_cast<size_t>(n) * h * w * 9 * c, rng);
  std::vector<double> cols(y.size());
  kernels::im2col3x3_serial(n, h, w, c, x.data(), cols.data());
  std::vector<double> back(x.size(), 0.0);
  kernels::col2im3x3_add_serial(n, h, w, c, y.data(), back.data());
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * y[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("im2col zero-pads the border") {
  // 1x1 image: the only patch sees the pixel at center, zeros elsewhere.
  std::vector<double> x = {7.0};
  std::vector<double> cols(9, -1.0);
  kernels::im2col3x3_serial(1, 1, 1, 1, x.data(), cols.data());
  for (int q = 0; q < 9; ++q)
    CHECK(cols[static_cast<size_t>(q)] == (q == 4 ? 7.0 : 0.0));
}
