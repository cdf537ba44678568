#include "sharppath/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sharppath::kernels {

namespace {
bool g_parallel = true;
} // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) { g_parallel = on; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// One output row of C. The k-loop runs in ascending order in every variant,
// so the parallel and serial paths produce identical bits.
inline void matmul_row(int i, int m, int k, int n, const double* a,
                       const double* b, double* c, bool trans_a, bool trans_b,
                       bool accumulate) {
  double* crow = c + static_cast<int64_t>(i) * n;
  if (!accumulate) {
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
  }
  (void)m;
  if (!trans_b) {
    // Stream rows of B: crow += a_ik * b_k.
    for (int p = 0; p < k; ++p) {
      const double aik = trans_a ? a[static_cast<int64_t>(p) * m + i]
                                 : a[static_cast<int64_t>(i) * k + p];
      const double* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  } else {
    // B stored (n,k): each c_ij is a dot product of contiguous rows.
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<int64_t>(j) * k;
      double acc = crow[j];
      if (!trans_a) {
        const double* arow = a + static_cast<int64_t>(i) * k;
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      } else {
        for (int p = 0; p < k; ++p)
          acc += a[static_cast<int64_t>(p) * m + i] * brow[p];
      }
      crow[j] = acc;
    }
  }
}

inline void im2col_row(int r, int h, int w, int c, const double* x,
                       double* cols) {
  // r indexes (n, i, j) flattened.
  const int j = r % w;
  const int i = (r / w) % h;
  const int img = r / (w * h);
  double* out = cols + static_cast<int64_t>(r) * 9 * c;
  const double* xim = x + static_cast<int64_t>(img) * h * w * c;
  for (int ki = 0; ki < 3; ++ki) {
    const int si = i + ki - 1;
    for (int kj = 0; kj < 3; ++kj) {
      const int sj = j + kj - 1;
      double* slot = out + static_cast<int64_t>(ki * 3 + kj) * c;
      if (si < 0 || si >= h || sj < 0 || sj >= w) {
        for (int ch = 0; ch < c; ++ch) slot[ch] = 0.0;
      } else {
        const double* src = xim + (static_cast<int64_t>(si) * w + sj) * c;
        for (int ch = 0; ch < c; ++ch) slot[ch] = src[ch];
      }
    }
  }
}

inline void col2im_pixel(int r, int h, int w, int c, const double* cols,
                         double* x) {
  // Gather form: pixel (img,i,j) appears in patch (img,si,sj) at kernel
  // position (ki,kj) iff si = i-(ki-1), sj = j-(kj-1) is in bounds.
  const int j = r % w;
  const int i = (r / w) % h;
  const int img = r / (w * h);
  double* dst = x + (static_cast<int64_t>(img) * h * w + static_cast<int64_t>(i) * w + j) * c;
  for (int ki = 0; ki < 3; ++ki) {
    const int si = i - (ki - 1);
    if (si < 0 || si >= h) continue;
    for (int kj = 0; kj < 3; ++kj) {
      const int sj = j - (kj - 1);
      if (sj < 0 || sj >= w) continue;
      const int64_t row = (static_cast<int64_t>(img) * h + si) * w + sj;
      const double* src = cols + row * 9 * c + static_cast<int64_t>(ki * 3 + kj) * c;
      for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
  }
}

} // namespace

void matmul_serial(int m, int k, int n, const double* a, const double* b,
                   double* c, bool trans_a, bool trans_b, bool accumulate) {
  for (int i = 0; i < m; ++i)
    matmul_row(i, m, k, n, a, b, c, trans_a, trans_b, accumulate);
}

void matmul(int m, int k, int n, const double* a, const double* b, double* c,
            bool trans_a, bool trans_b, bool accumulate) {
  if (!g_parallel || static_cast<int64_t>(m) * k * n < 16384) {
    matmul_serial(m, k, n, a, b, c, trans_a, trans_b, accumulate);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    matmul_row(i, m, k, n, a, b, c, trans_a, trans_b, accumulate);
}

void im2col3x3_serial(int n, int h, int w, int c, const double* x,
                      double* cols) {
  const int rows = n * h * w;
  for (int r = 0; r < rows; ++r) im2col_row(r, h, w, c, x, cols);
}

void im2col3x3(int n, int h, int w, int c, const double* x, double* cols) {
  const int rows = n * h * w;
  if (!g_parallel || static_cast<int64_t>(rows) * 9 * c < 16384) {
    im2col3x3_serial(n, h, w, c, x, cols);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) im2col_row(r, h, w, c, x, cols);
}

void col2im3x3_add_serial(int n, int h, int w, int c, const double* cols,
                          double* x) {
  const int pixels = n * h * w;
  for (int r = 0; r < pixels; ++r) col2im_pixel(r, h, w, c, cols, x);
}

void col2im3x3_add(int n, int h, int w, int c, const double* cols, double* x) {
  const int pixels = n * h * w;
  if (!g_parallel || static_cast<int64_t>(pixels) * 9 * c < 16384) {
    col2im3x3_add_serial(n, h, w, c, cols, x);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int r = 0; r < pixels; ++r) col2im_pixel(r, h, w, c, cols, x);
}

} // namespace sharppath::kernels
