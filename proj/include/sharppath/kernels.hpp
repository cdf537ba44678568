#pragma once

#include <cstdint>

namespace sharppath::kernels {

/// Runtime switch between the OpenMP kernels and the serial references.
/// Both paths accumulate in identical order, so results are bit-identical;
/// the serial path exists as the reference the parallel one is tested and
/// benchmarked against.
bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

// C(m,n) = op(A)·op(B), optionally accumulating into C. op(A) is A (m,k)
// or A^T with A stored (k,m); likewise for B. All matrices row-major.
void matmul(int m, int k, int n, const double* a, const double* b, double* c,
            bool trans_a = false, bool trans_b = false,
            bool accumulate = false);
void matmul_serial(int m, int k, int n, const double* a, const double* b,
                   double* c, bool trans_a = false, bool trans_b = false,
                   bool accumulate = false);

// 3x3 'same' (pad 1, stride 1) patch extraction on NHWC images.
// cols has shape (n*h*w, 9*c) with column index (ki*3+kj)*c + ch.
void im2col3x3(int n, int h, int w, int c, const double* x, double* cols);
void im2col3x3_serial(int n, int h, int w, int c, const double* x,
                      double* cols);

// Adjoint of im2col3x3: gathers patch-space values back onto the image,
// accumulating into x.
void col2im3x3_add(int n, int h, int w, int c, const double* cols, double* x);
void col2im3x3_add_serial(int n, int h, int w, int c, const double* cols,
                          double* x);

} // namespace sharppath::kernels
