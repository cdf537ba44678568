#pragma once

#include <span>
#include <vector>

namespace sharppath::linalg {

// Serial fixed-order reductions: every caller that needs bit-identical
// results across thread counts funnels through these.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scal(double alpha, std::span<double> x);

/// Eigendecomposition of a symmetric tridiagonal matrix (QL with implicit
/// shifts). diag has size m, off has size m (off[0] unused, off[i] couples
/// rows i-1 and i). Returns eigenvalues ascending; z (m*m, row-major) gets
/// the eigenvectors as columns: z[i*m+j] is component i of eigenvector j.
void symtridiag_eig(std::vector<double> diag, std::vector<double> off,
                    std::vector<double>& eigenvalues, std::vector<double>& z);

/// Solve A x = b for symmetric dense A (row-major n*n) by Gaussian
/// elimination with partial pivoting. Throws SingularityError when a pivot
/// collapses.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b);

} // namespace sharppath::linalg
