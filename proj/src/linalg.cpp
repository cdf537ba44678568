#include "sharppath/linalg.hpp"

#include <cmath>
#include <cstdlib>

#include "sharppath/errors.hpp"

namespace sharppath::linalg {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) {
  // Scaled to avoid overflow; still deterministic.
  double scale = 0.0;
  for (const double v : a) {
    const double av = std::fabs(v);
    if (av > scale) scale = av;
  }
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (const double v : a) {
    const double r = v / scale;
    s += r * r;
  }
  return scale * std::sqrt(s);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

void symtridiag_eig(std::vector<double> d, std::vector<double> e,
                    std::vector<double>& eigenvalues,
                    std::vector<double>& z) {
  const int m = static_cast<int>(d.size());
  eigenvalues.assign(d.begin(), d.end());
  z.assign(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) z[static_cast<size_t>(i) * m + i] = 1.0;
  if (m == 1) return;

  // Shift the off-diagonal so e[i] couples rows i and i+1 (EISPACK tql2).
  for (int i = 1; i < m; ++i) e[i - 1] = e[i];
  e[m - 1] = 0.0;
  std::vector<double>& dd = eigenvalues;

  for (int l = 0; l < m; ++l) {
    int iter = 0;
    int mm;
    do {
      for (mm = l; mm < m - 1; ++mm) {
        const double sc = std::fabs(dd[mm]) + std::fabs(dd[mm + 1]);
        if (std::fabs(e[mm]) <= 2.3e-16 * sc || std::fabs(e[mm]) < 1e-300)
          break;
      }
      if (mm != l) {
        if (iter++ == 80)
          throw NumericalError("tridiagonal QL failed to converge");
        double g = (dd[l + 1] - dd[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = dd[mm] - dd[l] + e[l] / (g + (g >= 0 ? std::fabs(r) : -std::fabs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        bool underflow = false;
        for (int i = mm - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            dd[i + 1] -= p;
            e[mm] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = dd[i + 1] - p;
          r = (dd[i] - g) * s + 2.0 * c * b;
          p = s * r;
          dd[i + 1] = g + p;
          g = c * r - b;
          for (int k = 0; k < m; ++k) {
            f = z[static_cast<size_t>(k) * m + i + 1];
            z[static_cast<size_t>(k) * m + i + 1] =
                s * z[static_cast<size_t>(k) * m + i] + c * f;
            z[static_cast<size_t>(k) * m + i] =
                c * z[static_cast<size_t>(k) * m + i] - s * f;
          }
        }
        if (underflow) continue;
        dd[l] -= p;
        e[l] = g;
        e[mm] = 0.0;
      }
    } while (mm != l);
  }

  // Sort ascending, permuting eigenvector columns alongside.
  for (int i = 0; i < m - 1; ++i) {
    int k = i;
    double p = dd[i];
    for (int j = i + 1; j < m; ++j)
      if (dd[j] < p) {
        k = j;
        p = dd[j];
      }
    if (k != i) {
      dd[k] = dd[i];
      dd[i] = p;
      for (int r = 0; r < m; ++r)
        std::swap(z[static_cast<size_t>(r) * m + i],
                  z[static_cast<size_t>(r) * m + k]);
    }
  }
}

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  if (a.size() != static_cast<size_t>(n) * n)
    throw ConfigError("solve_dense: matrix/vector size mismatch");
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(a[static_cast<size_t>(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[static_cast<size_t>(r) * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best < 1e-300)
      throw SingularityError("singular matrix in solve_dense");
    if (piv != col) {
      for (int j = 0; j < n; ++j)
        std::swap(a[static_cast<size_t>(piv) * n + j],
                  a[static_cast<size_t>(col) * n + j]);
      std::swap(b[piv], b[col]);
    }
    const double d = a[static_cast<size_t>(col) * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = a[static_cast<size_t>(r) * n + col] / d;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j)
        a[static_cast<size_t>(r) * n + j] -= f * a[static_cast<size_t>(col) * n + j];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(static_cast<size_t>(n));
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int j = r + 1; j < n; ++j)
      s -= a[static_cast<size_t>(r) * n + j] * x[j];
    x[r] = s / a[static_cast<size_t>(r) * n + r];
  }
  return x;
}

} // namespace sharppath::linalg
