#include "sharppath/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sharppath/linalg.hpp"

namespace sharppath {

int LanczosConfig::resolved_max_iters(int dim) const {
  const int m = max_iters > 0 ? max_iters : std::max(4 * k, k + 20);
  return std::min(m, dim);
}

namespace {

// Two modified-Gram-Schmidt sweeps against the whole basis.
void reorthogonalize(std::vector<double>& w,
                     const std::vector<std::vector<double>>& basis) {
  for (int sweep = 0; sweep < 2; ++sweep)
    for (const auto& q : basis) {
      const double c = linalg::dot(w, q);
      linalg::axpy(-c, q, w);
    }
}

bool random_orthonormal_direction(std::vector<double>& out,
                                  const std::vector<std::vector<double>>& basis,
                                  SeededRng& rng) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    for (double& x : out) x = rng.normal();
    reorthogonalize(out, basis);
    const double nrm = linalg::norm2(out);
    if (nrm > 1e-8) {
      linalg::scal(1.0 / nrm, out);
      return true;
    }
  }
  return false;
}

void fix_sign(std::vector<double>& v) {
  size_t arg = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
  if (v[arg] < 0.0) linalg::scal(-1.0, v);
}

// Ritz values of T_m sorted by decreasing |lambda|; returns the count among
// the top k whose residual bound |last_beta * s_{m,i}| meets the tolerance.
struct TridiagRitz {
  std::vector<double> evals;
  std::vector<double> z; // m x m, eigenvectors in columns
  std::vector<int> order;
};

TridiagRitz solve_tridiag(const std::vector<double>& alpha,
                          const std::vector<double>& couple) {
  const int m = static_cast<int>(alpha.size());
  std::vector<double> off(static_cast<size_t>(m), 0.0);
  for (int i = 1; i < m; ++i) off[static_cast<size_t>(i)] = couple[static_cast<size_t>(i - 1)];
  TridiagRitz r;
  linalg::symtridiag_eig(alpha, off, r.evals, r.z);
  r.order.resize(static_cast<size_t>(m));
  std::iota(r.order.begin(), r.order.end(), 0);
  std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    return std::fabs(r.evals[static_cast<size_t>(a)]) >
           std::fabs(r.evals[static_cast<size_t>(b)]);
  });
  return r;
}

int count_converged(const TridiagRitz& r, int k, double last_beta,
                    double tol) {
  const int m = static_cast<int>(r.evals.size());
  int good = 0;
  for (int i = 0; i < std::min(k, m); ++i) {
    const int col = r.order[static_cast<size_t>(i)];
    const double bound =
        std::fabs(last_beta) *
        std::fabs(r.z[static_cast<size_t>(m - 1) * m + col]);
    if (bound <= tol * std::max(1.0, std::fabs(r.evals[static_cast<size_t>(col)])))
      ++good;
  }
  return good;
}

} // namespace

EigenEstimate lanczos_topk(const LinOp& apply_h, int dim,
                           const LanczosConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("lanczos needs k >= 1");
  if (cfg.k > dim) throw ConfigError("lanczos k exceeds the operator dimension");
  if (cfg.tol <= 0.0) throw ConfigError("lanczos tolerance must be positive");
  const int max_iters = cfg.resolved_max_iters(dim);
  if (max_iters < cfg.k)
    throw ConfigError("lanczos max_iters must be at least k");

  SeededRng rng = SeededRng(cfg.seed).split("lanczos_start");
  std::vector<std::vector<double>> basis;
  std::vector<double> alpha;  // T diagonal
  std::vector<double> couple; // couple[i] joins basis i and i+1
  bool restarted = false;
  EigenEstimate est;

  std::vector<double> w(static_cast<size_t>(dim));
  if (!random_orthonormal_direction(w, basis, rng))
    throw NumericalError("lanczos could not draw a start vector");
  basis.push_back(w);

  for (int j = 0; j < max_iters; ++j) {
    apply_h(basis[static_cast<size_t>(j)], w);
    const double a = linalg::dot(w, basis[static_cast<size_t>(j)]);
    alpha.push_back(a);
    linalg::axpy(-a, basis[static_cast<size_t>(j)], w);
    if (j > 0)
      linalg::axpy(-couple[static_cast<size_t>(j - 1)],
                   basis[static_cast<size_t>(j - 1)], w);
    reorthogonalize(w, basis);
    const double b = linalg::norm2(w);
    const int m = j + 1;

    if (b <= 1e-12 * std::max(1.0, std::fabs(a))) {
      // Invariant subspace exhausted: every Ritz pair of the current block
      // is exact, but a repeated eigenvalue may extend beyond it. Restart in
      // a fresh orthogonal direction and keep going; early stopping stays
      // off from here so multiplicities are resolved up to the budget.
      restarted = true;
      if (m == max_iters) break;
      if (!random_orthonormal_direction(w, basis, rng)) {
        est.breakdown = true;
        break;
      }
      couple.push_back(0.0);
      basis.push_back(w);
      continue;
    }

    if (m == max_iters) break;
    linalg::scal(1.0 / b, w);
    couple.push_back(b);
    basis.push_back(w);
    if (!restarted && m >= cfg.k &&
        count_converged(solve_tridiag(alpha, couple), cfg.k, b, cfg.tol) >= cfg.k)
      break;
  }

  const int m = static_cast<int>(alpha.size());
  const TridiagRitz ritz = solve_tridiag(alpha, couple);
  const int found = std::min(cfg.k, m);
  if (found < cfg.k) est.breakdown = true;

  std::vector<double> hy(static_cast<size_t>(dim));
  for (int i = 0; i < found; ++i) {
    const int col = ritz.order[static_cast<size_t>(i)];
    EigenPair pair;
    pair.lambda = ritz.evals[static_cast<size_t>(col)];
    pair.vector.assign(static_cast<size_t>(dim), 0.0);
    for (int r = 0; r < m; ++r)
      linalg::axpy(ritz.z[static_cast<size_t>(r) * m + col],
                   basis[static_cast<size_t>(r)], pair.vector);
    const double nrm = linalg::norm2(pair.vector);
    if (nrm > 0.0) linalg::scal(1.0 / nrm, pair.vector);
    fix_sign(pair.vector);
    // True residual, so the stored value is reproducible post hoc.
    apply_h(pair.vector, hy);
    linalg::axpy(-pair.lambda, pair.vector, hy);
    pair.residual = linalg::norm2(hy);
    pair.converged =
        pair.residual <= cfg.tol * std::max(1.0, std::fabs(pair.lambda));
    est.pairs.push_back(std::move(pair));
  }
  return est;
}

EigenEstimate estimate_spectrum(const Model& m, const ParamVector& params,
                                const Batch& subsample,
                                const LanczosConfig& cfg) {
  const int dim = static_cast<int>(m.dim());
  std::vector<double> buf(static_cast<size_t>(dim));
  LinOp apply = [&](std::span<const double> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), buf.begin());
    const ParamVector r = hvp(m.graph, params, subsample, buf);
    std::copy(r.begin(), r.end(), out.begin());
  };
  return lanczos_topk(apply, dim, cfg);
}

double frobenius_trunc(const EigenEstimate& est) {
  double s = 0.0;
  for (const auto& p : est.pairs) s += p.lambda * p.lambda;
  return std::sqrt(s);
}

double alignment(const ParamVector& g, const EigenEstimate& est, int m) {
  if (m < 1 || m > est.k())
    throw ConfigError("alignment: m exceeds the number of estimated pairs");
  const double gnorm = linalg::norm2(g);
  if (gnorm == 0.0) throw AlignmentUndefined("alignment of a zero gradient");
  double s = 0.0;
  for (int i = 0; i < m; ++i)
    s += std::fabs(linalg::dot(g, est.pairs[static_cast<size_t>(i)].vector)) / gnorm;
  return s / m;
}

double random_alignment_baseline(int d) {
  if (d < 1) throw ConfigError("baseline dimension must be positive");
  return std::sqrt(2.0 / (3.14159265358979323846 * d));
}

} // namespace sharppath
