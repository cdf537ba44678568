#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sharppath/model.hpp"

namespace sharppath {

/// Matrix-free application of a symmetric operator: out = H * in.
using LinOp = std::function<void(std::span<const double>, std::span<double>)>;

struct LanczosConfig {
  int k = 10;
  int max_iters = 0;  // 0 resolves to max(4k, k+20), clamped to the dimension
  double tol = 1e-6;  // relative residual target
  uint64_t seed = 0;  // start vector
  int resolved_max_iters(int dim) const;
};

struct EigenPair {
  double lambda = 0.0;
  std::vector<double> vector; // unit norm, largest-|component| positive
  double residual = 0.0;      // ||H v - lambda v|| measured at construction
  bool converged = false;     // residual <= tol * max(1, |lambda|)
};

/// Top-K Ritz pairs ordered by decreasing |lambda|.
struct EigenEstimate {
  std::vector<EigenPair> pairs;
  long step = 0;              // training step at estimation time
  uint64_t subsample_seed = 0;
  double subsample_fraction = 0.0;
  bool breakdown = false;     // an invariant subspace was exhausted early
  int k() const { return static_cast<int>(pairs.size()); }
};

/// Lanczos with full reorthogonalization against every stored basis vector.
/// On breakdown (beta ~ 0) the iteration restarts with a fresh random
/// direction orthogonal to the basis, so repeated eigenvalues are still
/// found; if no new direction exists the estimate is flagged.
/// Deterministic given cfg.seed.
EigenEstimate lanczos_topk(const LinOp& apply_h, int dim,
                           const LanczosConfig& cfg);

struct Dataset;

/// Hessian spectrum of the mean loss on a fixed subsample, regularization
/// included (the operator is the same graph the optimizer trains on).
EigenEstimate estimate_spectrum(const Model& m, const ParamVector& params,
                                const Batch& subsample,
                                const LanczosConfig& cfg);

/// sqrt(sum of lambda_i^2) over the stored pairs: the truncated Frobenius
/// norm used as the curvature summary.
double frobenius_trunc(const EigenEstimate& est);

/// Mean |cos| between g and the top m eigenvectors. Eigenvector sign is
/// arbitrary, hence the absolute value.
double alignment(const ParamVector& g, const EigenEstimate& est, int m);

/// E|cos| of a random unit vector in R^d against a fixed direction,
/// closed form sqrt(2 / (pi d)).
double random_alignment_baseline(int d);

} // namespace sharppath
