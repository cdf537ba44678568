#pragma once

#include <utility>
#include <vector>

#include "sharppath/data.hpp"
#include "sharppath/model.hpp"

namespace sharppath {

struct ProbeConfig {
  std::vector<double> alphas{0.25, 0.5, 1.0, 2.0, 4.0};
  int n_batches = 10;         // mini-batch gradients per expectation
  std::vector<double> k_grid; // empty resolves to 21 points in [-5, 5]
  int eig_index = 1;          // 1-based index of the probed eigenvector
  uint64_t seed = 0;
  double eta = 0.01;          // step scale of the probed optimizer
  int batch_size = 128;
  std::vector<double> resolved_k_grid() const;
  void validate() const;
};

struct ProbeResult {
  long step = 0;
  int eig_index = 1;
  std::vector<std::pair<double, double>> alpha_deltas; // (alpha, mean delta)
  double expected_step_norm = 0.0;
  std::vector<std::pair<double, double>> scan;         // (k, loss)
  double base_loss = 0.0;
};

/// The probes' mini-batches: cfg.n_batches index sets of cfg.batch_size,
/// drawn uniformly without replacement per batch from cfg.seed. Exposed so
/// tests can enumerate exactly what the expectations average over.
std::vector<Batch> sample_probe_batches(const Dataset& data,
                                        const ProbeConfig& cfg);

/// For each alpha: mean over fresh mini-batch gradients g of
///   L(theta - alpha eta <g,e_i> e_i) - L(theta),
/// with both losses evaluated on eval_set. Params are never mutated.
std::vector<std::pair<double, double>> loss_change_probe(
    const Model& m, const ParamVector& params, const ParamVector& e_i,
    const ProbeConfig& cfg, const Dataset& train_data, const Dataset& eval_set);

/// eta * E|<g, e_i>| over the same mini-batches.
double expected_step_norm(const Model& m, const ParamVector& params,
                          const ParamVector& e_i, const ProbeConfig& cfg,
                          const Dataset& train_data);

/// Loss at theta + k * step_norm * e_i for each k, on eval_set. The k = 0
/// entry equals the base loss exactly.
std::vector<std::pair<double, double>> surface_scan(
    const Model& m, const ParamVector& params, const ParamVector& e_i,
    double step_norm, const std::vector<double>& k_grid,
    const Dataset& eval_set);

/// All three probes packaged as one log row.
ProbeResult run_probe(const Model& m, const ParamVector& params,
                      const ParamVector& e_i, const ProbeConfig& cfg,
                      const Dataset& train_data, const Dataset& eval_set,
                      long step);

} // namespace sharppath
