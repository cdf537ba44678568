#include "sharppath/probes.hpp"

#include <cmath>

#include "sharppath/linalg.hpp"

namespace sharppath {

std::vector<double> ProbeConfig::resolved_k_grid() const {
  if (!k_grid.empty()) return k_grid;
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(-5.0 + 0.5 * i);
  return grid;
}

void ProbeConfig::validate() const {
  if (alphas.empty()) throw ConfigError("probe needs a nonempty alpha grid");
  if (n_batches < 1) throw ConfigError("probe needs n_batches >= 1");
  if (eig_index < 1) throw ConfigError("probe eigenvector index is 1-based");
  if (eta <= 0.0) throw ConfigError("probe eta must be positive");
  if (batch_size < 1) throw ConfigError("probe batch size must be positive");
}

std::vector<Batch> sample_probe_batches(const Dataset& data,
                                        const ProbeConfig& cfg) {
  cfg.validate();
  SeededRng rng = SeededRng(cfg.seed).split("probe_batches");
  const int s = std::min(cfg.batch_size, data.n());
  std::vector<Batch> batches;
  batches.reserve(static_cast<size_t>(cfg.n_batches));
  for (int b = 0; b < cfg.n_batches; ++b) {
    std::vector<int> perm = rng.permutation(data.n());
    perm.resize(static_cast<size_t>(s));
    batches.push_back(gather_batch(data, perm));
  }
  return batches;
}

namespace {

double eval_on(const Model& m, const ParamVector& params,
               const Dataset& eval_set) {
  return dataset_loss(m, params, eval_set);
}

} // namespace

std::vector<std::pair<double, double>> loss_change_probe(
    const Model& m, const ParamVector& params, const ParamVector& e_i,
    const ProbeConfig& cfg, const Dataset& train_data,
    const Dataset& eval_set) {
  cfg.validate();
  const std::vector<Batch> batches = sample_probe_batches(train_data, cfg);
  const double base = eval_on(m, params, eval_set);
  std::vector<double> proj;
  proj.reserve(batches.size());
  for (const Batch& b : batches) {
    const auto [loss, g] = loss_grad(m, params, b);
    (void)loss;
    proj.push_back(linalg::dot(g, e_i));
  }
  std::vector<std::pair<double, double>> out;
  ParamVector moved = params;
  for (const double a : cfg.alphas) {
    double acc = 0.0;
    for (const double gi : proj) {
      const double c = -a * cfg.eta * gi;
      moved = params;
      linalg::axpy(c, e_i, moved);
      acc += eval_on(m, moved, eval_set) - base;
    }
    out.emplace_back(a, acc / static_cast<double>(proj.size()));
  }
  return out;
}

double expected_step_norm(const Model& m, const ParamVector& params,
                          const ParamVector& e_i, const ProbeConfig& cfg,
                          const Dataset& train_data) {
  cfg.validate();
  const std::vector<Batch> batches = sample_probe_batches(train_data, cfg);
  double acc = 0.0;
  for (const Batch& b : batches) {
    const auto [loss, g] = loss_grad(m, params, b);
    (void)loss;
    acc += std::fabs(linalg::dot(g, e_i));
  }
  return cfg.eta * acc / static_cast<double>(batches.size());
}

std::vector<std::pair<double, double>> surface_scan(
    const Model& m, const ParamVector& params, const ParamVector& e_i,
    double step_norm, const std::vector<double>& k_grid,
    const Dataset& eval_set) {
  if (k_grid.empty()) throw ConfigError("surface scan needs a k grid");
  const double base = eval_on(m, params, eval_set);
  std::vector<std::pair<double, double>> out;
  ParamVector moved = params;
  for (const double k : k_grid) {
    if (k == 0.0) {
      out.emplace_back(0.0, base);
      continue;
    }
    moved = params;
    linalg::axpy(k * step_norm, e_i, moved);
    out.emplace_back(k, eval_on(m, moved, eval_set));
  }
  return out;
}

ProbeResult run_probe(const Model& m, const ParamVector& params,
                      const ParamVector& e_i, const ProbeConfig& cfg,
                      const Dataset& train_data, const Dataset& eval_set,
                      long step) {
  ProbeResult r;
  r.step = step;
  r.eig_index = cfg.eig_index;
  r.alpha_deltas = loss_change_probe(m, params, e_i, cfg, train_data, eval_set);
  r.expected_step_norm = expected_step_norm(m, params, e_i, cfg, train_data);
  r.scan = surface_scan(m, params, e_i, r.expected_step_norm,
                        cfg.resolved_k_grid(), eval_set);
  r.base_loss = eval_on(m, params, eval_set);
  return r;
}

} // namespace sharppath
