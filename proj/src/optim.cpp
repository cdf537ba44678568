#include "sharppath/optim.hpp"

#include <cmath>
#include <limits>

#include "sharppath/linalg.hpp"

namespace sharppath {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Sgd: return "sgd";
    case Variant::Nsgd: return "nsgd";
    case Variant::SgdTop: return "sgd_top";
    case Variant::SgdConstantTop: return "sgd_constant_top";
    case Variant::SgdNoTop: return "sgd_no_top";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "sgd") return Variant::Sgd;
  if (name == "nsgd") return Variant::Nsgd;
  if (name == "sgd_top") return Variant::SgdTop;
  if (name == "sgd_constant_top") return Variant::SgdConstantTop;
  if (name == "sgd_no_top") return Variant::SgdNoTop;
  throw ConfigError("unknown optimizer variant: " + name);
}

void OptimizerConfig::validate() const {
  if (eta <= 0.0) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("momentum must lie in [0, 1)");
  if (gamma <= 0.0) throw ConfigError("gamma must be positive");
  if (variant != Variant::Sgd && k_top < 1)
    throw ConfigError("projection variants need k_top >= 1");
}

void OptimizerState::set_basis(const EigenEstimate& est, int k_top,
                               long step) {
  basis.clear();
  for (const auto& p : est.pairs) {
    if (!p.converged) continue;
    basis.push_back(p.vector);
    if (static_cast<int>(basis.size()) == k_top) break;
  }
  basis_step = step;
  if (frozen_e1.empty() && !est.pairs.empty())
    frozen_e1 = est.pairs.front().vector;
}

namespace {

// update = the raw (pre-momentum) parameter delta. Heavy ball:
// velocity <- mu * velocity + update; theta <- theta + velocity.
ParamVector finish_step(const ParamVector& params, ParamVector update,
                        const OptimizerConfig& cfg, OptimizerState& state) {
  const size_t d = params.size();
  ParamVector out = params;
  if (cfg.momentum > 0.0) {
    if (state.velocity.empty()) state.velocity.assign(d, 0.0);
    if (state.velocity.size() != d)
      throw StateError("velocity dimension mismatch");
    for (size_t i = 0; i < d; ++i) {
      state.velocity[i] = cfg.momentum * state.velocity[i] + update[i];
      out[i] += state.velocity[i];
    }
  } else {
    for (size_t i = 0; i < d; ++i) out[i] += update[i];
  }
  for (const double x : out)
    if (!std::isfinite(x)) throw NumericalError("non-finite optimizer update");
  return out;
}

// Projection of g onto span(basis[0..k-1]).
ParamVector project(const ParamVector& g,
                    const std::vector<std::vector<double>>& basis, int k) {
  ParamVector top(g.size(), 0.0);
  for (int i = 0; i < k; ++i)
    linalg::axpy(linalg::dot(g, basis[static_cast<size_t>(i)]),
                 basis[static_cast<size_t>(i)], top);
  return top;
}

void require_basis(const OptimizerState& state, int k_top, const char* who) {
  if (state.basis.empty())
    throw StateError(std::string(who) + " called without an eigenbasis");
  if (static_cast<int>(state.basis.size()) > k_top && k_top > 0)
    throw StateError("basis holds more vectors than k_top");
}

} // namespace

ParamVector sgd_step(const ParamVector& params, const ParamVector& g,
                     const OptimizerConfig& cfg, OptimizerState& state) {
  ParamVector update(g.size());
  for (size_t i = 0; i < g.size(); ++i) update[i] = -cfg.eta * g[i];
  return finish_step(params, std::move(update), cfg, state);
}

ParamVector nsgd_step(const ParamVector& params, const ParamVector& g,
                      const OptimizerConfig& cfg, OptimizerState& state) {
  require_basis(state, cfg.k_top, "nsgd_step");
  // gamma = 1 means one rate everywhere; take the SGD path so the
  // equivalence is exact rather than up to rounding.
  if (cfg.gamma == 1.0) return sgd_step(params, g, cfg, state);
  const int k = static_cast<int>(state.basis.size());
  const ParamVector top = project(g, state.basis, k);
  // theta <- theta - eta (g - g_top) - gamma eta g_top
  ParamVector update(g.size());
  for (size_t i = 0; i < g.size(); ++i)
    update[i] = -cfg.eta * (g[i] - top[i]) - cfg.gamma * cfg.eta * top[i];
  return finish_step(params, std::move(update), cfg, state);
}

ParamVector variant_step(const ParamVector& params, const ParamVector& g,
                         const OptimizerConfig& cfg, OptimizerState& state) {
  ParamVector update(g.size(), 0.0);
  switch (cfg.variant) {
    case Variant::SgdTop: {
      require_basis(state, 1, "sgd_top");
      const auto& e1 = state.basis.front();
      linalg::axpy(-cfg.eta * linalg::dot(g, e1), e1, update);
      break;
    }
    case Variant::SgdConstantTop: {
      if (state.frozen_e1.empty())
        throw StateError("sgd_constant_top has no frozen direction");
      const auto& e1 = state.frozen_e1;
      linalg::axpy(-cfg.eta * linalg::dot(g, e1), e1, update);
      break;
    }
    case Variant::SgdNoTop: {
      require_basis(state, 1, "sgd_no_top");
      const auto& e1 = state.basis.front();
      const double c = linalg::dot(g, e1);
      for (size_t i = 0; i < g.size(); ++i)
        update[i] = -cfg.eta * (g[i] - c * e1[i]);
      break;
    }
    default:
      throw ConfigError("variant_step called with a non-projection variant");
  }
  return finish_step(params, std::move(update), cfg, state);
}

ParamVector apply_step(const ParamVector& params, const ParamVector& g,
                       const OptimizerConfig& cfg, OptimizerState& state) {
  switch (cfg.variant) {
    case Variant::Sgd: return sgd_step(params, g, cfg, state);
    case Variant::Nsgd: return nsgd_step(params, g, cfg, state);
    default: return variant_step(params, g, cfg, state);
  }
}

ParamVector newton_step(const ParamVector& params, const ParamVector& g,
                        const HessianOperand& h, double eta,
                        double lambda_damp) {
  const size_t d = params.size();
  ParamVector out = params;
  if (!h.diag.empty()) {
    if (h.diag.size() != d) throw ConfigError("newton diagonal size mismatch");
    for (size_t i = 0; i < d; ++i) {
      const double denom = h.diag[i] + lambda_damp;
      if (std::fabs(denom) < 1e-300)
        throw SingularityError("singular damped Hessian in newton_step");
      out[i] -= eta * g[i] / denom;
    }
    return out;
  }
  if (h.dense.size() != d * d)
    throw ConfigError("newton dense Hessian size mismatch");
  std::vector<double> a = h.dense;
  for (size_t i = 0; i < d; ++i) a[i * d + i] += lambda_damp;
  const std::vector<double> x = linalg::solve_dense(std::move(a), g);
  for (size_t i = 0; i < d; ++i) out[i] -= eta * x[i];
  return out;
}

void LrSchedule::validate() const {
  if (base_eta <= 0.0) throw ConfigError("schedule base eta must be positive");
  if (kind == ScheduleKind::Plateau) {
    if (patience < 1) throw ConfigError("plateau patience must be >= 1");
    if (factor <= 1.0) throw ConfigError("plateau factor must exceed 1");
  }
  if (kind == ScheduleKind::Staged && stage_length < 1)
    throw ConfigError("staged schedule needs stage_length >= 1");
}

double schedule_lr(const LrSchedule& sched,
                   std::span<const double> val_loss_history, int epoch) {
  sched.validate();
  switch (sched.kind) {
    case ScheduleKind::Constant:
      return sched.base_eta;
    case ScheduleKind::Staged:
      return epoch < sched.stage_length ? sched.stage_etas[0]
                                        : sched.stage_etas[1];
    case ScheduleKind::Plateau: {
      // Replay: decay by `factor` after `patience` consecutive epochs
      // without a strictly better best-so-far validation loss.
      double eta = sched.base_eta;
      double best = std::numeric_limits<double>::infinity();
      int stale = 0;
      for (const double loss : val_loss_history) {
        if (loss < best) {
          best = loss;
          stale = 0;
        } else if (++stale >= sched.patience) {
          eta /= sched.factor;
          stale = 0;
        }
      }
      return eta;
    }
  }
  return sched.base_eta;
}

} // namespace sharppath
