#pragma once

#include <span>
#include <string>
#include <vector>

#include "sharppath/spectral.hpp"

namespace sharppath {

enum class Variant : uint8_t { Sgd, Nsgd, SgdTop, SgdConstantTop, SgdNoTop };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct OptimizerConfig {
  double eta = 0.1;
  int batch_size = 128;
  double momentum = 0.0; // heavy-ball coefficient in [0,1)
  double gamma = 1.0;    // learning-rate factor along the top-K directions
  int k_top = 0;         // directions with the adapted rate
  Variant variant = Variant::Sgd;
  void validate() const;
};

/// Mutable per-run state. The eigenbasis is refreshed from the most recent
/// epoch-boundary estimate; between refreshes it is used unchanged.
struct OptimizerState {
  std::vector<double> velocity;
  std::vector<std::vector<double>> basis; // unit-norm, pairwise orthogonal
  long basis_step = -1;                   // step at which it was estimated
  std::vector<double> frozen_e1;          // sgd_constant_top direction e1(0)

  /// Keep the converged pairs, up to k_top.
  void set_basis(const EigenEstimate& est, int k_top, long step);
};

// All step rules are pure in (params, g, state snapshot); they mutate only
// state.velocity. Momentum applies to the composed update, so gamma = 1
// reproduces plain SGD(+momentum) bit for bit.
ParamVector sgd_step(const ParamVector& params, const ParamVector& g,
                     const OptimizerConfig& cfg, OptimizerState& state);
ParamVector nsgd_step(const ParamVector& params, const ParamVector& g,
                      const OptimizerConfig& cfg, OptimizerState& state);
ParamVector variant_step(const ParamVector& params, const ParamVector& g,
                         const OptimizerConfig& cfg, OptimizerState& state);
/// Dispatch on cfg.variant.
ParamVector apply_step(const ParamVector& params, const ParamVector& g,
                       const OptimizerConfig& cfg, OptimizerState& state);

/// Hessian operand for the Newton step: a diagonal or a dense symmetric
/// matrix (the explicit quadratic model is the only intended caller).
struct HessianOperand {
  std::vector<double> diag;
  std::vector<double> dense; // row-major D x D when diag is empty
};

/// theta - eta (H + lambda I)^{-1} g.
ParamVector newton_step(const ParamVector& params, const ParamVector& g,
                        const HessianOperand& h, double eta,
                        double lambda_damp);

enum class ScheduleKind : uint8_t { Constant, Plateau, Staged };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double base_eta = 0.1;
  int patience = 100;   // plateau: epochs without a new best val loss
  double factor = 10.0; // plateau: decay divisor
  int stage_length = 10;
  double stage_etas[2] = {0.1, 0.01};
  void validate() const;
};

/// Learning rate for the given epoch. Plateau decisions replay the whole
/// validation-loss history, so the function stays pure.
double schedule_lr(const LrSchedule& sched,
                   std::span<const double> val_loss_history, int epoch);

} // namespace sharppath
