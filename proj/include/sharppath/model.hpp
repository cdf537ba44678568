#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sharppath/graph.hpp"
#include "sharppath/rng.hpp"

namespace sharppath {

enum class ModelKind : uint8_t { SimpleCnn = 0, Mlp = 1, Quadratic = 2 };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

/// Explicit quadratic loss 0.5 (θ-c)ᵀ A (θ-c) with a stored symmetric A.
/// Ground-truth channel: its gradient, Hessian, and eigenpairs are exact.
struct QuadraticSpec {
  std::vector<double> diag;        // diagonal A, used when dense is empty
  std::vector<double> dense;       // row-major D x D symmetric
  std::vector<double> start;       // init_params returns this exactly
  std::vector<double> center;      // minimum location; empty = origin
  int dim() const { return static_cast<int>(start.size()); }
};

struct ModelSpec {
  ModelKind kind = ModelKind::Mlp;
  // images (SimpleCnn)
  int input_h = 0, input_w = 0, input_c = 0;
  std::array<int, 4> filters{32, 32, 64, 64};
  int dense_width = 128;
  // mlp
  int input_dim = 0;
  std::vector<int> hidden;
  // shared
  int classes = 0;
  double l2_coefficient = 0.0;
  QuadraticSpec quad;
};

/// Four-conv reference classifier: conv(f1)+ReLU, conv(f2)+ReLU, pool,
/// conv(f3)+ReLU, conv(f4)+ReLU, pool, dense(dense_width)+ReLU,
/// dense(classes). Spatial extents must survive two 2x2 pools.
ModelSpec build_simple_cnn(int h, int w, int c, int classes);
/// Same topology with configurable widths, for desk-scale runs.
ModelSpec build_scaled_cnn(int h, int w, int c, int classes,
                           std::array<int, 4> filters, int dense_width);
ModelSpec build_mlp(int input_dim, std::vector<int> hidden, int classes);
ModelSpec build_quadratic(QuadraticSpec q);

/// A spec bound to its computation graph.
struct Model {
  ModelSpec spec;
  Graph graph;
  static Model build(ModelSpec spec);
  int64_t dim() const { return graph.param_dim; }
};

/// He-normal weights (std = sqrt(2/fan_in)), zero biases; the quadratic
/// model returns its configured start point exactly.
ParamVector init_params(const Model& m, SeededRng& rng);

std::pair<double, ParamVector> loss_grad(const Model& m,
                                         const ParamVector& params,
                                         const Batch& batch);

struct Dataset; // data.hpp

/// Fraction of examples whose argmax logit matches the label. Evaluated in
/// fixed-size chunks so memory stays bounded.
double accuracy(const Model& m, const ParamVector& params, const Dataset& data);

/// Mean loss over a whole dataset, evaluated in chunks with a fixed-order
/// reduction.
double dataset_loss(const Model& m, const ParamVector& params,
                    const Dataset& data);

// Checkpoint file: magic "SHARPPATH1", one model-kind byte, u64 LE parameter
// count, then the parameters as little-endian f64.
void save_checkpoint(const std::string& path, ModelKind kind,
                     const ParamVector& params);
std::pair<ModelKind, ParamVector> load_checkpoint(const std::string& path);

} // namespace sharppath
