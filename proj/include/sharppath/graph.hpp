#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sharppath/tensor.hpp"

namespace sharppath {

/// One mini-batch. labels drive the fused softmax/cross-entropy node;
/// models without a classifier head ignore them.
struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  int size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

/// Closed op set. Convolution is lowered to Im2col3x3 + Matmul at graph
/// construction, so the same three passes (forward, reverse, tangent)
/// cover first and second derivatives of every model.
enum class Op : uint8_t {
  Param,       // leaf: slice of the flat parameter vector
  Input,       // leaf: batch inputs
  ConstTensor, // leaf: baked-in constant (quadratic model's A)
  SubConst,    // x - const
  Im2col3x3,   // NHWC -> (N*H*W, 9C) patches, 'same' padding
  Matmul,      // op(A)*op(B) on 2-D views (rows, numel/rows)
  BiasAdd,     // broadcast add over the trailing extent
  Relu,
  MaxPool2x2,  // NHWC, stride 2; even H and W required
  SoftmaxXent, // logits (N,C) + batch labels -> mean scalar loss
  L2Penalty,   // 0.5 * coef * sum ||w||^2 over weight leaves
  QuadForm,    // 0.5 x'Ax for a baked-in symmetric A; gradient and
               // Hessian-vector products are single matvecs, so the
               // quadratic model is exact to the last bit
  AddScalar,
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<int> in;          // input node ids; all precede this node
  std::vector<int> param_shape; // Param
  bool is_weight = false;       // Param: participates in L2
  bool trans_a = false;         // Matmul
  bool trans_b = false;
  double factor = 1.0;          // L2 coefficient
  Tensor constant;              // ConstTensor payload / SubConst subtrahend
  std::vector<int> out_shape;   // Matmul: optional NHWC reinterpretation,
                                // -1 marks the batch extent
};

/// Static computation graph of a scalar training loss. Nodes are stored in
/// topological order; evaluation is a pure function of (params, batch), so
/// concurrent evaluations on shared graphs are safe.
struct Graph {
  std::vector<Node> nodes;
  std::vector<int> param_nodes;     // leaves, in flat-vector order
  std::vector<int64_t> param_offsets;
  int64_t param_dim = 0;
  int input = -1;  // -1 when the loss does not read batch inputs
  int logits = -1; // classifier head, -1 for quadratic models
  int output = -1; // scalar loss
};

class GraphBuilder {
public:
  int param(std::vector<int> shape, bool is_weight);
  int input();
  int constant(Tensor t);
  int sub_const(int x, Tensor c);
  int im2col3x3(int x);
  int matmul(int a, int b, bool trans_a = false, bool trans_b = false,
             std::vector<int> out_shape = {});
  int bias_add(int x, int b);
  int relu(int x);
  int maxpool2x2(int x);
  int softmax_xent(int logits);
  int l2_penalty(std::vector<int> weights, double coef);
  int quad_form(int x, Tensor a);
  int add_scalar(int a, int b);

  /// Seals the graph. Checks that every node's inputs precede it.
  Graph finish(int output, int logits = -1);

private:
  int push(Node n);
  Graph g_;
};

// --- evaluation -----------------------------------------------------------

/// Mean batch loss (including any L2 term in the graph). Throws
/// NumericalError naming the first node that produced a non-finite value.
double forward_eval(const Graph& g, std::span<const double> params,
                    const Batch& batch);

/// Exact reverse-mode gradient of the mean batch loss.
ParamVector grad(const Graph& g, std::span<const double> params,
                 const Batch& batch, double* loss_out = nullptr);

/// Exact Hessian-vector product H·v via a tangent (dual-number) sweep
/// through both the forward and the reverse pass.
ParamVector hvp(const Graph& g, std::span<const double> params,
                const Batch& batch, std::span<const double> v);

/// Forward pass up to the logits node only; labels are not consulted.
Tensor forward_logits(const Graph& g, std::span<const double> params,
                      const Tensor& inputs);

} // namespace sharppath
