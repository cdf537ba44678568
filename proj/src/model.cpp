#include "sharppath/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sharppath/data.hpp"

namespace sharppath {

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::SimpleCnn: return "simple_cnn";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Quadratic: return "quadratic";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "simple_cnn") return ModelKind::SimpleCnn;
  if (name == "mlp") return ModelKind::Mlp;
  if (name == "quadratic") return ModelKind::Quadratic;
  throw ConfigError("unknown model kind: " + name);
}

ModelSpec build_simple_cnn(int h, int w, int c, int classes) {
  return build_scaled_cnn(h, w, c, classes, {32, 32, 64, 64}, 128);
}

ModelSpec build_scaled_cnn(int h, int w, int c, int classes,
                           std::array<int, 4> filters, int dense_width) {
  if (h < 4 || w < 4)
    throw ConfigError("cnn input smaller than 4x4 cannot survive two pools");
  if (h % 4 != 0 || w % 4 != 0)
    throw ConfigError("cnn input extents must be multiples of 4");
  if (c < 1 || classes < 2) throw ConfigError("cnn needs channels and >=2 classes");
  for (const int f : filters)
    if (f < 1) throw ConfigError("cnn filter counts must be positive");
  ModelSpec s;
  s.kind = ModelKind::SimpleCnn;
  s.input_h = h;
  s.input_w = w;
  s.input_c = c;
  s.filters = filters;
  s.dense_width = dense_width;
  s.classes = classes;
  return s;
}

ModelSpec build_mlp(int input_dim, std::vector<int> hidden, int classes) {
  if (input_dim < 1 || classes < 2) throw ConfigError("mlp needs inputs and >=2 classes");
  for (const int hdim : hidden)
    if (hdim < 1) throw ConfigError("mlp hidden widths must be positive");
  ModelSpec s;
  s.kind = ModelKind::Mlp;
  s.input_dim = input_dim;
  s.hidden = std::move(hidden);
  s.classes = classes;
  return s;
}

ModelSpec build_quadratic(QuadraticSpec q) {
  const int d = q.dim();
  if (d < 1) throw ConfigError("quadratic model needs a start point");
  if (!q.dense.empty()) {
    if (q.dense.size() != static_cast<size_t>(d) * d)
      throw ConfigError("quadratic dense matrix must be D x D");
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        if (q.dense[static_cast<size_t>(i) * d + j] !=
            q.dense[static_cast<size_t>(j) * d + i])
          throw ConfigError("quadratic matrix must be symmetric");
  } else if (q.diag.size() != static_cast<size_t>(d)) {
    throw ConfigError("quadratic diagonal length must match start point");
  }
  if (!q.center.empty() && q.center.size() != static_cast<size_t>(d))
    throw ConfigError("quadratic center length must match start point");
  ModelSpec s;
  s.kind = ModelKind::Quadratic;
  s.quad = std::move(q);
  return s;
}

namespace {

Graph build_cnn_graph(const ModelSpec& s) {
  GraphBuilder b;
  const int x = b.input();
  int cur = x;
  int h = s.input_h, w = s.input_w, c = s.input_c;
  std::vector<int> weights;
  for (int layer = 0; layer < 4; ++layer) {
    const int f = s.filters[static_cast<size_t>(layer)];
    const int wgt = b.param({9 * c, f}, true);
    const int bias = b.param({f}, false);
    weights.push_back(wgt);
    const int cols = b.im2col3x3(cur);
    const int mm = b.matmul(cols, wgt, false, false, {-1, h, w, f});
    const int ba = b.bias_add(mm, bias);
    cur = b.relu(ba);
    c = f;
    if (layer == 1 || layer == 3) {
      cur = b.maxpool2x2(cur);
      h /= 2;
      w /= 2;
    }
  }
  const int flat_dim = h * w * c;
  const int w1 = b.param({flat_dim, s.dense_width}, true);
  const int b1 = b.param({s.dense_width}, false);
  weights.push_back(w1);
  int dense = b.relu(b.bias_add(b.matmul(cur, w1), b1));
  const int w2 = b.param({s.dense_width, s.classes}, true);
  const int b2 = b.param({s.classes}, false);
  weights.push_back(w2);
  const int logits = b.bias_add(b.matmul(dense, w2), b2);
  int loss = b.softmax_xent(logits);
  if (s.l2_coefficient > 0.0)
    loss = b.add_scalar(loss, b.l2_penalty(weights, s.l2_coefficient));
  return b.finish(loss, logits);
}

Graph build_mlp_graph(const ModelSpec& s) {
  GraphBuilder b;
  const int x = b.input();
  int cur = x;
  int in_dim = s.input_dim;
  std::vector<int> weights;
  for (const int hdim : s.hidden) {
    const int wgt = b.param({in_dim, hdim}, true);
    const int bias = b.param({hdim}, false);
    weights.push_back(wgt);
    cur = b.relu(b.bias_add(b.matmul(cur, wgt), bias));
    in_dim = hdim;
  }
  const int wgt = b.param({in_dim, s.classes}, true);
  const int bias = b.param({s.classes}, false);
  weights.push_back(wgt);
  const int logits = b.bias_add(b.matmul(cur, wgt), bias);
  int loss = b.softmax_xent(logits);
  if (s.l2_coefficient > 0.0)
    loss = b.add_scalar(loss, b.l2_penalty(weights, s.l2_coefficient));
  return b.finish(loss, logits);
}

Graph build_quadratic_graph(const ModelSpec& s) {
  const int d = s.quad.dim();
  std::vector<double> a = s.quad.dense;
  if (a.empty()) {
    a.assign(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
      a[static_cast<size_t>(i) * d + i] = s.quad.diag[static_cast<size_t>(i)];
  }
  GraphBuilder b;
  const int theta = b.param({d, 1}, false);
  int shifted = theta;
  if (!s.quad.center.empty()) {
    Tensor c({d, 1}, s.quad.center);
    shifted = b.sub_const(theta, std::move(c));
  }
  const int loss = b.quad_form(shifted, Tensor({d, d}, std::move(a)));
  return b.finish(loss);
}

} // namespace

Model Model::build(ModelSpec spec) {
  Model m;
  switch (spec.kind) {
    case ModelKind::SimpleCnn: m.graph = build_cnn_graph(spec); break;
    case ModelKind::Mlp: m.graph = build_mlp_graph(spec); break;
    case ModelKind::Quadratic: m.graph = build_quadratic_graph(spec); break;
  }
  m.spec = std::move(spec);
  return m;
}

ParamVector init_params(const Model& m, SeededRng& rng) {
  if (m.spec.kind == ModelKind::Quadratic) return m.spec.quad.start;
  ParamVector out(static_cast<size_t>(m.graph.param_dim), 0.0);
  for (size_t p = 0; p < m.graph.param_nodes.size(); ++p) {
    const Node& nd = m.graph.nodes[static_cast<size_t>(m.graph.param_nodes[p])];
    const int64_t off = m.graph.param_offsets[p];
    const int64_t len = Tensor::numel(nd.param_shape);
    if (!nd.is_weight) continue; // biases start at zero
    const int fan_in = nd.param_shape[0];
    const double std = std::sqrt(2.0 / fan_in);
    for (int64_t j = 0; j < len; ++j) out[off + j] = std * rng.normal();
  }
  return out;
}

std::pair<double, ParamVector> loss_grad(const Model& m,
                                         const ParamVector& params,
                                         const Batch& batch) {
  double loss = 0.0;
  ParamVector g = grad(m.graph, params, batch, &loss);
  return {loss, std::move(g)};
}

namespace {
constexpr int kEvalChunk = 256;
}

double accuracy(const Model& m, const ParamVector& params,
                const Dataset& data) {
  if (data.n() == 0) throw ConfigError("accuracy of an empty dataset");
  if (m.graph.logits < 0)
    throw ConfigError("model has no classifier head");
  int correct = 0;
  for (int begin = 0; begin < data.n(); begin += kEvalChunk) {
    const int end = std::min(data.n(), begin + kEvalChunk);
    Batch b = gather_range(data, begin, end);
    const Tensor logits = forward_logits(m.graph, params, b.inputs);
    const int c = static_cast<int>(logits.row_width());
    for (int r = 0; r < end - begin; ++r) {
      const double* row = logits.data.data() + static_cast<int64_t>(r) * c;
      int arg = 0;
      for (int j = 1; j < c; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == b.labels[static_cast<size_t>(r)]) ++correct;
    }
  }
  return static_cast<double>(correct) / data.n();
}

double dataset_loss(const Model& m, const ParamVector& params,
                    const Dataset& data) {
  if (data.n() == 0) throw ConfigError("loss of an empty dataset");
  if (m.graph.input < 0) {
    Batch b;
    b.inputs = Tensor({1, 1}, {0.0});
    b.labels = {0};
    return forward_eval(m.graph, params, b);
  }
  double total = 0.0;
  for (int begin = 0; begin < data.n(); begin += kEvalChunk) {
    const int end = std::min(data.n(), begin + kEvalChunk);
    Batch b = gather_range(data, begin, end);
    total += forward_eval(m.graph, params, b) * (end - begin);
  }
  return total / data.n();
}

namespace {

void put_u64_le(std::ostream& os, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

constexpr char kMagic[] = "SHARPPATH1";
constexpr size_t kMagicLen = 10;

} // namespace

void save_checkpoint(const std::string& path, ModelKind kind,
                     const ParamVector& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, kMagicLen);
  const unsigned char kb = static_cast<unsigned char>(kind);
  os.write(reinterpret_cast<const char*>(&kb), 1);
  put_u64_le(os, params.size());
  for (const double x : params) {
    const uint64_t bits = std::bit_cast<uint64_t>(x);
    put_u64_le(os, bits);
  }
  if (!os) throw IoError("short write to checkpoint: " + path);
}

std::pair<ModelKind, ParamVector> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  is.read(magic, kMagicLen);
  if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw FormatError("bad checkpoint magic in " + path);
  unsigned char kb = 0;
  is.read(reinterpret_cast<char*>(&kb), 1);
  if (kb > 2) throw FormatError("unknown model kind in checkpoint " + path);
  const uint64_t d = get_u64_le(is);
  ParamVector params(d);
  for (uint64_t i = 0; i < d; ++i) {
    const uint64_t bits = get_u64_le(is);
    params[i] = std::bit_cast<double>(bits);
  }
  if (!is) throw FormatError("truncated checkpoint " + path);
  char extra;
  if (is.read(&extra, 1))
    throw FormatError("trailing bytes in checkpoint " + path);
  return {static_cast<ModelKind>(kb), std::move(params)};
}

} // namespace sharppath
