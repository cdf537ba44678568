#include "sharppath/graph.hpp"

#include <cmath>
#include <cstdio>

#include "sharppath/kernels.hpp"

namespace sharppath {

const char* op_name(Op op) {
  switch (op) {
    case Op::Param: return "param";
    case Op::Input: return "input";
    case Op::ConstTensor: return "const";
    case Op::SubConst: return "sub_const";
    case Op::Im2col3x3: return "im2col3x3";
    case Op::Matmul: return "matmul";
    case Op::BiasAdd: return "bias_add";
    case Op::Relu: return "relu";
    case Op::MaxPool2x2: return "maxpool2x2";
    case Op::SoftmaxXent: return "softmax_xent";
    case Op::L2Penalty: return "l2_penalty";
    case Op::QuadForm: return "quad_form";
    case Op::AddScalar: return "add_scalar";
  }
  return "?";
}

int GraphBuilder::push(Node n) {
  for (const int j : n.in)
    if (j < 0 || j >= static_cast<int>(g_.nodes.size()))
      throw ConfigError("graph node references an undefined input");
  g_.nodes.push_back(std::move(n));
  return static_cast<int>(g_.nodes.size()) - 1;
}

int GraphBuilder::param(std::vector<int> shape, bool is_weight) {
  Node n;
  n.op = Op::Param;
  n.param_shape = std::move(shape);
  n.is_weight = is_weight;
  const int id = push(std::move(n));
  g_.param_nodes.push_back(id);
  g_.param_offsets.push_back(g_.param_dim);
  g_.param_dim += Tensor::numel(g_.nodes[id].param_shape);
  return id;
}

int GraphBuilder::input() {
  Node n;
  n.op = Op::Input;
  const int id = push(std::move(n));
  g_.input = id;
  return id;
}

int GraphBuilder::constant(Tensor t) {
  Node n;
  n.op = Op::ConstTensor;
  n.constant = std::move(t);
  return push(std::move(n));
}

int GraphBuilder::sub_const(int x, Tensor c) {
  Node n;
  n.op = Op::SubConst;
  n.in = {x};
  n.constant = std::move(c);
  return push(std::move(n));
}

int GraphBuilder::im2col3x3(int x) {
  Node n;
  n.op = Op::Im2col3x3;
  n.in = {x};
  return push(std::move(n));
}

int GraphBuilder::matmul(int a, int b, bool trans_a, bool trans_b,
                         std::vector<int> out_shape) {
  Node n;
  n.op = Op::Matmul;
  n.in = {a, b};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.out_shape = std::move(out_shape);
  return push(std::move(n));
}

int GraphBuilder::bias_add(int x, int b) {
  Node n;
  n.op = Op::BiasAdd;
  n.in = {x, b};
  return push(std::move(n));
}

int GraphBuilder::relu(int x) {
  Node n;
  n.op = Op::Relu;
  n.in = {x};
  return push(std::move(n));
}

int GraphBuilder::maxpool2x2(int x) {
  Node n;
  n.op = Op::MaxPool2x2;
  n.in = {x};
  return push(std::move(n));
}

int GraphBuilder::softmax_xent(int logits) {
  Node n;
  n.op = Op::SoftmaxXent;
  n.in = {logits};
  return push(std::move(n));
}

int GraphBuilder::l2_penalty(std::vector<int> weights, double coef) {
  Node n;
  n.op = Op::L2Penalty;
  n.in = std::move(weights);
  n.factor = coef;
  return push(std::move(n));
}

int GraphBuilder::quad_form(int x, Tensor a) {
  Node n;
  n.op = Op::QuadForm;
  n.in = {x};
  n.constant = std::move(a);
  return push(std::move(n));
}

int GraphBuilder::add_scalar(int a, int b) {
  Node n;
  n.op = Op::AddScalar;
  n.in = {a, b};
  return push(std::move(n));
}

Graph GraphBuilder::finish(int output, int logits) {
  if (output < 0 || output >= static_cast<int>(g_.nodes.size()))
    throw ConfigError("graph output node undefined");
  for (size_t i = 0; i < g_.nodes.size(); ++i)
    for (const int j : g_.nodes[i].in)
      if (j >= static_cast<int>(i))
        throw ConfigError("graph is not topologically ordered");
  g_.output = output;
  g_.logits = logits;
  return std::move(g_);
}

// --- evaluation -------------------------------------------------------------

namespace {

enum class Mode { Loss, Grad, Hvp };

std::string node_label(const Graph& g, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "node %d (%s)", i, op_name(g.nodes[i].op));
  return buf;
}

struct MatDims {
  int m, k, n;
};

// 2-D view: leading extent x everything else.
inline int view_rows(const Tensor& t) { return t.rows(); }
inline int view_cols(const Tensor& t) { return static_cast<int>(t.row_width()); }

MatDims matmul_dims(const Node& nd, const Tensor& a, const Tensor& b) {
  const int ra = view_rows(a), ca = view_cols(a);
  const int rb = view_rows(b), cb = view_cols(b);
  const int m = nd.trans_a ? ca : ra;
  const int k = nd.trans_a ? ra : ca;
  const int kb = nd.trans_b ? cb : rb;
  const int n = nd.trans_b ? rb : cb;
  if (k != kb) throw ConfigError("matmul inner extents disagree");
  return {m, k, n};
}

std::vector<int> resolve_out_shape(const Node& nd, int m, int n) {
  if (nd.out_shape.empty()) return {m, n};
  std::vector<int> s = nd.out_shape;
  int64_t known = 1;
  int wild = -1;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == -1) wild = static_cast<int>(i);
    else known *= s[i];
  }
  const int64_t total = static_cast<int64_t>(m) * n;
  if (wild >= 0) {
    if (known == 0 || total % known != 0)
      throw ConfigError("matmul output reshape does not divide evenly");
    s[wild] = static_cast<int>(total / known);
  } else if (known != total) {
    throw ConfigError("matmul output reshape mismatch");
  }
  return s;
}

struct Workspace {
  std::vector<Tensor> val, tan, adj, adjtan;
  std::vector<Tensor> cache;                  // softmax probabilities; A*x
  std::vector<std::vector<int64_t>> pool_idx; // MaxPool2x2 argmax indices
  std::vector<char> varying;                  // depends on params
};

Tensor& ensure(std::vector<Tensor>& slot, int i, const std::vector<int>& shape) {
  if (slot[i].data.empty() && Tensor::numel(shape) > 0)
    slot[i] = Tensor::zeros(shape);
  return slot[i];
}

// Ā += dL/dA given C = op(A)·op(B).
void matmul_adj_a(const Node& nd, const MatDims& d, const Tensor& adj_c,
                  const Tensor& b, Tensor& adj_a) {
  if (!nd.trans_a && !nd.trans_b)
    kernels::matmul(d.m, d.n, d.k, adj_c.data.data(), b.data.data(),
                    adj_a.data.data(), false, true, true);
  else if (!nd.trans_a && nd.trans_b)
    kernels::matmul(d.m, d.n, d.k, adj_c.data.data(), b.data.data(),
                    adj_a.data.data(), false, false, true);
  else if (nd.trans_a && !nd.trans_b)
    kernels::matmul(d.k, d.n, d.m, b.data.data(), adj_c.data.data(),
                    adj_a.data.data(), false, true, true);
  else
    kernels::matmul(d.k, d.n, d.m, b.data.data(), adj_c.data.data(),
                    adj_a.data.data(), true, true, true);
}

// B̄ += dL/dB given C = op(A)·op(B).
void matmul_adj_b(const Node& nd, const MatDims& d, const Tensor& adj_c,
                  const Tensor& a, Tensor& adj_b) {
  if (!nd.trans_b && !nd.trans_a)
    kernels::matmul(d.k, d.m, d.n, a.data.data(), adj_c.data.data(),
                    adj_b.data.data(), true, false, true);
  else if (!nd.trans_b && nd.trans_a)
    kernels::matmul(d.k, d.m, d.n, a.data.data(), adj_c.data.data(),
                    adj_b.data.data(), false, false, true);
  else if (nd.trans_b && !nd.trans_a)
    kernels::matmul(d.n, d.m, d.k, adj_c.data.data(), a.data.data(),
                    adj_b.data.data(), true, false, true);
  else
    kernels::matmul(d.n, d.m, d.k, adj_c.data.data(), a.data.data(),
                    adj_b.data.data(), true, true, true);
}

void check_finite(const Graph& g, int i, const Tensor& t) {
  for (const double v : t.data)
    if (!std::isfinite(v))
      throw NumericalError("non-finite value at " + node_label(g, i));
}

class Evaluator {
public:
  Evaluator(const Graph& g, std::span<const double> params, const Batch& batch,
            Mode mode, std::span<const double> tangent_in)
      : g_(g), params_(params), batch_(batch), mode_(mode), vseed_(tangent_in) {
    const size_t n = g.nodes.size();
    ws_.val.resize(n);
    ws_.tan.resize(n);
    ws_.adj.resize(n);
    ws_.adjtan.resize(n);
    ws_.cache.resize(n);
    ws_.pool_idx.resize(n);
    ws_.varying.assign(n, 0);
    if (static_cast<int64_t>(params.size()) != g.param_dim)
      throw ConfigError("parameter vector length does not match graph");
    if (mode == Mode::Hvp &&
        static_cast<int64_t>(tangent_in.size()) != g.param_dim)
      throw ConfigError("hvp direction length does not match graph");
  }

  void forward(int upto, bool finite_checks) {
    for (int i = 0; i <= upto; ++i) {
      forward_node(i);
      if (finite_checks) check_finite(g_, i, ws_.val[i]);
    }
  }

  void backward() {
    const int out = g_.output;
    if (!ws_.val[out].is_scalar())
      throw ConfigError("graph output is not a scalar");
    ensure(ws_.adj, out, ws_.val[out].shape).data[0] = 1.0;
    if (mode_ == Mode::Hvp) ensure(ws_.adjtan, out, ws_.val[out].shape);
    for (int i = out; i >= 0; --i) {
      if (!ws_.varying[i] || ws_.adj[i].data.empty()) continue;
      backward_node(i);
    }
  }

  double loss() const { return ws_.val[g_.output].scalar(); }

  ParamVector collect(const std::vector<Tensor>& slot) const {
    ParamVector out(static_cast<size_t>(g_.param_dim), 0.0);
    for (size_t p = 0; p < g_.param_nodes.size(); ++p) {
      const Tensor& t = slot[g_.param_nodes[p]];
      if (t.data.empty()) continue;
      std::copy(t.data.begin(), t.data.end(),
                out.begin() + g_.param_offsets[p]);
    }
    return out;
  }

  const ParamVector grad_out() const { return collect(ws_.adj); }
  const ParamVector hvp_out() const { return collect(ws_.adjtan); }
  const Tensor& value(int i) const { return ws_.val[i]; }

private:
  void forward_node(int i) {
    const Node& nd = g_.nodes[i];
    const bool want_tan = mode_ == Mode::Hvp;
    switch (nd.op) {
      case Op::Param: {
        const size_t slot = param_slot(i);
        const int64_t off = g_.param_offsets[slot];
        const int64_t len = Tensor::numel(nd.param_shape);
        ws_.val[i] = Tensor(nd.param_shape,
                            {params_.begin() + off, params_.begin() + off + len});
        ws_.varying[i] = 1;
        if (want_tan)
          ws_.tan[i] = Tensor(nd.param_shape,
                              {vseed_.begin() + off, vseed_.begin() + off + len});
        break;
      }
      case Op::Input:
        if (batch_.size() == 0) throw ConfigError("empty batch");
        ws_.val[i] = batch_.inputs;
        break;
      case Op::ConstTensor:
        ws_.val[i] = nd.constant;
        break;
      case Op::SubConst: {
        const int x = nd.in[0];
        mark_varying(i);
        const Tensor& vx = ws_.val[x];
        if (vx.size() != nd.constant.size())
          throw ConfigError("sub_const size mismatch");
        Tensor out = vx;
        for (int64_t j = 0; j < out.size(); ++j)
          out.data[j] -= nd.constant.data[j];
        ws_.val[i] = std::move(out);
        if (want_tan && ws_.varying[x]) ws_.tan[i] = ws_.tan[x];
        break;
      }
      case Op::Im2col3x3: {
        const int x = nd.in[0];
        mark_varying(i);
        const Tensor& vx = ws_.val[x];
        if (vx.shape.size() != 4) throw ConfigError("im2col expects NHWC");
        const int n = vx.shape[0], h = vx.shape[1], w = vx.shape[2],
                  c = vx.shape[3];
        Tensor out = Tensor::zeros({n * h * w, 9 * c});
        kernels::im2col3x3(n, h, w, c, vx.data.data(), out.data.data());
        ws_.val[i] = std::move(out);
        if (want_tan && ws_.varying[x]) {
          Tensor tout = Tensor::zeros({n * h * w, 9 * c});
          kernels::im2col3x3(n, h, w, c, ws_.tan[x].data.data(),
                             tout.data.data());
          ws_.tan[i] = std::move(tout);
        }
        break;
      }
      case Op::Matmul: {
        const int a = nd.in[0], b = nd.in[1];
        mark_varying(i);
        const Tensor& va = ws_.val[a];
        const Tensor& vb = ws_.val[b];
        const MatDims d = matmul_dims(nd, va, vb);
        Tensor out(resolve_out_shape(nd, d.m, d.n),
                   std::vector<double>(static_cast<size_t>(d.m) * d.n, 0.0));
        kernels::matmul(d.m, d.k, d.n, va.data.data(), vb.data.data(),
                        out.data.data(), nd.trans_a, nd.trans_b);
        ws_.val[i] = std::move(out);
        if (want_tan && ws_.varying[i]) {
          Tensor& tout = ensure(ws_.tan, i, ws_.val[i].shape);
          if (ws_.varying[a])
            kernels::matmul(d.m, d.k, d.n, ws_.tan[a].data.data(),
                            vb.data.data(), tout.data.data(), nd.trans_a,
                            nd.trans_b, true);
          if (ws_.varying[b])
            kernels::matmul(d.m, d.k, d.n, va.data.data(),
                            ws_.tan[b].data.data(), tout.data.data(),
                            nd.trans_a, nd.trans_b, true);
        }
        break;
      }
      case Op::BiasAdd: {
        const int x = nd.in[0], b = nd.in[1];
        mark_varying(i);
        const Tensor& vx = ws_.val[x];
        const Tensor& vb = ws_.val[b];
        const int64_t f = vb.size();
        if (f == 0 || vx.size() % f != 0)
          throw ConfigError("bias length does not divide activation size");
        Tensor out = vx;
        const int64_t rows = vx.size() / f;
        for (int64_t r = 0; r < rows; ++r) {
          double* dst = out.data.data() + r * f;
          for (int64_t j = 0; j < f; ++j) dst[j] += vb.data[j];
        }
        ws_.val[i] = std::move(out);
        if (want_tan && ws_.varying[i]) {
          Tensor& tout = ensure(ws_.tan, i, ws_.val[i].shape);
          if (ws_.varying[x]) tout.data = ws_.tan[x].data;
          if (ws_.varying[b]) {
            const Tensor& tb = ws_.tan[b];
            for (int64_t r = 0; r < rows; ++r) {
              double* dst = tout.data.data() + r * f;
              for (int64_t j = 0; j < f; ++j) dst[j] += tb.data[j];
            }
          }
        }
        break;
      }
      case Op::Relu: {
        const int x = nd.in[0];
        mark_varying(i);
        const Tensor& vx = ws_.val[x];
        Tensor out = vx;
        for (double& v : out.data)
          if (v < 0.0) v = 0.0;
        ws_.val[i] = std::move(out);
        if (want_tan && ws_.varying[x]) {
          Tensor tout = ws_.tan[x];
          for (int64_t j = 0; j < tout.size(); ++j)
            if (!(vx.data[j] > 0.0)) tout.data[j] = 0.0;
          ws_.tan[i] = std::move(tout);
        }
        break;
      }
      case Op::MaxPool2x2: {
        const int x = nd.in[0];
        mark_varying(i);
        const Tensor& vx = ws_.val[x];
        if (vx.shape.size() != 4) throw ConfigError("maxpool expects NHWC");
        const int n = vx.shape[0], h = vx.shape[1], w = vx.shape[2],
                  c = vx.shape[3];
        if (h % 2 != 0 || w % 2 != 0)
          throw ConfigError("maxpool needs even spatial extents");
        const int oh = h / 2, ow = w / 2;
        Tensor out = Tensor::zeros({n, oh, ow, c});
        auto& idx = ws_.pool_idx[i];
        idx.assign(out.data.size(), 0);
        for (int img = 0; img < n; ++img)
          for (int oi = 0; oi < oh; ++oi)
            for (int oj = 0; oj < ow; ++oj)
              for (int ch = 0; ch < c; ++ch) {
                int64_t best = -1;
                double bv = 0.0;
                for (int di = 0; di < 2; ++di)
                  for (int dj = 0; dj < 2; ++dj) {
                    const int64_t src =
                        ((static_cast<int64_t>(img) * h + (2 * oi + di)) * w +
                         (2 * oj + dj)) * c + ch;
                    if (best < 0 || vx.data[src] > bv) {
                      best = src;
                      bv = vx.data[src];
                    }
                  }
                const int64_t o =
                    ((static_cast<int64_t>(img) * oh + oi) * ow + oj) * c + ch;
                out.data[o] = bv;
                idx[o] = best;
              }
        ws_.val[i] = std::move(out);
        if (want_tan && ws_.varying[x]) {
          Tensor tout = Tensor::zeros(ws_.val[i].shape);
          const Tensor& tx = ws_.tan[x];
          for (size_t o = 0; o < tout.data.size(); ++o)
            tout.data[o] = tx.data[idx[o]];
          ws_.tan[i] = std::move(tout);
        }
        break;
      }
      case Op::SoftmaxXent: {
        const int z = nd.in[0];
        mark_varying(i);
        const Tensor& vz = ws_.val[z];
        const int n = view_rows(vz);
        const int c = view_cols(vz);
        if (static_cast<int>(batch_.labels.size()) != n)
          throw ConfigError("label count does not match batch");
        Tensor probs = Tensor::zeros({n, c});
        double total = 0.0;
        for (int r = 0; r < n; ++r) {
          const double* zr = vz.data.data() + static_cast<int64_t>(r) * c;
          double mx = zr[0];
          for (int j = 1; j < c; ++j) mx = std::max(mx, zr[j]);
          double sum = 0.0;
          double* pr = probs.data.data() + static_cast<int64_t>(r) * c;
          for (int j = 0; j < c; ++j) {
            pr[j] = std::exp(zr[j] - mx);
            sum += pr[j];
          }
          const int y = batch_.labels[r];
          if (y < 0 || y >= c) throw ConfigError("label out of range");
          total += std::log(sum) + mx - zr[y];
          const double inv = 1.0 / sum;
          for (int j = 0; j < c; ++j) pr[j] *= inv;
        }
        ws_.val[i] = Tensor({1}, {total / n});
        ws_.cache[i] = std::move(probs);
        if (want_tan && ws_.varying[z]) {
          const Tensor& tz = ws_.tan[z];
          const Tensor& p = ws_.cache[i];
          double tsum = 0.0;
          for (int r = 0; r < n; ++r) {
            const double* pr = p.data.data() + static_cast<int64_t>(r) * c;
            const double* tr = tz.data.data() + static_cast<int64_t>(r) * c;
            double rowdot = 0.0;
            for (int j = 0; j < c; ++j) rowdot += pr[j] * tr[j];
            tsum += rowdot - tr[batch_.labels[r]];
          }
          ws_.tan[i] = Tensor({1}, {tsum / n});
        }
        break;
      }
      case Op::QuadForm: {
        const int x = nd.in[0];
        mark_varying(i);
        const Tensor& vx = ws_.val[x];
        const int dsz = static_cast<int>(vx.size());
        if (nd.constant.size() != static_cast<int64_t>(dsz) * dsz)
          throw ConfigError("quad_form matrix size mismatch");
        // w = A x, cached for the reverse pass
        Tensor w = Tensor::zeros({dsz, 1});
        kernels::matmul(dsz, dsz, 1, nd.constant.data.data(), vx.data.data(),
                        w.data.data());
        double sum = 0.0;
        for (int r = 0; r < dsz; ++r) sum += vx.data[r] * w.data[r];
        ws_.cache[i] = std::move(w);
        ws_.val[i] = Tensor({1}, {0.5 * sum});
        if (want_tan && ws_.varying[x]) {
          const Tensor& tx = ws_.tan[x];
          double ts = 0.0;
          for (int r = 0; r < dsz; ++r) ts += ws_.cache[i].data[r] * tx.data[r];
          ws_.tan[i] = Tensor({1}, {ts});
        }
        break;
      }
      case Op::L2Penalty: {
        mark_varying(i);
        double s = 0.0;
        for (const int w : nd.in)
          for (const double v : ws_.val[w].data) s += v * v;
        ws_.val[i] = Tensor({1}, {0.5 * nd.factor * s});
        if (want_tan) {
          double ts = 0.0;
          for (const int w : nd.in) {
            if (!ws_.varying[w]) continue;
            const auto& vw = ws_.val[w].data;
            const auto& tw = ws_.tan[w].data;
            for (size_t j = 0; j < vw.size(); ++j) ts += vw[j] * tw[j];
          }
          ws_.tan[i] = Tensor({1}, {nd.factor * ts});
        }
        break;
      }
      case Op::AddScalar: {
        const int a = nd.in[0], b = nd.in[1];
        mark_varying(i);
        ws_.val[i] = Tensor({1}, {ws_.val[a].scalar() + ws_.val[b].scalar()});
        if (want_tan && ws_.varying[i]) {
          double t = 0.0;
          if (ws_.varying[a] && !ws_.tan[a].data.empty())
            t += ws_.tan[a].scalar();
          if (ws_.varying[b] && !ws_.tan[b].data.empty())
            t += ws_.tan[b].scalar();
          ws_.tan[i] = Tensor({1}, {t});
        }
        break;
      }
    }
  }

  void backward_node(int i) {
    const Node& nd = g_.nodes[i];
    const Tensor& ac = ws_.adj[i];
    const bool want_tan = mode_ == Mode::Hvp;
    const Tensor* atc = want_tan && !ws_.adjtan[i].data.empty()
                            ? &ws_.adjtan[i]
                            : nullptr;
    switch (nd.op) {
      case Op::Param:
      case Op::Input:
      case Op::ConstTensor:
        break;
      case Op::SubConst:
      case Op::Relu: {
        const int x = nd.in[0];
        if (!ws_.varying[x]) break;
        Tensor& ax = ensure(ws_.adj, x, ws_.val[x].shape);
        const bool is_relu = nd.op == Op::Relu;
        const Tensor& vx = ws_.val[x];
        for (int64_t j = 0; j < ax.size(); ++j)
          if (!is_relu || vx.data[j] > 0.0) ax.data[j] += ac.data[j];
        if (atc) {
          Tensor& tx = ensure(ws_.adjtan, x, ws_.val[x].shape);
          for (int64_t j = 0; j < tx.size(); ++j)
            if (!is_relu || vx.data[j] > 0.0) tx.data[j] += atc->data[j];
        }
        break;
      }
      case Op::Im2col3x3: {
        const int x = nd.in[0];
        if (!ws_.varying[x]) break;
        const Tensor& vx = ws_.val[x];
        const int n = vx.shape[0], h = vx.shape[1], w = vx.shape[2],
                  c = vx.shape[3];
        Tensor& ax = ensure(ws_.adj, x, vx.shape);
        kernels::col2im3x3_add(n, h, w, c, ac.data.data(), ax.data.data());
        if (atc) {
          Tensor& tx = ensure(ws_.adjtan, x, vx.shape);
          kernels::col2im3x3_add(n, h, w, c, atc->data.data(), tx.data.data());
        }
        break;
      }
      case Op::Matmul: {
        const int a = nd.in[0], b = nd.in[1];
        const Tensor& va = ws_.val[a];
        const Tensor& vb = ws_.val[b];
        const MatDims d = matmul_dims(nd, va, vb);
        if (ws_.varying[a]) {
          Tensor& aa = ensure(ws_.adj, a, va.shape);
          matmul_adj_a(nd, d, ac, vb, aa);
          if (want_tan) {
            Tensor& ta = ensure(ws_.adjtan, a, va.shape);
            if (atc) matmul_adj_a(nd, d, *atc, vb, ta);
            if (ws_.varying[b]) matmul_adj_a(nd, d, ac, ws_.tan[b], ta);
          }
        }
        if (ws_.varying[b]) {
          Tensor& ab = ensure(ws_.adj, b, vb.shape);
          matmul_adj_b(nd, d, ac, va, ab);
          if (want_tan) {
            Tensor& tb = ensure(ws_.adjtan, b, vb.shape);
            if (atc) matmul_adj_b(nd, d, *atc, va, tb);
            if (ws_.varying[a]) matmul_adj_b(nd, d, ac, ws_.tan[a], tb);
          }
        }
        break;
      }
      case Op::BiasAdd: {
        const int x = nd.in[0], b = nd.in[1];
        const int64_t f = ws_.val[b].size();
        const int64_t rows = ws_.val[i].size() / f;
        if (ws_.varying[x]) {
          Tensor& ax = ensure(ws_.adj, x, ws_.val[x].shape);
          for (int64_t j = 0; j < ax.size(); ++j) ax.data[j] += ac.data[j];
          if (atc) {
            Tensor& tx = ensure(ws_.adjtan, x, ws_.val[x].shape);
            for (int64_t j = 0; j < tx.size(); ++j) tx.data[j] += atc->data[j];
          }
        }
        if (ws_.varying[b]) {
          Tensor& ab = ensure(ws_.adj, b, ws_.val[b].shape);
          for (int64_t j = 0; j < f; ++j) {
            double s = 0.0;
            for (int64_t r = 0; r < rows; ++r) s += ac.data[r * f + j];
            ab.data[j] += s;
          }
          if (atc) {
            Tensor& tb = ensure(ws_.adjtan, b, ws_.val[b].shape);
            for (int64_t j = 0; j < f; ++j) {
              double s = 0.0;
              for (int64_t r = 0; r < rows; ++r) s += atc->data[r * f + j];
              tb.data[j] += s;
            }
          }
        }
        break;
      }
      case Op::MaxPool2x2: {
        const int x = nd.in[0];
        if (!ws_.varying[x]) break;
        const auto& idx = ws_.pool_idx[i];
        Tensor& ax = ensure(ws_.adj, x, ws_.val[x].shape);
        for (size_t o = 0; o < idx.size(); ++o)
          ax.data[idx[o]] += ac.data[o];
        if (atc) {
          Tensor& tx = ensure(ws_.adjtan, x, ws_.val[x].shape);
          for (size_t o = 0; o < idx.size(); ++o)
            tx.data[idx[o]] += atc->data[o];
        }
        break;
      }
      case Op::SoftmaxXent: {
        const int z = nd.in[0];
        if (!ws_.varying[z]) break;
        const Tensor& p = ws_.cache[i];
        const int n = p.shape[0], c = p.shape[1];
        const double seed = ac.data[0] / n;
        Tensor& az = ensure(ws_.adj, z, ws_.val[z].shape);
        for (int r = 0; r < n; ++r) {
          const double* pr = p.data.data() + static_cast<int64_t>(r) * c;
          double* dst = az.data.data() + static_cast<int64_t>(r) * c;
          for (int j = 0; j < c; ++j) dst[j] += seed * pr[j];
          dst[batch_.labels[r]] -= seed;
        }
        if (want_tan) {
          Tensor& tz = ensure(ws_.adjtan, z, ws_.val[z].shape);
          const double tseed = atc ? atc->data[0] / n : 0.0;
          const Tensor& zt = ws_.tan[z];
          for (int r = 0; r < n; ++r) {
            const double* pr = p.data.data() + static_cast<int64_t>(r) * c;
            const double* tr = zt.data.data() + static_cast<int64_t>(r) * c;
            double* dst = tz.data.data() + static_cast<int64_t>(r) * c;
            double rowdot = 0.0;
            for (int j = 0; j < c; ++j) rowdot += pr[j] * tr[j];
            for (int j = 0; j < c; ++j) {
              const double pdot = pr[j] * (tr[j] - rowdot);
              dst[j] += tseed * pr[j] + seed * pdot;
            }
            dst[batch_.labels[r]] -= tseed;
          }
        }
        break;
      }
      case Op::QuadForm: {
        const int x = nd.in[0];
        if (!ws_.varying[x]) break;
        const Tensor& vx = ws_.val[x];
        const int dsz = static_cast<int>(vx.size());
        const Tensor& w = ws_.cache[i]; // A x from the forward pass
        const double seed = ac.data[0];
        Tensor& ax = ensure(ws_.adj, x, vx.shape);
        if (seed == 1.0) {
          for (int r = 0; r < dsz; ++r) ax.data[r] += w.data[r];
        } else {
          for (int r = 0; r < dsz; ++r) ax.data[r] += seed * w.data[r];
        }
        if (want_tan) {
          Tensor& tx = ensure(ws_.adjtan, x, vx.shape);
          // d/da of seed * A x(a): seed * A xdot + seeddot * A x
          Tensor aw = Tensor::zeros({dsz, 1});
          kernels::matmul(dsz, dsz, 1, nd.constant.data.data(),
                          ws_.tan[x].data.data(), aw.data.data());
          const double tseed = atc ? atc->data[0] : 0.0;
          if (seed == 1.0 && tseed == 0.0) {
            for (int r = 0; r < dsz; ++r) tx.data[r] += aw.data[r];
          } else {
            for (int r = 0; r < dsz; ++r)
              tx.data[r] += seed * aw.data[r] + tseed * w.data[r];
          }
        }
        break;
      }
      case Op::L2Penalty: {
        const double seed = ac.data[0] * nd.factor;
        const double tseed = atc ? atc->data[0] * nd.factor : 0.0;
        for (const int w : nd.in) {
          if (!ws_.varying[w]) continue;
          const Tensor& vw = ws_.val[w];
          Tensor& aw = ensure(ws_.adj, w, vw.shape);
          for (int64_t j = 0; j < vw.size(); ++j)
            aw.data[j] += seed * vw.data[j];
          if (want_tan) {
            Tensor& tw = ensure(ws_.adjtan, w, vw.shape);
            const Tensor& vt = ws_.tan[w];
            for (int64_t j = 0; j < vw.size(); ++j)
              tw.data[j] += (atc ? tseed * vw.data[j] : 0.0) + seed * vt.data[j];
          }
        }
        break;
      }
      case Op::AddScalar: {
        for (const int x : nd.in) {
          if (!ws_.varying[x]) continue;
          ensure(ws_.adj, x, ws_.val[x].shape).data[0] += ac.data[0];
          if (atc) ensure(ws_.adjtan, x, ws_.val[x].shape).data[0] += atc->data[0];
        }
        break;
      }
    }
  }

  size_t param_slot(int node_id) const {
    for (size_t p = 0; p < g_.param_nodes.size(); ++p)
      if (g_.param_nodes[p] == node_id) return p;
    throw ConfigError("unknown parameter node");
  }

  void mark_varying(int i) {
    for (const int j : g_.nodes[i].in)
      if (ws_.varying[j]) {
        ws_.varying[i] = 1;
        return;
      }
  }

  const Graph& g_;
  std::span<const double> params_;
  const Batch& batch_;
  Mode mode_;
  std::span<const double> vseed_;
  Workspace ws_;
};

void check_output_finite(const ParamVector& v, const char* what) {
  for (const double x : v)
    if (!std::isfinite(x))
      throw NumericalError(std::string("non-finite component in ") + what);
}

} // namespace

double forward_eval(const Graph& g, std::span<const double> params,
                    const Batch& batch) {
  Evaluator ev(g, params, batch, Mode::Loss, {});
  ev.forward(g.output, /*finite_checks=*/true);
  return ev.loss();
}

ParamVector grad(const Graph& g, std::span<const double> params,
                 const Batch& batch, double* loss_out) {
  Evaluator ev(g, params, batch, Mode::Grad, {});
  ev.forward(g.output, false);
  ev.backward();
  if (loss_out) *loss_out = ev.loss();
  ParamVector out = ev.grad_out();
  if (!std::isfinite(ev.loss()))
    throw NumericalError("non-finite loss in gradient evaluation");
  check_output_finite(out, "gradient");
  return out;
}

ParamVector hvp(const Graph& g, std::span<const double> params,
                const Batch& batch, std::span<const double> v) {
  Evaluator ev(g, params, batch, Mode::Hvp, v);
  ev.forward(g.output, false);
  ev.backward();
  ParamVector out = ev.hvp_out();
  check_output_finite(out, "hessian-vector product");
  return out;
}

Tensor forward_logits(const Graph& g, std::span<const double> params,
                      const Tensor& inputs) {
  if (g.logits < 0) throw ConfigError("graph has no logits node");
  Batch b;
  b.inputs = inputs;
  Evaluator ev(g, params, b, Mode::Loss, {});
  ev.forward(g.logits, false);
  return ev.value(g.logits);
}

} // namespace sharppath
