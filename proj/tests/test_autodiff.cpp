#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sharppath/data.hpp"
#include "sharppath/kernels.hpp"
#include "sharppath/linalg.hpp"
#include "sharppath/model.hpp"

using namespace sharppath;

namespace {

Batch dummy_batch() {
  Batch b;
  b.inputs = Tensor({1, 1}, {0.0});
  b.labels = {0};
  return b;
}

Model quadratic_model(std::vector<double> diag, std::vector<double> start) {
  QuadraticSpec q;
  q.diag = std::move(diag);
  q.start = std::move(start);
  return Model::build(build_quadratic(std::move(q)));
}

Batch random_batch(const Model& m, int n, uint64_t seed) {
  SeededRng rng(seed);
  Batch b;
  b.inputs = Tensor::zeros({n, m.spec.input_dim});
  for (double& x : b.inputs.data) x = rng.normal();
  b.labels.resize(static_cast<size_t>(n));
  for (int& y : b.labels)
    y = static_cast<int>(rng.below(static_cast<uint64_t>(m.spec.classes)));
  return b;
}

} // namespace

TEST_CASE("forward_eval: explicit quadratic") {
  // L = 0.5 theta' diag(2,6) theta at theta=(1,1) is 1 + 3.
  const Model m = quadratic_model({2.0, 6.0}, {1.0, 1.0});
  CHECK(forward_eval(m.graph, ParamVector{1.0, 1.0}, dummy_batch()) == 4.0);
}

TEST_CASE("forward_eval: zeroed final layer gives uniform softmax") {
  const Model m = Model::build(build_mlp(4, {8}, 10));
  SeededRng rng(1);
  ParamVector params = init_params(m, rng);
  // zero the last weight matrix and bias (the final two leaves)
  const size_t nleaves = m.graph.param_nodes.size();
  const int64_t from = m.graph.param_offsets[nleaves - 2];
  for (int64_t i = from; i < m.dim(); ++i) params[static_cast<size_t>(i)] = 0.0;
  const Batch b = random_batch(m, 16, 2);
  CHECK(forward_eval(m.graph, params, b) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("forward_eval: cnn forward matches a straight-line oracle") {
  const ModelSpec spec = build_scaled_cnn(8, 8, 2, 4, {4, 4, 6, 6}, 12);
  const Model m = Model::build(spec);
  SeededRng rng(0);
  const ParamVector params = init_params(m, rng);
  Dataset data = synth_gaussian(4, 10, 8 * 8 * 2, 0.8, 0);
  data = reshape_images(std::move(data), 8, 8, 2);
  const Batch b = gather_range(data, 0, 10);
  const double got = forward_eval(m.graph, params, b);
  const double want = oracles::straightline_cnn_loss(spec, params, b);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("grad: norm-squared loss") {
  // L = ||theta||^2 is the quadratic with A = 2I; grad (2, 4) at (1, 2).
  const Model m = quadratic_model({2.0, 2.0}, {1.0, 2.0});
  const ParamVector g = grad(m.graph, ParamVector{1.0, 2.0}, dummy_batch());
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 4.0);
}

TEST_CASE("grad: softmax minus one-hot at uniform logits") {
  const Model m = Model::build(build_mlp(3, {}, 10));
  // all-zero parameters give uniform logits for any input
  ParamVector params(static_cast<size_t>(m.dim()), 0.0);
  Batch b;
  b.inputs = Tensor({1, 3}, {0.3, -0.2, 0.9});
  b.labels = {0};
  const ParamVector g = grad(m.graph, params, b);
  // The final bias participates in the logits additively, so its gradient
  // is exactly softmax minus the one-hot label.
  const size_t nleaves = m.graph.param_nodes.size();
  const int64_t bias_off = m.graph.param_offsets[nleaves - 1];
  CHECK(g[static_cast<size_t>(bias_off)] ==
        doctest::Approx(0.1 - 1.0).epsilon(1e-12));
  for (int j = 1; j < 10; ++j)
    CHECK(g[static_cast<size_t>(bias_off + j)] ==
          doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("grad: mlp 2-8-2 matches central finite differences") {
  const Model m = Model::build(build_mlp(2, {8}, 2));
  SeededRng rng(3);
  const ParamVector params = init_params(m, rng);
  const Batch b = random_batch(m, 12, 4);
  const ParamVector g = grad(m.graph, params, b);
  const auto loss_at = [&](const std::vector<double>& p) {
    return forward_eval(m.graph, p, b);
  };
  const std::vector<double> fd = oracles::central_fd_grad(loss_at, params, 1e-5);
  CHECK(oracles::max_rel_err(g, fd) < 1e-6);
}

TEST_CASE("hvp: explicit quadratic and linear losses") {
  const Model m = quadratic_model({2.0, 6.0}, {1.0, 1.0});
  const ParamVector r =
      hvp(m.graph, ParamVector{1.0, 1.0}, dummy_batch(), ParamVector{1.0, 1.0});
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 6.0);

  // L = c . theta built directly on the graph: Hessian is zero.
  GraphBuilder gb;
  const int theta = gb.param({3, 1}, false);
  const int c = gb.constant(Tensor({1, 3}, {1.0, -2.0, 0.5}));
  const Graph g = gb.finish(gb.matmul(c, theta));
  const ParamVector hv =
      hvp(g, ParamVector{4.0, 5.0, 6.0}, dummy_batch(), ParamVector{1.0, 2.0, 3.0});
  for (const double x : hv) CHECK(x == 0.0);
}

TEST_CASE("hvp: mlp 2-8-2 matches finite differences of the gradient") {
  const Model m = Model::build(build_mlp(2, {8}, 2));
  SeededRng rng(5);
  const ParamVector params = init_params(m, rng);
  const Batch b = random_batch(m, 12, 6);
  SeededRng vr(7);
  ParamVector v(params.size());
  for (double& x : v) x = vr.normal();
  const ParamVector got = hvp(m.graph, params, b, v);
  const auto grad_at = [&](const std::vector<double>& p) {
    return grad(m.graph, p, b);
  };
  const std::vector<double> fd = oracles::central_fd_hvp(grad_at, params, v, 1e-4);
  CHECK(oracles::max_rel_err(got, fd) < 1e-5);
}

TEST_CASE("hvp properties: linearity and symmetry") {
  const Model m = Model::build(build_mlp(3, {6}, 3));
  SeededRng rng(8);
  const ParamVector params = init_params(m, rng);
  const Batch b = random_batch(m, 8, 9);
  SeededRng vr(10);
  const size_t d = params.size();
  for (int trial = 0; trial < 5; ++trial) {
    ParamVector u(d), v(d);
    for (double& x : u) x = vr.normal();
    for (double& x : v) x = vr.normal();
    const double a = 0.7, c = -1.3;

    const ParamVector hu = hvp(m.graph, params, b, u);
    const ParamVector hv = hvp(m.graph, params, b, v);
    ParamVector combo(d);
    for (size_t i = 0; i < d; ++i) combo[i] = a * u[i] + c * v[i];
    const ParamVector hc = hvp(m.graph, params, b, combo);
    double scale = 0.0, worst = 0.0;
    for (size_t i = 0; i < d; ++i) {
      const double want = a * hu[i] + c * hv[i];
      scale = std::max(scale, std::fabs(want));
      worst = std::max(worst, std::fabs(hc[i] - want));
    }
    CHECK(worst <= 1e-10 * std::max(1.0, scale));

    const double uhv = linalg::dot(u, hv);
    const double vhu = linalg::dot(v, hu);
    CHECK(std::fabs(uhv - vhu) <=
          1e-10 * std::max(1.0, std::max(std::fabs(uhv), std::fabs(vhu))));
  }
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  const Model m = Model::build(build_mlp(4, {8}, 3));
  SeededRng rng(20);
  const ParamVector params = init_params(m, rng);
  const Batch b = random_batch(m, 16, 21);
  ParamVector v(params.size(), 0.25);

  const double l1 = forward_eval(m.graph, params, b);
  const double l2 = forward_eval(m.graph, params, b);
  CHECK(l1 == l2);
  const ParamVector g1 = grad(m.graph, params, b);
  kernels::set_parallel(false);
  const ParamVector g2 = grad(m.graph, params, b);
  kernels::set_parallel(true);
  CHECK(g1 == g2);
  const ParamVector h1 = hvp(m.graph, params, b, v);
  const ParamVector h2 = hvp(m.graph, params, b, v);
  CHECK(h1 == h2);
}

TEST_CASE("forward_eval flags the first non-finite node") {
  const Model m = quadratic_model({1.0, 1.0}, {1.0, 1.0});
  const ParamVector huge{1e200, 1e200};
  CHECK_THROWS_WITH_AS(forward_eval(m.graph, huge, dummy_batch()),
                       doctest::Contains("node"), NumericalError);
}

TEST_CASE("graph invariants: scalar output and topological order") {
  GraphBuilder gb;
  const int p = gb.param({2, 1}, false);
  const int c = gb.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  const int u = gb.matmul(c, p);
  // non-scalar output is rejected at evaluation
  const Graph g = gb.finish(u);
  CHECK_THROWS_AS(forward_eval(g, ParamVector{1.0, 2.0}, dummy_batch()),
                  ConfigError);
}
