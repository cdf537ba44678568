#include <doctest.h>

#include <cmath>

#include "sharppath/linalg.hpp"
#include "sharppath/probes.hpp"

using namespace sharppath;

namespace {

// 1-D quadratic L = 0.5 lambda theta^2; gradient is deterministic, so the
// probe expectations collapse to closed forms.
Model quad1d(double lambda) {
  QuadraticSpec q;
  q.diag = {lambda};
  q.start = {1.0};
  return Model::build(build_quadratic(q));
}

Dataset tiny_data(int n = 8) {
  return synth_gaussian(2, n, 3, 1.0, 99);
}

} // namespace

TEST_CASE("loss_change_probe: closed form on the 1-d quadratic") {
  // lambda and eta sized so eta is near 1/lambda_max: lambda=160, eta=0.005.
  // delta(alpha) = 0.5 lambda theta^2 ((1 - alpha eta lambda)^2 - 1).
  const Model m = quad1d(160.0);
  const Dataset data = tiny_data();
  ProbeConfig cfg;
  cfg.alphas = {0.25, 0.5, 1.0, 2.0, 4.0};
  cfg.eta = 0.005;
  cfg.n_batches = 10;
  cfg.batch_size = 4;
  const ParamVector theta{1.0};
  const ParamVector e1{1.0};
  const auto deltas = loss_change_probe(m, theta, e1, cfg, data, data);
  REQUIRE(deltas.size() == 5);
  for (const auto& [alpha, delta] : deltas) {
    const double shrink = 1.0 - alpha * 0.005 * 160.0;
    const double want = 0.5 * 160.0 * (shrink * shrink - 1.0);
    CHECK(delta == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK(deltas[2].second == doctest::Approx(-76.8).epsilon(1e-9)); // alpha=1
  CHECK(deltas[4].second == doctest::Approx(307.2).epsilon(1e-9));  // alpha=4
}

TEST_CASE("expected_step_norm: deterministic projection and orthogonality") {
  // g = 3 theta at theta=1 with A=diag(3): <g, e> = 3, eta 0.1 -> 0.3
  const Model m = quad1d(3.0);
  const Dataset data = tiny_data();
  ProbeConfig cfg;
  cfg.eta = 0.1;
  cfg.n_batches = 4;
  cfg.batch_size = 4;
  CHECK(expected_step_norm(m, {1.0}, {1.0}, cfg, data) ==
        doctest::Approx(0.3).epsilon(1e-12));

  QuadraticSpec q;
  q.diag = {3.0, 0.0};
  q.start = {1.0, 0.0};
  const Model m2 = Model::build(build_quadratic(q));
  CHECK(expected_step_norm(m2, {1.0, 0.0}, {0.0, 1.0}, cfg, data) == 0.0);
}

TEST_CASE("expected_step_norm: matches enumeration over the sampled batches") {
  const Model m = Model::build(build_mlp(3, {6}, 2));
  SeededRng rng(3);
  const ParamVector params = init_params(m, rng);
  Dataset data = synth_gaussian(2, 40, 3, 1.0, 4);
  ProbeConfig cfg;
  cfg.eta = 0.05;
  cfg.n_batches = 6;
  cfg.batch_size = 8;
  cfg.seed = 11;
  ParamVector e(params.size(), 0.0);
  e[0] = 0.6;
  e[5] = 0.8;

  const double got = expected_step_norm(m, params, e, cfg, data);
  // brute force over the very same batch list
  const std::vector<Batch> batches = sample_probe_batches(data, cfg);
  double acc = 0.0;
  for (const Batch& b : batches) {
    const auto [loss, g] = loss_grad(m, params, b);
    (void)loss;
    acc += std::fabs(linalg::dot(g, e));
  }
  CHECK(got == doctest::Approx(cfg.eta * acc / 6.0).epsilon(1e-14));
}

TEST_CASE("surface_scan: exact parabola, vertex, mirror, k=0 anchoring") {
  const double lambda = 2.0;
  const Model m = quad1d(lambda);
  const Dataset data = tiny_data();
  const double theta = 1.0;
  const double step = 0.25;
  std::vector<double> grid;
  for (int k = -5; k <= 5; ++k) grid.push_back(k);

  const auto scan = surface_scan(m, {theta}, {1.0}, step, grid, data);
  REQUIRE(scan.size() == grid.size());
  // quadratic in k with minimum at k* = -theta/step
  for (const auto& [k, loss] : scan) {
    const double x = theta + k * step;
    CHECK(loss == doctest::Approx(0.5 * lambda * x * x).epsilon(1e-12));
  }
  // second difference recovers the curvature exactly
  const double curv = scan[7].second - 2.0 * scan[6].second + scan[5].second;
  CHECK(curv == doctest::Approx(lambda * step * step).epsilon(1e-9));
  // vertex k* = -theta/step = -4 lands on the grid with zero loss
  size_t arg = 0;
  for (size_t i = 1; i < scan.size(); ++i)
    if (scan[i].second < scan[arg].second) arg = i;
  CHECK(scan[arg].first == -4.0);
  CHECK(scan[arg].second == doctest::Approx(0.0).epsilon(1e-15));

  // scanning along -e mirrors k
  const auto mirror = surface_scan(m, {theta}, {-1.0}, step, grid, data);
  for (size_t i = 0; i < scan.size(); ++i)
    CHECK(mirror[i].second ==
          doctest::Approx(scan[scan.size() - 1 - i].second).epsilon(1e-12));

  // the k = 0 entry is the base loss bit for bit
  const double base = 0.5 * lambda * theta * theta;
  CHECK(scan[5].first == 0.0);
  CHECK(scan[5].second == base);
}

TEST_CASE("probe consistency: loss change equals scan at matching k") {
  // deterministic gradient (quadratic): alpha = 2 lines up with k = -2 when
  // the projection is positive.
  const Model m = quad1d(5.0);
  const Dataset data = tiny_data();
  ProbeConfig cfg;
  cfg.alphas = {2.0};
  cfg.eta = 0.01;
  cfg.n_batches = 2;
  cfg.batch_size = 4;
  const ParamVector theta{1.0};
  const ParamVector e1{1.0};
  const auto deltas = loss_change_probe(m, theta, e1, cfg, data, data);
  const double step = expected_step_norm(m, theta, e1, cfg, data);
  const auto scan =
      surface_scan(m, theta, e1, step, {-2.0, 0.0, 2.0}, data);
  const double base = scan[1].second;
  CHECK(deltas[0].second ==
        doctest::Approx(scan[0].second - base).epsilon(1e-10));
}

TEST_CASE("probes never mutate parameters and are deterministic per seed") {
  const Model m = Model::build(build_mlp(3, {4}, 2));
  SeededRng rng(7);
  const ParamVector params = init_params(m, rng);
  const ParamVector before = params;
  Dataset data = synth_gaussian(2, 30, 3, 1.0, 8);
  ProbeConfig cfg;
  cfg.seed = 21;
  cfg.n_batches = 3;
  cfg.batch_size = 8;
  ParamVector e(params.size(), 0.0);
  e[2] = 1.0;
  const ProbeResult r1 = run_probe(m, params, e, cfg, data, data, 5);
  const ProbeResult r2 = run_probe(m, params, e, cfg, data, data, 5);
  CHECK(params == before);
  CHECK(r1.alpha_deltas == r2.alpha_deltas);
  CHECK(r1.expected_step_norm == r2.expected_step_norm);
  CHECK(r1.scan == r2.scan);
  CHECK(r1.base_loss == r2.base_loss);

  // quadratic delta(alpha) passes through the origin as a polynomial:
  // alpha = 0 would change nothing
  ProbeConfig zero = cfg;
  zero.alphas = {0.0};
  const Model q = quad1d(2.0);
  const auto d0 = loss_change_probe(q, {1.0}, {1.0}, zero, data, data);
  CHECK(d0[0].second == 0.0);
}

TEST_CASE("quadratic delta(alpha) is a polynomial through the origin") {
  // on any quadratic, delta(alpha) = c1 alpha + c2 alpha^2 exactly; fit the
  // two coefficients from two alphas and check the rest of the grid
  const Model m = quad1d(7.0);
  const Dataset data = tiny_data();
  ProbeConfig cfg;
  cfg.alphas = {1.0, 2.0, 3.0, 4.0, 5.0};
  cfg.eta = 0.02;
  cfg.n_batches = 2;
  cfg.batch_size = 4;
  const auto deltas = loss_change_probe(m, {1.0}, {1.0}, cfg, data, data);
  const double d1 = deltas[0].second;
  const double d2 = deltas[1].second;
  const double c2 = (d2 - 2.0 * d1) / 2.0;
  const double c1 = d1 - c2;
  for (const auto& [alpha, delta] : deltas)
    CHECK(std::fabs(delta - (c1 * alpha + c2 * alpha * alpha)) < 1e-9);
}

TEST_CASE("probe config validation") {
  ProbeConfig bad;
  bad.alphas.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  ProbeConfig neg;
  neg.eta = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  ProbeConfig zerobatch;
  zerobatch.n_batches = 0;
  CHECK_THROWS_AS(zerobatch.validate(), ConfigError);
}
