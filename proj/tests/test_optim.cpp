#include <doctest.h>

#include <cmath>

#include "sharppath/linalg.hpp"
#include "sharppath/optim.hpp"

using namespace sharppath;

namespace {

OptimizerConfig cfg_of(Variant v, double eta, double mu = 0.0,
                       double gamma = 1.0, int k_top = 0) {
  OptimizerConfig c;
  c.variant = v;
  c.eta = eta;
  c.momentum = mu;
  c.gamma = gamma;
  c.k_top = k_top;
  return c;
}

OptimizerState state_with_basis(std::vector<std::vector<double>> basis) {
  OptimizerState s;
  s.frozen_e1 = basis.front();
  s.basis = std::move(basis);
  s.basis_step = 0;
  return s;
}

std::vector<double> random_vec(size_t n, SeededRng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

} // namespace

TEST_CASE("sgd_step: plain update and momentum recurrence") {
  OptimizerState s;
  const OptimizerConfig c = cfg_of(Variant::Sgd, 0.1);
  const ParamVector out = sgd_step({0.0, 0.0}, {1.0, 2.0}, c, s);
  CHECK(out[0] == doctest::Approx(-0.1));
  CHECK(out[1] == doctest::Approx(-0.2));

  // heavy ball: second step with the same gradient moves by -0.19
  OptimizerState sm;
  const OptimizerConfig cm = cfg_of(Variant::Sgd, 0.1, 0.9);
  ParamVector theta{0.0};
  theta = sgd_step(theta, {1.0}, cm, sm);
  CHECK(theta[0] == doctest::Approx(-0.1));
  const ParamVector theta2 = sgd_step(theta, {1.0}, cm, sm);
  CHECK(theta2[0] - theta[0] == doctest::Approx(-0.19));
}

TEST_CASE("sgd_step: 1-d quadratic contraction and divergence") {
  // on L = 0.5 lambda theta^2 the iterate scales by (1 - eta lambda)
  const double lambda = 4.0;
  for (const double eta : {0.1, 0.4, 0.6}) { // eta < 2/lambda = 0.5 contracts
    OptimizerState s;
    const OptimizerConfig c = cfg_of(Variant::Sgd, eta);
    double theta = 1.0;
    for (int i = 0; i < 5; ++i) {
      const double prev = std::fabs(theta);
      theta = sgd_step({theta}, {lambda * theta}, c, s)[0];
      if (eta < 2.0 / lambda)
        CHECK(std::fabs(theta) < prev);
      else
        CHECK(std::fabs(theta) > prev);
    }
  }
}

TEST_CASE("nsgd_step: gamma=1 is bitwise sgd, algebra example, newton link") {
  SeededRng rng(31);
  const size_t d = 20;
  const ParamVector theta = random_vec(d, rng);
  const ParamVector g = random_vec(d, rng);
  std::vector<double> e1(d, 0.0);
  e1[3] = 1.0;

  OptimizerState s1 = state_with_basis({e1});
  OptimizerState s2;
  const ParamVector a =
      nsgd_step(theta, g, cfg_of(Variant::Nsgd, 0.05, 0.0, 1.0, 1), s1);
  const ParamVector b = sgd_step(theta, g, cfg_of(Variant::Sgd, 0.05), s2);
  CHECK(a == b);

  // g=(1,1), e1=(1,0), eta=0.1, gamma=0.1: delta = (-0.01, -0.1)
  OptimizerState s3 = state_with_basis({{1.0, 0.0}});
  const ParamVector out = nsgd_step({0.0, 0.0}, {1.0, 1.0},
                                    cfg_of(Variant::Nsgd, 0.1, 0.0, 0.1, 1), s3);
  CHECK(out[0] == doctest::Approx(-0.01).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(-0.1).epsilon(1e-12));

  OptimizerState s4;
  CHECK_THROWS_AS(
      nsgd_step({0.0}, {1.0}, cfg_of(Variant::Nsgd, 0.1, 0.0, 0.5, 1), s4),
      StateError);
}

TEST_CASE("nsgd_step: equals newton when gamma inverts the top curvature") {
  // H = diag(100 x5, 1, 1), lambda = 0, gamma = 0.01, K = 5
  const size_t d = 7;
  HessianOperand h;
  h.diag = {100, 100, 100, 100, 100, 1, 1};
  std::vector<std::vector<double>> basis;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> e(d, 0.0);
    e[static_cast<size_t>(i)] = 1.0;
    basis.push_back(std::move(e));
  }
  SeededRng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector theta = random_vec(d, rng);
    const ParamVector g = random_vec(d, rng);
    OptimizerState s = state_with_basis(basis);
    const ParamVector nudged =
        nsgd_step(theta, g, cfg_of(Variant::Nsgd, 0.3, 0.0, 0.01, 5), s);
    const ParamVector newton = newton_step(theta, g, h, 0.3, 0.0);
    for (size_t i = 0; i < d; ++i)
      CHECK(std::fabs(nudged[i] - newton[i]) < 1e-12);
  }
}

TEST_CASE("variant_step: projections and their decomposition") {
  SeededRng rng(41);
  const size_t d = 16;
  std::vector<double> e1 = random_vec(d, rng);
  linalg::scal(1.0 / linalg::norm2(e1), e1);

  const ParamVector theta = random_vec(d, rng);
  const ParamVector g = random_vec(d, rng);
  const double eta = 0.07;

  OptimizerState st = state_with_basis({e1});
  const ParamVector top = variant_step(theta, g, cfg_of(Variant::SgdTop, eta, 0, 1, 1), st);
  OptimizerState sn = state_with_basis({e1});
  const ParamVector no_top =
      variant_step(theta, g, cfg_of(Variant::SgdNoTop, eta, 0, 1, 1), sn);
  OptimizerState ss;
  const ParamVector plain = sgd_step(theta, g, cfg_of(Variant::Sgd, eta), ss);

  // sgd_top moves along e1 only
  ParamVector dtop(d);
  for (size_t i = 0; i < d; ++i) dtop[i] = top[i] - theta[i];
  const double coef = linalg::dot(dtop, e1);
  for (size_t i = 0; i < d; ++i)
    CHECK(dtop[i] == doctest::Approx(coef * e1[i]).epsilon(1e-10));

  // sgd_no_top is orthogonal to e1
  ParamVector dnt(d);
  for (size_t i = 0; i < d; ++i) dnt[i] = no_top[i] - theta[i];
  CHECK(std::fabs(linalg::dot(dnt, e1)) < 1e-12);

  // the two projections recompose the sgd step
  for (size_t i = 0; i < d; ++i)
    CHECK(dtop[i] + dnt[i] ==
          doctest::Approx(plain[i] - theta[i]).epsilon(1e-12));

  // constant-top uses the frozen direction even after the basis moves
  OptimizerState sc = state_with_basis({e1});
  std::vector<double> other = random_vec(d, rng);
  linalg::scal(1.0 / linalg::norm2(other), other);
  sc.basis = {other};
  const ParamVector frozen =
      variant_step(theta, g, cfg_of(Variant::SgdConstantTop, eta, 0, 1, 1), sc);
  ParamVector dfr(d);
  for (size_t i = 0; i < d; ++i) dfr[i] = frozen[i] - theta[i];
  const double c1 = linalg::dot(dfr, e1);
  for (size_t i = 0; i < d; ++i)
    CHECK(dfr[i] == doctest::Approx(c1 * e1[i]).epsilon(1e-10));
}

TEST_CASE("nsgd invariants: out-of-span component untouched, gamma scaling") {
  SeededRng rng(43);
  const size_t d = 24;
  // orthonormal 3-vector basis via Gram-Schmidt
  std::vector<std::vector<double>> basis;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> v = random_vec(d, rng);
    for (const auto& q : basis) linalg::axpy(-linalg::dot(v, q), q, v);
    linalg::scal(1.0 / linalg::norm2(v), v);
    basis.push_back(std::move(v));
  }
  const ParamVector theta = random_vec(d, rng);
  const ParamVector g = random_vec(d, rng);
  const double eta = 0.05;

  OptimizerState s0;
  const ParamVector sgd_out = sgd_step(theta, g, cfg_of(Variant::Sgd, eta), s0);
  std::vector<ParamVector> nsgd_out;
  for (const double gamma : {0.25, 0.5}) {
    OptimizerState s = state_with_basis(basis);
    nsgd_out.push_back(
        nsgd_step(theta, g, cfg_of(Variant::Nsgd, eta, 0, gamma, 3), s));
  }
  // orthogonal directions: nsgd and sgd agree
  std::vector<double> w = random_vec(d, rng);
  for (const auto& q : basis) linalg::axpy(-linalg::dot(w, q), q, w);
  linalg::scal(1.0 / linalg::norm2(w), w);
  for (const auto& out : nsgd_out) {
    double diff = 0.0;
    for (size_t i = 0; i < d; ++i) diff += (out[i] - sgd_out[i]) * w[i];
    CHECK(std::fabs(diff) < 1e-12);
  }
  // in-span update component scales linearly in gamma
  for (const auto& e : basis) {
    double d25 = 0.0, d50 = 0.0;
    for (size_t i = 0; i < d; ++i) {
      d25 += (nsgd_out[0][i] - theta[i]) * e[i];
      d50 += (nsgd_out[1][i] - theta[i]) * e[i];
    }
    CHECK(d50 == doctest::Approx(2.0 * d25).epsilon(1e-10));
  }
}

TEST_CASE("nsgd with momentum: gamma=1 equals sgd with momentum bitwise") {
  SeededRng rng(47);
  const size_t d = 10;
  const std::vector<double> e1 = [&] {
    std::vector<double> v = random_vec(d, rng);
    linalg::scal(1.0 / linalg::norm2(v), v);
    return v;
  }();
  ParamVector ta(d, 0.0), tb(d, 0.0);
  OptimizerState sa = state_with_basis({e1});
  OptimizerState sb;
  for (int step = 0; step < 4; ++step) {
    const ParamVector g = random_vec(d, rng);
    const ParamVector ga = g;
    ta = nsgd_step(ta, ga, cfg_of(Variant::Nsgd, 0.1, 0.9, 1.0, 1), sa);
    tb = sgd_step(tb, ga, cfg_of(Variant::Sgd, 0.1, 0.9), sb);
    CHECK(ta == tb);
  }
}

TEST_CASE("newton_step: identity, damping limit, singularity") {
  HessianOperand ident;
  ident.diag = {1.0, 1.0, 1.0};
  const ParamVector out =
      newton_step({1.0, 2.0, 3.0}, {0.5, -0.5, 1.0}, ident, 0.1, 0.0);
  CHECK(out[0] == doctest::Approx(1.0 - 0.05));
  CHECK(out[1] == doctest::Approx(2.0 + 0.05));
  CHECK(out[2] == doctest::Approx(3.0 - 0.1));

  // step norm shrinks monotonically to zero as damping grows
  HessianOperand h;
  h.diag = {3.0, 1.0};
  double prev = 1e300;
  for (const double lam : {0.0, 1.0, 10.0, 100.0, 1e4}) {
    const ParamVector stepped = newton_step({0.0, 0.0}, {1.0, 2.0}, h, 0.1, lam);
    const double norm = linalg::norm2(stepped);
    CHECK(norm < prev);
    prev = norm;
  }
  CHECK(prev < 1e-4);

  HessianOperand sing;
  sing.diag = {1.0, 0.0};
  CHECK_THROWS_AS(newton_step({0.0, 0.0}, {1.0, 1.0}, sing, 0.1, 0.0),
                  SingularityError);
  HessianOperand dense_sing;
  dense_sing.dense = {1.0, 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(newton_step({0.0, 0.0}, {1.0, 1.0}, dense_sing, 0.1, 0.0),
                  SingularityError);

  // dense solve agrees with the diagonal path on a diagonal matrix
  HessianOperand dd;
  dd.dense = {2.0, 0.0, 0.0, 5.0};
  HessianOperand dg;
  dg.diag = {2.0, 5.0};
  const ParamVector xd = newton_step({1.0, 1.0}, {1.0, 1.0}, dd, 1.0, 0.5);
  const ParamVector xg = newton_step({1.0, 1.0}, {1.0, 1.0}, dg, 1.0, 0.5);
  CHECK(xd[0] == doctest::Approx(xg[0]).epsilon(1e-14));
  CHECK(xd[1] == doctest::Approx(xg[1]).epsilon(1e-14));
}

TEST_CASE("schedule_lr: plateau decay and staged boundaries") {
  LrSchedule plateau;
  plateau.kind = ScheduleKind::Plateau;
  plateau.base_eta = 0.01;
  plateau.patience = 100;
  plateau.factor = 10.0;

  // strictly improving history never decays
  std::vector<double> improving;
  for (int i = 0; i < 300; ++i) improving.push_back(1.0 / (i + 1));
  CHECK(schedule_lr(plateau, improving, 300) == doctest::Approx(0.01));

  // 100 non-improving epochs decay once by 10
  std::vector<double> stuck{0.5};
  for (int i = 0; i < 100; ++i) stuck.push_back(0.6);
  CHECK(schedule_lr(plateau, stuck, 101) == doctest::Approx(0.001));

  // monotone non-increasing along any prefix
  SeededRng rng(53);
  std::vector<double> noisy;
  double prev_eta = plateau.base_eta;
  for (int i = 0; i < 400; ++i) {
    noisy.push_back(rng.uniform());
    const double eta = schedule_lr(plateau, noisy, i + 1);
    CHECK(eta <= prev_eta + 1e-18);
    prev_eta = eta;
  }

  LrSchedule staged;
  staged.kind = ScheduleKind::Staged;
  staged.base_eta = 0.1;
  staged.stage_length = 10;
  staged.stage_etas[0] = 0.1;
  staged.stage_etas[1] = 0.01;
  CHECK(schedule_lr(staged, {}, 9) == doctest::Approx(0.1));
  CHECK(schedule_lr(staged, {}, 10) == doctest::Approx(0.01));
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig bad = cfg_of(Variant::Nsgd, 0.1, 0.0, 0.5, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  OptimizerConfig neg = cfg_of(Variant::Sgd, -0.1);
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  OptimizerConfig mu1 = cfg_of(Variant::Sgd, 0.1, 1.0);
  CHECK_THROWS_AS(mu1.validate(), ConfigError);
}

TEST_CASE("non-finite update raises NumericalError") {
  OptimizerState s;
  const OptimizerConfig c = cfg_of(Variant::Sgd, 1e308);
  CHECK_THROWS_AS(sgd_step({1.0}, {1e308}, c, s), NumericalError);
}
