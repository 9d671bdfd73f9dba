#include <cmath>

#include "doctest.h"
#include "zno/objective.hpp"
#include "zno/oracle.hpp"
#include "zno/rng.hpp"

using namespace zno;

namespace {

Tensor3 randn(int B, int T, int C, std::uint64_t seed) {
  Tensor3 x(B, T, C);
  RngStream s(seed, "obj");
  for (double& v : x.v) v = s.normal();
  return x;
}

}  // namespace

TEST_CASE("rel_l2 basics") {
  Tensor3 y = randn(3, 8, 2, 1);
  CHECK(rel_l2(y, y) == 0.0);

  Tensor3 zeros(3, 8, 2);
  CHECK(rel_l2(zeros, y) == 1.0);

  Tensor3 twice = y;
  for (double& v : twice.v) v *= 2.0;
  CHECK(rel_l2(twice, y) == doctest::Approx(1.0).epsilon(1e-15));

  // scale invariance: bit-exact for power-of-two scales, where the
  // floating-point scaling itself is exact
  Tensor3 pred = randn(3, 8, 2, 2);
  double base = rel_l2(pred, y);
  Tensor3 sp = pred, sy = y;
  for (double& v : sp.v) v *= -4.0;
  for (double& v : sy.v) v *= -4.0;
  CHECK(rel_l2(sp, sy) == base);
  Tensor3 gp = pred, gy = y;
  for (double& v : gp.v) v *= 3.7;
  for (double& v : gy.v) v *= 3.7;
  CHECK(rel_l2(gp, gy) == doctest::Approx(base).epsilon(1e-14));

  Tensor3 zero_target(2, 4, 1);
  Tensor3 p2(2, 4, 1);
  CHECK_THROWS_AS(rel_l2(p2, zero_target), std::domain_error);
}

TEST_CASE("suffix loss windows") {
  Tensor3 y = randn(2, 8, 1, 3);
  Tensor3 pred = y;
  // prefix mismatch only: suffix loss stays zero (window is indices 2..7)
  pred.at(0, 0, 0) += 10.0;
  pred.at(1, 1, 0) -= 3.0;
  CHECK(suffix_loss(pred, y) == 0.0);
  CHECK(rel_l2(pred, y) > 0.0);

  pred.at(0, 2, 0) += 1.0;
  CHECK(suffix_loss(pred, y) > 0.0);

  Tensor3 tiny = randn(1, 3, 1, 4);
  CHECK_THROWS_AS(suffix_loss(tiny, tiny), std::invalid_argument);

  // window start at floor(T/4)
  Tensor3 big = randn(1, 2048, 1, 5);
  Tensor3 bp = big;
  for (int t = 0; t < 512; ++t) bp.at(0, t, 0) += 100.0;
  CHECK(suffix_loss(bp, big) == 0.0);
  bp.at(0, 512, 0) += 1.0;
  CHECK(suffix_loss(bp, big) > 0.0);
}

TEST_CASE("suffix gradient ignores the prefix") {
  Tensor3 y = randn(1, 8, 1, 6);
  Tensor3 pred = randn(1, 8, 1, 7);
  Tensor3 grad(1, 8, 1);
  suffix_loss_backward(pred, y, 1.0, grad);
  for (int t = 0; t < 2; ++t) CHECK(grad.at(0, t, 0) == 0.0);
  bool any = false;
  for (int t = 2; t < 8; ++t) {
    if (grad.at(0, t, 0) != 0.0) any = true;
  }
  CHECK(any);
}

TEST_CASE("pole safety: value, zero iff inside, ceiling case") {
  ZnoConfig cfg;
  cfg.w = 3;
  cfg.L = 2;
  cfg.r = 2;
  cfg.K = 2;
  cfg.F = 0;
  cfg.d_u = 2;
  cfg.d_y = 1;
  cfg.proj_hidden = 4;
  ZnoModel model(cfg);
  model.init_params(3);

  // push every pole to the ceiling: hinge = (0.999 - 0.95)^2 per slot
  for (RationalLayer& layer : model.layers()) {
    for (double& x : layer.rho_tilde()) x = 60.0;
  }
  CHECK(pole_safety(model, 0.95) == doctest::Approx(2.401e-3).epsilon(1e-4));

  // all radii at 0.9: hinge inactive
  for (RationalLayer& layer : model.layers()) {
    for (double& x : layer.rho_tilde()) x = std::log((0.9 / kRhoMax) / (1.0 - 0.9 / kRhoMax));
  }
  CHECK(pole_safety(model, 0.95) == 0.0);

  // strictly above rho_safe somewhere -> strictly positive
  model.layers()[0].rho_tilde()[0] = std::log((0.97 / kRhoMax) / (1.0 - 0.97 / kRhoMax));
  CHECK(pole_safety(model, 0.95) > 0.0);
}

TEST_CASE("total objective: toggles and composition") {
  ZnoConfig cfg;
  cfg.w = 3;
  cfg.L = 2;
  cfg.r = 2;
  cfg.K = 3;
  cfg.F = 2;
  cfg.d_u = 2;
  cfg.d_y = 1;
  cfg.proj_hidden = 6;
  ZnoModel model(cfg);
  model.init_params(11);

  TrajectoryBatch batch;
  batch.inputs = randn(2, 16, 2, 21);
  batch.targets = randn(2, 16, 1, 22);

  LossConfig all;
  LossConfig off;
  off.suffix_enabled = false;
  off.pole_reg_enabled = false;

  model.params().zero_grads();
  ObjectiveValue v_off = total_objective(model, batch, off);
  CHECK(v_off.total == v_off.data);
  CHECK(v_off.suffix == 0.0);
  CHECK(v_off.pole == 0.0);

  model.params().zero_grads();
  ObjectiveValue v_all = total_objective(model, batch, all);
  CHECK(v_all.total == doctest::Approx(v_all.data + 1e-3 * v_all.pole +
                                        1e-2 * v_all.suffix).epsilon(1e-15));
  CHECK(v_all.data == v_off.data);

  // perfect prediction with poles inside the safe disk scores zero
  Tensor3 pred = model.forward(batch.inputs);
  TrajectoryBatch perfect;
  perfect.inputs = batch.inputs;
  perfect.targets = pred;
  model.params().zero_grads();
  ObjectiveValue v_perfect = total_objective(model, perfect, all);
  CHECK(v_perfect.data == 0.0);
  CHECK(v_perfect.suffix == 0.0);
  CHECK(v_perfect.pole == 0.0);
  CHECK(v_perfect.total == 0.0);
}

TEST_CASE("full objective gradcheck on a tiny model, active hinge") {
  // rho_safe pulled down so the pole-safety hinge contributes gradient; the
  // step is the calibrated 5e-5 (1e-6 bottoms out in central-difference
  // roundoff on coordinates whose gradient is ~1e-6 against an O(1) loss)
  ZnoConfig cfg;
  cfg.w = 3;
  cfg.L = 2;
  cfg.r = 2;
  cfg.K = 3;
  cfg.F = 2;
  cfg.d_u = 2;
  cfg.d_y = 1;
  cfg.proj_hidden = 6;
  ZnoModel model(cfg);
  model.init_params(13);

  TrajectoryBatch batch;
  batch.inputs = randn(2, 16, 2, 31);
  batch.targets = randn(2, 16, 1, 32);

  LossConfig lc;
  lc.rho_safe = 0.5;  // activate the hinge for every pole

  auto value = [&]() {
    Tensor3 pred = model.forward(batch.inputs);
    double data = rel_l2(pred, batch.targets);
    double suf = suffix_loss(pred, batch.targets);
    double pole = pole_safety(model, lc.rho_safe);
    return data + lc.lambda_pole * pole + lc.lambda_suf * suf;
  };
  auto grad = [&]() {
    model.params().zero_grads();
    total_objective(model, batch, lc);
  };
  GradCheckResult res = gradcheck(value, grad, model.params(), 5e-5);
  CHECK(res.max_rel_err < 3e-6);
}

TEST_CASE("full objective gradcheck: pinned five-fixture suite") {
  for (const ObjectiveCheck& c : run_objective_gradchecks()) {
    INFO("w=", c.w, " K=", c.K, " F=", c.F, " d_u=", c.d_u, " seed=", c.seed);
    CHECK(c.max_rel_err < 1e-6);
  }
}
