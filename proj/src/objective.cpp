#include "zno/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace zno {

void LossConfig::validate() const {
  if (!(rho_safe > 0.0 && rho_safe < kRhoMax)) {
    throw std::invalid_argument("LossConfig: require 0 < rho_safe < rho_max");
  }
  if (lambda_pole < 0.0 || lambda_suf < 0.0) {
    throw std::invalid_argument("LossConfig: negative weight");
  }
}

namespace {

void check_shapes(const Tensor3& pred, const Tensor3& target) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("loss: pred/target shape mismatch");
  }
}

// windowed relative error over time indices [from, T)
double windowed_rel_l2(const Tensor3& pred, const Tensor3& target, int from) {
  check_shapes(pred, target);
  const int B = pred.B, T = pred.T, C = pred.C;
  double sum = 0.0;
  for (int b = 0; b < B; ++b) {
    double nd = 0.0, ny = 0.0;
    for (int t = from; t < T; ++t) {
      const double* p = pred.row(b, t);
      const double* y = target.row(b, t);
      for (int c = 0; c < C; ++c) {
        double d = p[c] - y[c];
        nd += d * d;
        ny += y[c] * y[c];
      }
    }
    if (ny == 0.0) {
      throw std::domain_error("rel_l2: zero-norm target in sample " + std::to_string(b));
    }
    sum += std::sqrt(nd) / std::sqrt(ny);
  }
  return sum / static_cast<double>(B);
}

void windowed_rel_l2_backward(const Tensor3& pred, const Tensor3& target,
                              int from, double scale, Tensor3& grad) {
  check_shapes(pred, target);
  if (!grad.same_shape(pred)) throw std::invalid_argument("loss grad shape mismatch");
  const int B = pred.B, T = pred.T, C = pred.C;
  for (int b = 0; b < B; ++b) {
    double nd = 0.0, ny = 0.0;
    for (int t = from; t < T; ++t) {
      const double* p = pred.row(b, t);
      const double* y = target.row(b, t);
      for (int c = 0; c < C; ++c) {
        double d = p[c] - y[c];
        nd += d * d;
        ny += y[c] * y[c];
      }
    }
    if (ny == 0.0) {
      throw std::domain_error("rel_l2: zero-norm target in sample " + std::to_string(b));
    }
    nd = std::sqrt(nd);
    ny = std::sqrt(ny);
    if (nd == 0.0) continue;  // subgradient 0 at the exact minimum
    double coeff = scale / (static_cast<double>(B) * nd * ny);
    for (int t = from; t < T; ++t) {
      const double* p = pred.row(b, t);
      const double* y = target.row(b, t);
      double* g = grad.row(b, t);
      for (int c = 0; c < C; ++c) g[c] += coeff * (p[c] - y[c]);
    }
  }
}

}  // namespace

double rel_l2(const Tensor3& pred, const Tensor3& target) {
  return windowed_rel_l2(pred, target, 0);
}

void rel_l2_backward(const Tensor3& pred, const Tensor3& target, double scale,
                     Tensor3& grad) {
  windowed_rel_l2_backward(pred, target, 0, scale, grad);
}

double suffix_loss(const Tensor3& pred, const Tensor3& target) {
  if (pred.T < 4) throw std::invalid_argument("suffix_loss: T must be >= 4");
  return windowed_rel_l2(pred, target, pred.T / 4);
}

void suffix_loss_backward(const Tensor3& pred, const Tensor3& target,
                          double scale, Tensor3& grad) {
  if (pred.T < 4) throw std::invalid_argument("suffix_loss: T must be >= 4");
  windowed_rel_l2_backward(pred, target, pred.T / 4, scale, grad);
}

double pole_safety(const ZnoModel& model, double rho_safe) {
  const ZnoConfig& cfg = model.config();
  double sum = 0.0;
  for (const RationalLayer& layer : model.layers()) {
    sum += layer.pole_safety_sum(rho_safe);
  }
  return sum / (static_cast<double>(cfg.L) * cfg.r * cfg.K);
}

ObjectiveValue total_objective(ZnoModel& model, const TrajectoryBatch& batch,
                               const LossConfig& cfg) {
  cfg.validate();
  if (batch.B() < 1) throw std::invalid_argument("total_objective: empty batch");
  ForwardTrace trace;
  Tensor3 pred = model.forward(batch.inputs, &trace);

  ObjectiveValue v;
  v.data = rel_l2(pred, batch.targets);
  Tensor3 out_grad(pred.B, pred.T, pred.C);
  rel_l2_backward(pred, batch.targets, 1.0, out_grad);
  if (cfg.suffix_enabled) {
    v.suffix = suffix_loss(pred, batch.targets);
    suffix_loss_backward(pred, batch.targets, cfg.lambda_suf, out_grad);
  }
  model.backward(batch.inputs, trace, out_grad);

  if (cfg.pole_reg_enabled) {
    v.pole = pole_safety(model, cfg.rho_safe);
    const ZnoConfig& mc = model.config();
    double coeff = cfg.lambda_pole / (static_cast<double>(mc.L) * mc.r * mc.K);
    for (const RationalLayer& layer : model.layers()) {
      layer.pole_safety_backward(cfg.rho_safe, coeff);
    }
  }
  v.total = v.data + (cfg.pole_reg_enabled ? cfg.lambda_pole * v.pole : 0.0) +
            (cfg.suffix_enabled ? cfg.lambda_suf * v.suffix : 0.0);
  return v;
}

}  // namespace zno
