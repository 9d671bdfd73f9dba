#include "zno/optim.hpp"

#include <cmath>

namespace zno {

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("OptimConfig: lr must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("OptimConfig: gamma in [0,1]");
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("OptimConfig: clip_norm must be positive");
  if (step_size < 1) throw std::invalid_argument("OptimConfig: step_size must be >= 1");
  if (epochs < 0 || batch_size < 1) throw std::invalid_argument("OptimConfig: bad epochs/batch_size");
  if (weight_decay < 0.0) throw std::invalid_argument("OptimConfig: negative weight_decay");
}

double lr_at_epoch(const OptimConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.gamma, epoch / cfg.step_size);
}

void adam_step(ParamStore& params, AdamState& state, const OptimConfig& cfg,
               int epoch) {
  auto values = params.values();
  auto grads = params.grads();
  if (state.m.size() != values.size()) {
    throw std::invalid_argument("adam_step: state size mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw DivergenceError("adam_step: non-finite gradient");
  }
  const double lr = lr_at_epoch(cfg, epoch);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < values.size(); ++i) {
    double g = grads[i];
    if (!cfg.decoupled_wd) g += cfg.weight_decay * values[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    if (cfg.decoupled_wd) values[i] -= lr * cfg.weight_decay * values[i];
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  auto grads = params.grads();
  double ss = 0.0;
  for (double g : grads) ss += g * g;
  double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

}  // namespace zno
