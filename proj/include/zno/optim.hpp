#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "zno/param_store.hpp"

namespace zno {

struct OptimConfig {
  double lr = 2e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  int step_size = 100;  // StepLR epochs per decay
  double gamma = 0.5;
  std::optional<double> clip_norm;
  int epochs = 100;
  int batch_size = 32;
  bool decoupled_wd = false;  // sensitivity-check variant

  void validate() const;
};

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Raised when gradients go non-finite; the trainer turns this into a
// divergent-run record instead of crashing the seed sweep.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double lr_at_epoch(const OptimConfig& cfg, int epoch);

// Adam with bias correction; weight decay enters as a gradient-side L2 term
// unless decoupled_wd is set.
void adam_step(ParamStore& params, AdamState& state, const OptimConfig& cfg,
               int epoch);

// Scales all gradients to the max-norm ball; returns the pre-clip norm.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace zno
