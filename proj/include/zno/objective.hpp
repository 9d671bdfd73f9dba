#pragma once

#include "zno/network.hpp"
#include "zno/tensor.hpp"

namespace zno {

struct LossConfig {
  double lambda_pole = 1e-3;
  double lambda_suf = 1e-2;
  double rho_safe = 0.95;
  bool suffix_enabled = true;
  bool pole_reg_enabled = true;

  void validate() const;
};

// Batch-averaged unsquared relative Frobenius error,
// mean_b ||pred_b - target_b||_F / ||target_b||_F.
// Throws if any per-sample target norm is zero.
double rel_l2(const Tensor3& pred, const Tensor3& target);

// Accumulates scale * d(rel_l2)/d(pred) into grad (same shape as pred).
void rel_l2_backward(const Tensor3& pred, const Tensor3& target, double scale,
                     Tensor3& grad);

// rel_l2 restricted to time indices [floor(T/4), T). Requires T >= 4.
double suffix_loss(const Tensor3& pred, const Tensor3& target);
void suffix_loss_backward(const Tensor3& pred, const Tensor3& target,
                          double scale, Tensor3& grad);

// Mean over all L*r*K pole slots of max(|p| - rho_safe, 0)^2.
double pole_safety(const ZnoModel& model, double rho_safe);

struct ObjectiveValue {
  double total = 0.0;
  double data = 0.0;
  double suffix = 0.0;
  double pole = 0.0;
};

// Total training objective: data loss plus the toggled pole-safety and
// suffix terms, all from one forward pass. Accumulates gradients for every
// term into model.params().grads().
ObjectiveValue total_objective(ZnoModel& model, const TrajectoryBatch& batch,
                               const LossConfig& cfg);

}  // namespace zno
