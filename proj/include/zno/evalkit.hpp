#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zno/datagen.hpp"
#include "zno/network.hpp"
#include "zno/tensor.hpp"
#include "zno/trainer.hpp"

namespace zno {

// Plain relative-L2 test metric.
double evaluate(const ZnoModel& model, const TrajectoryBatch& batch);

struct ExtrapSpec {
  int train_T = 0;
  std::vector<int> eval_lengths;  // each >= train_T
  int n_traj = 32;
  std::uint64_t seed_offset = 7000;
};

struct ExtrapRow {
  int length;
  double rel;
  double ratio;  // rel / rel(train_T)
};

// Evaluates the (unchanged) model on fresh test sets generated at train_T
// and at each requested longer length; lengths get held-out seeds.
std::vector<ExtrapRow> extrapolate(const ZnoModel& model, const TaskSpec& base,
                                   const ExtrapSpec& spec);

struct SweepOptions {
  int n_traj = 160;
  int T = 512;
  int n_train = 128, n_val = 16, n_test = 16;
  std::uint64_t data_seed_base = 1000;
  int jobs = 1;
  std::vector<int> bins = {0, 1, 2, 3, 4};
  std::string out_dir;
};

struct BinResult {
  int bin;
  double rho_lo, rho_hi;
  SeedAggregate agg;
  double zero_baseline;  // zero-predictor control, 1.0 by identity
};

// Fresh resonant-ARMA data per pole-radius bin (phi range unchanged), one
// training run per (bin, seed), aggregated per bin.
std::vector<BinResult> difficulty_sweep(const ZnoConfig& cfg,
                                        const LossConfig& loss_cfg,
                                        const OptimConfig& optim_cfg,
                                        const std::vector<std::uint64_t>& seeds,
                                        const SweepOptions& opts);

void write_sweep_csv(const std::vector<BinResult>& results,
                     const std::string& path);
void write_extrap_csv(const std::vector<ExtrapRow>& rows,
                      const std::string& path);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
};

// Welch's unequal-variance t statistic, a - b orientation. Degrees of
// freedom via Welch-Satterthwaite; callers typically report t only.
WelchResult welch(const std::vector<double>& a, const std::vector<double>& b);
double welch_t(const std::vector<double>& a, const std::vector<double>& b);

// Reference predictors. The zero predictor scores exactly 1.0 by the
// definition of the relative metric.
double baseline_zero(const TrajectoryBatch& batch);

struct LinFirResult {
  double rel = 0.0;
  bool used_ridge = false;
};

// Least-squares FIR (all input channels, lags 0..order-1, plus intercept)
// fitted on fit_batch by normal equations, scored on eval_batch. Singular
// systems fall back to ridge with lambda = 1e-8.
LinFirResult baseline_linfir(const TrajectoryBatch& fit_batch,
                             const TrajectoryBatch& eval_batch, int order);
LinFirResult baseline_linfir(const TrajectoryBatch& batch, int order);

}  // namespace zno
