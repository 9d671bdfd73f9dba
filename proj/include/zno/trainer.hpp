#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zno/network.hpp"
#include "zno/objective.hpp"
#include "zno/optim.hpp"
#include "zno/tensor.hpp"

namespace zno {

struct RunRecord {
  std::string config_json;  // model + loss + optim snapshot
  std::uint64_t seed = 0;
  std::vector<double> train_loss;   // per-epoch mean total objective
  std::vector<double> val_loss;     // per-epoch plain relative L2
  std::vector<double> max_pole;     // per-epoch max |p| after the updates
  std::vector<double> pole_term;    // per-epoch pole-safety value
  int best_val_epoch = -1;
  double best_val = 0.0;
  double test_rel_l2 = 0.0;         // from the best-validation checkpoint
  double wall_clock_s = 0.0;
  bool diverged = false;
  long long params = 0;
  std::string pole_csv;             // path of the exported pole map, if any
  std::string checkpoint;           // path of the best checkpoint, if any
};

struct TrainOptions {
  std::string out_dir;  // empty: no files written
  std::string task = "unknown", model_tag = "zno", protocol = "desk";
};

// Full protocol for one seed: init from seed, shuffle per epoch, validate
// per epoch, keep the best-validation checkpoint, score test from it.
// A divergent run (non-finite loss or gradient) is recorded with the
// sentinel test metric 1.0 instead of aborting.
RunRecord train(ZnoModel& model, const TrajectoryBatch& train_set,
                const TrajectoryBatch& val_set, const TrajectoryBatch& test_set,
                const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                std::uint64_t seed, const TrainOptions& opts = {});

struct SeedAggregate {
  std::vector<RunRecord> records;
  double mean = 0.0;
  double std_pop = 0.0;     // n denominator (reported)
  double std_sample = 0.0;  // n-1 denominator (also stored)
};

// Divergent metrics (non-finite or > 10) are clamped to 1.0 in aggregates.
SeedAggregate aggregate_metrics(const std::vector<RunRecord>& records);

RunRecord train_one_seed(const ZnoConfig& cfg, const TrajectoryBatch& train_set,
                         const TrajectoryBatch& val_set,
                         const TrajectoryBatch& test_set,
                         const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                         std::uint64_t seed, const TrainOptions& opts = {});

SeedAggregate run_seeds(const ZnoConfig& cfg, const TrajectoryBatch& train_set,
                        const TrajectoryBatch& val_set,
                        const TrajectoryBatch& test_set,
                        const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                        const std::vector<std::uint64_t>& seeds,
                        const TrainOptions& opts = {});

void write_record_json(const RunRecord& rec, const std::string& path);
void append_summary_csv(const std::string& path, const RunRecord& rec,
                        const TrainOptions& opts);

}  // namespace zno
