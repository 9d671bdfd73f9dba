#include "zno/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>

#include "json.hpp"
#include "zno/csv.hpp"
#include "zno/rng.hpp"

namespace zno {

namespace {

std::vector<int> shuffled_indices(int n, RngStream rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

std::string snapshot_config(const ZnoModel& model, const LossConfig& lc,
                            const OptimConfig& oc) {
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(model.config().to_json());
  j["loss"] = {{"lambda_pole", lc.lambda_pole},
               {"lambda_suf", lc.lambda_suf},
               {"rho_safe", lc.rho_safe},
               {"suffix_enabled", lc.suffix_enabled},
               {"pole_reg_enabled", lc.pole_reg_enabled}};
  j["optim"] = {{"lr", oc.lr},
                {"weight_decay", oc.weight_decay},
                {"beta1", oc.beta1},
                {"beta2", oc.beta2},
                {"eps", oc.eps},
                {"step_size", oc.step_size},
                {"gamma", oc.gamma},
                {"epochs", oc.epochs},
                {"batch_size", oc.batch_size},
                {"decoupled_wd", oc.decoupled_wd}};
  if (oc.clip_norm) j["optim"]["clip_norm"] = *oc.clip_norm;
  return j.dump();
}

}  // namespace

RunRecord train(ZnoModel& model, const TrajectoryBatch& train_set,
                const TrajectoryBatch& val_set, const TrajectoryBatch& test_set,
                const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                std::uint64_t seed, const TrainOptions& opts) {
  loss_cfg.validate();
  optim_cfg.validate();
  auto t0 = std::chrono::steady_clock::now();

  RunRecord rec;
  rec.seed = seed;
  rec.config_json = snapshot_config(model, loss_cfg, optim_cfg);
  rec.params = static_cast<long long>(model.params().size());

  model.init_params(seed);
  AdamState adam(model.params().size());
  RngStream shuffle_base(seed, "shuffle");

  std::vector<double> best_snapshot = model.params().snapshot();
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  const int n_train = train_set.B();
  for (int epoch = 0; epoch < optim_cfg.epochs && !rec.diverged; ++epoch) {
    std::vector<int> order =
        shuffled_indices(n_train, shuffle_base.fork(static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (int lo = 0; lo < n_train; lo += optim_cfg.batch_size) {
      int hi = std::min(lo + optim_cfg.batch_size, n_train);
      std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      TrajectoryBatch mb = select(train_set, idx);
      model.params().zero_grads();
      ObjectiveValue obj;
      try {
        obj = total_objective(model, mb, loss_cfg);
        if (!std::isfinite(obj.total)) throw DivergenceError("non-finite loss");
        if (optim_cfg.clip_norm) clip_grad_norm(model.params(), *optim_cfg.clip_norm);
        adam_step(model.params(), adam, optim_cfg, epoch);
      } catch (const DivergenceError& e) {
        std::cerr << "run diverged (seed " << seed << ", epoch " << epoch
                  << "): " << e.what() << "\n";
        rec.diverged = true;
        break;
      }
      epoch_loss += obj.total;
      ++n_batches;
    }
    if (rec.diverged) break;
    rec.train_loss.push_back(epoch_loss / std::max(n_batches, 1));
    rec.max_pole.push_back(model.max_abs_pole());
    rec.pole_term.push_back(pole_safety(model, loss_cfg.rho_safe));

    Tensor3 val_pred = model.forward(val_set.inputs);
    double val = rel_l2(val_pred, val_set.targets);
    if (!std::isfinite(val)) {
      rec.diverged = true;
      break;
    }
    rec.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best_snapshot = model.params().snapshot();
    }
  }

  model.params().restore(best_snapshot);
  rec.best_val_epoch = best_epoch;
  rec.best_val = std::isfinite(best_val) ? best_val : 1.0;
  if (rec.diverged) {
    rec.test_rel_l2 = 1.0;  // sentinel, mirrors the divergent-seed convention
  } else {
    Tensor3 test_pred = model.forward(test_set.inputs);
    rec.test_rel_l2 = rel_l2(test_pred, test_set.targets);
  }
  rec.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!opts.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(opts.out_dir) / std::to_string(seed);
    fs::create_directories(dir);
    rec.checkpoint = (dir / "best.ckpt").string();
    model.save_checkpoint(rec.checkpoint);
    rec.pole_csv = (dir / "poles.csv").string();
    export_poles_csv(model, rec.pole_csv);
    write_record_json(rec, (dir / "record.json").string());
    append_summary_csv((fs::path(opts.out_dir) / "summary.csv").string(), rec, opts);
  }
  return rec;
}

RunRecord train_one_seed(const ZnoConfig& cfg, const TrajectoryBatch& train_set,
                         const TrajectoryBatch& val_set,
                         const TrajectoryBatch& test_set,
                         const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                         std::uint64_t seed, const TrainOptions& opts) {
  ZnoModel model(cfg);
  return train(model, train_set, val_set, test_set, loss_cfg, optim_cfg, seed, opts);
}

SeedAggregate aggregate_metrics(const std::vector<RunRecord>& records) {
  SeedAggregate agg;
  agg.records = records;
  if (records.empty()) return agg;
  std::vector<double> vals;
  for (const RunRecord& r : records) {
    double m = r.test_rel_l2;
    if (!std::isfinite(m) || m > 10.0) m = 1.0;
    vals.push_back(m);
  }
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  agg.mean = mean;
  agg.std_pop = std::sqrt(ss / static_cast<double>(vals.size()));
  agg.std_sample = vals.size() > 1
                       ? std::sqrt(ss / static_cast<double>(vals.size() - 1))
                       : 0.0;
  if (vals.size() == 1) {
    std::cerr << "note: single-seed aggregate, std reported as 0\n";
  }
  return agg;
}

SeedAggregate run_seeds(const ZnoConfig& cfg, const TrajectoryBatch& train_set,
                        const TrajectoryBatch& val_set,
                        const TrajectoryBatch& test_set,
                        const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                        const std::vector<std::uint64_t>& seeds,
                        const TrainOptions& opts) {
  if (seeds.empty()) throw std::invalid_argument("run_seeds: need at least one seed");
  std::vector<RunRecord> records;
  for (std::uint64_t seed : seeds) {
    records.push_back(
        train_one_seed(cfg, train_set, val_set, test_set, loss_cfg, optim_cfg, seed, opts));
  }
  return aggregate_metrics(records);
}

void write_record_json(const RunRecord& rec, const std::string& path) {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(rec.config_json);
  j["seed"] = rec.seed;
  j["train_loss"] = rec.train_loss;
  j["val_loss"] = rec.val_loss;
  j["max_pole"] = rec.max_pole;
  j["pole_term"] = rec.pole_term;
  j["best_val_epoch"] = rec.best_val_epoch;
  j["best_val"] = rec.best_val;
  j["test_rel_l2"] = rec.test_rel_l2;
  j["wall_clock_s"] = rec.wall_clock_s;
  j["diverged"] = rec.diverged;
  j["params"] = rec.params;
  j["pole_csv"] = rec.pole_csv;
  j["checkpoint"] = rec.checkpoint;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_record_json: cannot open " + path);
  f << j.dump(2) << "\n";
}

void append_summary_csv(const std::string& path, const RunRecord& rec,
                        const TrainOptions& opts) {
  static std::mutex mu;  // sweep jobs may append to one file concurrently
  std::lock_guard<std::mutex> lock(mu);
  bool fresh = !std::filesystem::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("append_summary_csv: cannot open " + path);
  if (fresh) f << "task,model_tag,protocol,seed,params,test_rel_l2,wall_clock_s\n";
  f << opts.task << "," << opts.model_tag << "," << opts.protocol << ","
    << rec.seed << "," << rec.params << "," << fmt_double(rec.test_rel_l2)
    << "," << fmt_double(rec.wall_clock_s) << "\n";
}

}  // namespace zno
