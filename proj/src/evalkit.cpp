#include "zno/evalkit.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <thread>

#include "zno/csv.hpp"
#include "zno/objective.hpp"

namespace zno {

double evaluate(const ZnoModel& model, const TrajectoryBatch& batch) {
  Tensor3 pred = model.forward(batch.inputs);
  return rel_l2(pred, batch.targets);
}

std::vector<ExtrapRow> extrapolate(const ZnoModel& model, const TaskSpec& base,
                                   const ExtrapSpec& spec) {
  if (spec.train_T < 1) throw std::invalid_argument("extrapolate: train_T must be positive");
  for (int len : spec.eval_lengths) {
    if (len < spec.train_T) {
      throw std::invalid_argument("extrapolate: eval lengths must be >= train_T");
    }
  }
  auto before = model.params().snapshot();

  std::vector<int> lengths;
  lengths.push_back(spec.train_T);
  for (int len : spec.eval_lengths) lengths.push_back(len);

  std::vector<ExtrapRow> rows;
  double base_rel = 0.0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    TaskSpec ts = base;
    ts.T = lengths[i];
    ts.n_traj = spec.n_traj;
    ts.seed = base.seed + spec.seed_offset + 1000 * static_cast<std::uint64_t>(i);
    TrajectoryBatch test = generate(ts);
    double rel = evaluate(model, test);
    if (i == 0) base_rel = rel;
    rows.push_back({lengths[i], rel, base_rel > 0.0 ? rel / base_rel : 0.0});
  }

  auto after = model.params().snapshot();
  if (before != after) throw std::logic_error("extrapolate: model parameters changed");
  return rows;
}

std::vector<BinResult> difficulty_sweep(const ZnoConfig& cfg,
                                        const LossConfig& loss_cfg,
                                        const OptimConfig& optim_cfg,
                                        const std::vector<std::uint64_t>& seeds,
                                        const SweepOptions& opts) {
  if (opts.n_train + opts.n_val + opts.n_test != opts.n_traj) {
    throw std::invalid_argument("difficulty_sweep: split does not sum to n_traj");
  }
  auto all_bins = difficulty_bins();
  for (int bin : opts.bins) {
    if (bin < 0 || bin >= static_cast<int>(all_bins.size())) {
      throw std::invalid_argument("difficulty_sweep: bin index out of range");
    }
  }
  struct Job {
    int slot;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int slot = 0; slot < static_cast<int>(opts.bins.size()); ++slot) {
    for (std::uint64_t seed : seeds) jobs.push_back({slot, seed});
  }

  // one dataset per bin, shared read-only by all seeds
  std::vector<std::array<TrajectoryBatch, 3>> splits(opts.bins.size());
  std::vector<double> zero_baseline(opts.bins.size());
  for (int slot = 0; slot < static_cast<int>(opts.bins.size()); ++slot) {
    int bin = opts.bins[slot];
    TaskSpec ts;
    ts.family = TaskFamily::ResonantArma;
    ts.rho_lo = all_bins[bin].first;
    ts.rho_hi = all_bins[bin].second;
    ts.n_traj = opts.n_traj;
    ts.T = opts.T;
    ts.seed = opts.data_seed_base + static_cast<std::uint64_t>(bin);
    splits[slot] = split_dataset(generate(ts), opts.n_train, opts.n_val, opts.n_test);
    zero_baseline[slot] = baseline_zero(splits[slot][2]);
  }

  std::vector<std::vector<RunRecord>> per_bin(opts.bins.size(),
                                              std::vector<RunRecord>(seeds.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      int bin = opts.bins[job.slot];
      TrainOptions topt;
      if (!opts.out_dir.empty()) {
        topt.out_dir = (std::filesystem::path(opts.out_dir) /
                        ("bin" + std::to_string(bin)))
                           .string();
      }
      topt.task = "arma";
      topt.protocol = "sweep-bin" + std::to_string(bin);
      std::size_t si = 0;
      while (seeds[si] != job.seed) ++si;
      per_bin[job.slot][si] =
          train_one_seed(cfg, splits[job.slot][0], splits[job.slot][1],
                         splits[job.slot][2], loss_cfg, optim_cfg, job.seed, topt);
    }
  };
  int nw = std::max(1, opts.jobs);
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<BinResult> results;
  for (int slot = 0; slot < static_cast<int>(opts.bins.size()); ++slot) {
    int bin = opts.bins[slot];
    BinResult r;
    r.bin = bin;
    r.rho_lo = all_bins[bin].first;
    r.rho_hi = all_bins[bin].second;
    r.agg = aggregate_metrics(per_bin[slot]);
    r.zero_baseline = zero_baseline[slot];
    results.push_back(std::move(r));
  }
  if (!opts.out_dir.empty()) {
    write_sweep_csv(results,
                    (std::filesystem::path(opts.out_dir) / "sweep.csv").string());
  }
  return results;
}

void write_sweep_csv(const std::vector<BinResult>& results,
                     const std::string& path) {
  CsvTable t;
  t.header = {"bin",      "rho_lo",  "rho_hi",     "mean_rel_l2",
              "std_pop",  "std_sample", "zero_baseline"};
  for (const BinResult& r : results) {
    t.rows.push_back({std::to_string(r.bin), fmt_double(r.rho_lo),
                      fmt_double(r.rho_hi), fmt_double(r.agg.mean),
                      fmt_double(r.agg.std_pop), fmt_double(r.agg.std_sample),
                      fmt_double(r.zero_baseline)});
  }
  write_csv(path, t);
}

void write_extrap_csv(const std::vector<ExtrapRow>& rows,
                      const std::string& path) {
  CsvTable t;
  t.header = {"eval_T", "rel_l2", "ratio"};
  for (const ExtrapRow& r : rows) {
    t.rows.push_back({std::to_string(r.length), fmt_double(r.rel), fmt_double(r.ratio)});
  }
  write_csv(path, t);
}

WelchResult welch(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch: both samples need size >= 2");
  }
  auto stats = [](const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair<double, double>{mean, ss / static_cast<double>(x.size() - 1)};
  };
  auto [ma, va] = stats(a);
  auto [mb, vb] = stats(b);
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double se2 = va / na + vb / nb;
  WelchResult res;
  if (se2 == 0.0) {
    res.t = ma == mb ? 0.0
                     : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    res.df = na + nb - 2.0;
    return res;
  }
  res.t = (ma - mb) / std::sqrt(se2);
  double da = va / na, db = vb / nb;
  res.df = se2 * se2 / (da * da / (na - 1.0) + db * db / (nb - 1.0));
  return res;
}

double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  return welch(a, b).t;
}

double baseline_zero(const TrajectoryBatch& batch) {
  Tensor3 zeros(batch.B(), batch.T(), batch.dy());
  return rel_l2(zeros, batch.targets);
}

namespace {

// Cholesky solve for the SPD normal equations; false if not positive definite.
bool cholesky_solve(std::vector<double>& A, std::vector<double>& rhs, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = A[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) {
        s -= A[static_cast<std::size_t>(i) * n + k] * A[static_cast<std::size_t>(j) * n + k];
      }
      if (i == j) {
        if (s <= 0.0) return false;
        A[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
      } else {
        A[static_cast<std::size_t>(i) * n + j] = s / A[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  for (int i = 0; i < n; ++i) {  // L y = rhs
    double s = rhs[i];
    for (int k = 0; k < i; ++k) s -= A[static_cast<std::size_t>(i) * n + k] * rhs[k];
    rhs[i] = s / A[static_cast<std::size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {  // L^T x = y
    double s = rhs[i];
    for (int k = i + 1; k < n; ++k) s -= A[static_cast<std::size_t>(k) * n + i] * rhs[k];
    rhs[i] = s / A[static_cast<std::size_t>(i) * n + i];
  }
  return true;
}

void fir_features(const TrajectoryBatch& batch, int order, int b, int t,
                  std::vector<double>& feat) {
  const int du = batch.du();
  int idx = 0;
  for (int j = 0; j < order; ++j) {
    for (int c = 0; c < du; ++c) {
      feat[idx++] = t - j >= 0 ? batch.inputs.at(b, t - j, c) : 0.0;
    }
  }
  feat[idx] = 1.0;  // intercept
}

}  // namespace

LinFirResult baseline_linfir(const TrajectoryBatch& fit_batch,
                             const TrajectoryBatch& eval_batch, int order) {
  if (order < 1) throw std::invalid_argument("baseline_linfir: order must be >= 1");
  if (fit_batch.du() != eval_batch.du() || fit_batch.dy() != eval_batch.dy()) {
    throw std::invalid_argument("baseline_linfir: batch channel mismatch");
  }
  const int nf = order * fit_batch.du() + 1;
  const int dy = fit_batch.dy();
  std::vector<double> gram(static_cast<std::size_t>(nf) * nf, 0.0);
  std::vector<std::vector<double>> rhs(dy, std::vector<double>(nf, 0.0));
  std::vector<double> feat(nf);
  for (int b = 0; b < fit_batch.B(); ++b) {
    for (int t = 0; t < fit_batch.T(); ++t) {
      fir_features(fit_batch, order, b, t, feat);
      for (int i = 0; i < nf; ++i) {
        for (int j = 0; j <= i; ++j) {
          gram[static_cast<std::size_t>(i) * nf + j] += feat[i] * feat[j];
        }
        for (int c = 0; c < dy; ++c) {
          rhs[c][i] += feat[i] * fit_batch.targets.at(b, t, c);
        }
      }
    }
  }
  for (int i = 0; i < nf; ++i) {
    for (int j = i + 1; j < nf; ++j) {
      gram[static_cast<std::size_t>(i) * nf + j] = gram[static_cast<std::size_t>(j) * nf + i];
    }
  }

  LinFirResult result;
  std::vector<std::vector<double>> theta(dy);
  for (int c = 0; c < dy; ++c) {
    std::vector<double> A = gram;
    theta[c] = rhs[c];
    if (!cholesky_solve(A, theta[c], nf)) {
      result.used_ridge = true;
      A = gram;
      for (int i = 0; i < nf; ++i) A[static_cast<std::size_t>(i) * nf + i] += 1e-8;
      theta[c] = rhs[c];
      if (!cholesky_solve(A, theta[c], nf)) {
        throw std::runtime_error("baseline_linfir: ridge fallback failed");
      }
    }
  }

  Tensor3 pred(eval_batch.B(), eval_batch.T(), dy);
  for (int b = 0; b < eval_batch.B(); ++b) {
    for (int t = 0; t < eval_batch.T(); ++t) {
      fir_features(eval_batch, order, b, t, feat);
      for (int c = 0; c < dy; ++c) {
        double acc = 0.0;
        for (int i = 0; i < nf; ++i) acc += theta[c][i] * feat[i];
        pred.at(b, t, c) = acc;
      }
    }
  }
  result.rel = rel_l2(pred, eval_batch.targets);
  return result;
}

LinFirResult baseline_linfir(const TrajectoryBatch& batch, int order) {
  return baseline_linfir(batch, batch, order);
}

}  // namespace zno
