// Command-line driver: data generation, training, evaluation, the
// difficulty sweep, long-horizon extrapolation, gradient checks, the
// convolution/FFT oracles, and pole-map export.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zno/csv.hpp"
#include "zno/datagen.hpp"
#include "zno/evalkit.hpp"
#include "zno/network.hpp"
#include "zno/objective.hpp"
#include "zno/optim.hpp"
#include "zno/oracle.hpp"
#include "zno/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string tag = "run";
  std::string task = "unknown";
  std::string protocol = "custom";
  zno::ZnoConfig model;
  zno::LossConfig loss;
  zno::OptimConfig optim;
  std::string data_path;
  int n_train = 0, n_val = 0, n_test = 0;
};

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  std::exit(1);
}

// relative output paths resolve under $ZNO_OUT_ROOT when it is set
std::string under_out_root(const std::string& path) {
  const char* root = std::getenv("ZNO_OUT_ROOT");
  if (!root || !*root || path.empty() || fs::path(path).is_absolute()) {
    return path;
  }
  return (fs::path(root) / path).string();
}

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& name : allowed) {
      if (it.key() == name) known = true;
    }
    if (!known) usage_error("unknown config field " + path + "." + it.key());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) usage_error("cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    usage_error("config parse failure in " + path + ": " + e.what());
  }
  reject_unknown(j, {"schema_version", "tag", "task", "protocol", "model",
                     "loss", "optim", "data"},
                 "<root>");
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1) {
    usage_error("config schema_version must be 1");
  }
  RunConfig rc;
  rc.tag = j.value("tag", std::string("run"));
  rc.task = j.value("task", std::string("unknown"));
  rc.protocol = j.value("protocol", std::string("custom"));

  const json& m = j.at("model");
  reject_unknown(m, {"w", "L", "r", "K", "F", "d_u", "d_y", "pole_mode",
                     "proj_hidden", "scan_mode", "dtype"},
                 "model");
  try {
    rc.model = zno::ZnoConfig::from_json(m.dump());
  } catch (const std::exception& e) {
    usage_error(std::string("model config: ") + e.what());
  }

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    reject_unknown(l, {"lambda_pole", "lambda_suf", "rho_safe",
                       "suffix_enabled", "pole_reg_enabled"},
                   "loss");
    rc.loss.lambda_pole = l.value("lambda_pole", rc.loss.lambda_pole);
    rc.loss.lambda_suf = l.value("lambda_suf", rc.loss.lambda_suf);
    rc.loss.rho_safe = l.value("rho_safe", rc.loss.rho_safe);
    rc.loss.suffix_enabled = l.value("suffix_enabled", rc.loss.suffix_enabled);
    rc.loss.pole_reg_enabled = l.value("pole_reg_enabled", rc.loss.pole_reg_enabled);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps",
                       "step_size", "gamma", "clip_norm", "epochs",
                       "batch_size", "decoupled_wd"},
                   "optim");
    rc.optim.lr = o.value("lr", rc.optim.lr);
    rc.optim.weight_decay = o.value("weight_decay", rc.optim.weight_decay);
    rc.optim.beta1 = o.value("beta1", rc.optim.beta1);
    rc.optim.beta2 = o.value("beta2", rc.optim.beta2);
    rc.optim.eps = o.value("eps", rc.optim.eps);
    rc.optim.step_size = o.value("step_size", rc.optim.step_size);
    rc.optim.gamma = o.value("gamma", rc.optim.gamma);
    if (o.contains("clip_norm") && !o["clip_norm"].is_null()) {
      rc.optim.clip_norm = o["clip_norm"].get<double>();
    }
    rc.optim.epochs = o.value("epochs", rc.optim.epochs);
    rc.optim.batch_size = o.value("batch_size", rc.optim.batch_size);
    rc.optim.decoupled_wd = o.value("decoupled_wd", rc.optim.decoupled_wd);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"path", "n_train", "n_val", "n_test"}, "data");
    rc.data_path = d.value("path", std::string());
    rc.n_train = d.value("n_train", 0);
    rc.n_val = d.value("n_val", 0);
    rc.n_test = d.value("n_test", 0);
  }
  return rc;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  auto pos = text.find("..");
  if (pos != std::string::npos) {
    std::uint64_t lo = std::stoull(text.substr(0, pos));
    std::uint64_t hi = std::stoull(text.substr(pos + 2));
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
  if (seeds.empty()) usage_error("empty seed list");
  return seeds;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) usage_error("empty list");
  return out;
}

int cmd_generate(const std::string& task, std::optional<int> bin, int n, int T,
                 std::uint64_t seed, double ar_coeff, bool no_normalize,
                 const std::string& out) {
  zno::TaskSpec spec;
  spec.family = zno::family_from_name(task);
  if (spec.family == zno::TaskFamily::IirCascade6) {
    spec.rho_lo = 0.88;
    spec.rho_hi = 0.995;
  }
  if (bin) {
    if (spec.family != zno::TaskFamily::ResonantArma) {
      usage_error("--bin applies to the arma task only");
    }
    auto bins = zno::difficulty_bins();
    if (*bin < 0 || *bin >= static_cast<int>(bins.size())) {
      usage_error("--bin must be in 0..4");
    }
    spec.rho_lo = bins[*bin].first;
    spec.rho_hi = bins[*bin].second;
  }
  spec.n_traj = n;
  spec.T = T;
  spec.seed = seed;
  spec.forcing.ar_coeff = ar_coeff;
  spec.forcing.normalize = !no_normalize;

  zno::TrajectoryBatch batch = zno::generate(spec);
  std::string stem = under_out_root(out);
  fs::path data_path = stem + ".znod";
  fs::path sidecar = stem + ".json";
  if (data_path.has_parent_path()) fs::create_directories(data_path.parent_path());
  zno::save_dataset(batch, data_path.string());
  zno::save_task_spec(spec, sidecar.string());
  std::printf("task=%s n=%d T=%d d_u=%d d_y=%d\n", task.c_str(), batch.B(),
              batch.T(), batch.du(), batch.dy());
  std::printf("dataset: %s\nsidecar: %s\n", data_path.string().c_str(),
              sidecar.string().c_str());
  return 0;
}

int cmd_train(const std::string& config_path, std::uint64_t seed,
              std::string out, const std::string& pole_mode_override) {
  RunConfig rc = load_run_config(config_path);
  if (!pole_mode_override.empty()) {
    if (pole_mode_override == "z") {
      rc.model.pole_mode = zno::PoleMode::ZPlane;
    } else if (pole_mode_override == "s-iso" || pole_mode_override == "s_iso") {
      rc.model.pole_mode = zno::PoleMode::SPlaneIso;
    } else {
      usage_error("--pole-mode must be z or s-iso");
    }
  }
  std::printf("params: %lld\n", zno::count_params(rc.model));
  if (rc.data_path.empty()) usage_error("config has no data.path");
  zno::TrajectoryBatch full = zno::load_dataset(rc.data_path);
  if (full.du() != rc.model.d_u || full.dy() != rc.model.d_y) {
    usage_error("dataset channels (" + std::to_string(full.du()) + "/" +
                std::to_string(full.dy()) + ") do not match model d_u/d_y");
  }
  auto splits = zno::split_dataset(full, rc.n_train, rc.n_val, rc.n_test);
  if (out.empty()) out = "runs/" + rc.tag;
  out = under_out_root(out);
  zno::TrainOptions opts;
  opts.out_dir = out;
  opts.task = rc.task;
  opts.protocol = rc.protocol;
  opts.model_tag = rc.model.pole_mode == zno::PoleMode::ZPlane ? "zno" : "zno-s-iso";

  zno::ZnoModel model(rc.model);
  zno::RunRecord rec = zno::train(model, splits[0], splits[1], splits[2],
                                  rc.loss, rc.optim, seed, opts);
  std::printf("seed=%llu best_val_epoch=%d best_val=%.6f test_rel_l2=%.6f wall=%.1fs%s\n",
              static_cast<unsigned long long>(seed), rec.best_val_epoch,
              rec.best_val, rec.test_rel_l2, rec.wall_clock_s,
              rec.diverged ? " DIVERGED" : "");
  std::printf("record: %s/%llu/record.json\n", out.c_str(),
              static_cast<unsigned long long>(seed));
  return rec.diverged ? 2 : 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& out_arg) {
  std::string out = under_out_root(out_arg);
  auto model = zno::ZnoModel::load_checkpoint(ckpt);
  zno::TrajectoryBatch batch = zno::load_dataset(data);
  double rel = zno::evaluate(*model, batch);
  std::printf("rel_l2=%.6f (n=%d, T=%d)\n", rel, batch.B(), batch.T());
  if (!out.empty()) {
    zno::CsvTable t;
    t.header = {"eval_T", "n", "rel_l2", "params"};
    t.rows.push_back({std::to_string(batch.T()), std::to_string(batch.B()),
                      zno::fmt_double(rel),
                      std::to_string(model->params().size())});
    zno::write_csv(out, t);
    std::printf("csv: %s\n", out.c_str());
  }
  return 0;
}

int cmd_extrapolate(const std::string& ckpt, const std::string& spec_path,
                    const std::string& lengths, int n, std::uint64_t seed_offset,
                    const std::string& out_arg) {
  std::string out = under_out_root(out_arg);
  auto model = zno::ZnoModel::load_checkpoint(ckpt);
  zno::TaskSpec base = zno::load_task_spec(spec_path);
  zno::ExtrapSpec es;
  es.train_T = base.T;
  es.eval_lengths = parse_int_list(lengths);
  es.n_traj = n;
  es.seed_offset = seed_offset;
  auto rows = zno::extrapolate(*model, base, es);
  std::printf("eval_T  rel_l2    ratio\n");
  for (const auto& row : rows) {
    std::printf("%-7d %-9.6f %.4f\n", row.length, row.rel, row.ratio);
  }
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    zno::write_extrap_csv(rows, out);
    std::printf("csv: %s\n", out.c_str());
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& bins,
              const std::string& seeds, int n, int T, std::uint64_t data_seed,
              int jobs, const std::string& out_arg) {
  std::string out = under_out_root(out_arg);
  RunConfig rc = load_run_config(config_path);
  if (rc.model.d_u != 7) usage_error("sweep runs the arma task; model d_u must be 7");
  zno::SweepOptions opts;
  opts.n_traj = n;
  opts.T = T;
  opts.n_train = n - n / 5;
  opts.n_val = (n - opts.n_train) / 2;
  opts.n_test = n - opts.n_train - opts.n_val;
  opts.data_seed_base = data_seed;
  opts.jobs = jobs;
  opts.out_dir = out;
  if (bins != "all") opts.bins = parse_int_list(bins);
  auto results = zno::difficulty_sweep(rc.model, rc.loss, rc.optim,
                                       parse_seeds(seeds), opts);
  std::printf("bin  rho            mean      std(n)    zero\n");
  for (const auto& r : results) {
    std::printf("%-4d [%.2f,%.3f]  %-9.4f %-9.4f %.1f\n", r.bin, r.rho_lo,
                r.rho_hi, r.agg.mean, r.agg.std_pop, r.zero_baseline);
  }
  if (!out.empty()) std::printf("csv: %s/sweep.csv\n", out.c_str());
  return 0;
}

int cmd_gradcheck(double step) {
  auto checks = zno::run_objective_gradchecks(step);
  bool pass = true;
  for (const auto& c : checks) {
    bool ok = c.max_rel_err < 1e-6;
    pass = pass && ok;
    std::printf("w=%d K=%d F=%d d_u=%d seed=%llu: max rel err %.3e  %s\n", c.w,
                c.K, c.F, c.d_u, static_cast<unsigned long long>(c.seed),
                c.max_rel_err, ok ? "PASS" : "FAIL");
  }
  std::printf("gradcheck: %s\n", pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

int cmd_oracle(std::uint64_t seed) {
  double conv = zno::run_conv_oracle_suite(seed, 10, 256);
  bool conv_ok = conv < 1e-10;
  std::printf("conv oracle: max abs diff %.3e  %s\n", conv,
              conv_ok ? "PASS" : "FAIL");
  zno::FftOracleResult fft = zno::run_fft_oracle_suite(seed);
  bool fft_ok = fft.max_excess < 1e-8;
  std::printf("fft oracle: max err %.3e, tail bound %.3e, excess %.3e  %s\n",
              fft.max_err, fft.max_bound, fft.max_excess,
              fft_ok ? "PASS" : "FAIL");
  return conv_ok && fft_ok ? 0 : 1;
}

int cmd_polemap(const std::string& ckpt, const std::string& out_arg) {
  std::string out = under_out_root(out_arg);
  auto model = zno::ZnoModel::load_checkpoint(ckpt);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  zno::export_poles_csv(*model, out);
  std::printf("poles: %zu rows -> %s (max |p| = %.6f)\n",
              model->export_poles().size(), out.c_str(), model->max_abs_pole());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"z-domain rational neural operator toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  std::string g_task = "arma", g_out = "data/dataset";
  int g_n = 160, g_T = 512, g_bin = -1;
  std::uint64_t g_seed = 0;
  double g_ar = 0.9;
  bool g_nonorm = false;
  gen->add_option("--task", g_task, "arma | iir | narx");
  gen->add_option("--bin", g_bin, "difficulty bin 0..4 (arma only)");
  gen->add_option("--n", g_n, "number of trajectories");
  gen->add_option("--T", g_T, "sequence length");
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--ar-coeff", g_ar, "forcing AR(1) coefficient");
  gen->add_flag("--no-normalize", g_nonorm, "skip per-trajectory unit-std rescale");
  gen->add_option("--out", g_out, "output path stem (.znod/.json appended)");

  auto* tr = app.add_subcommand("train", "train one seed from a config file");
  std::string t_config, t_out, t_pole_mode;
  std::uint64_t t_seed = 0;
  tr->add_option("--config", t_config, "run config JSON")->required();
  tr->add_option("--seed", t_seed, "training seed");
  tr->add_option("--out", t_out, "output directory (default runs/<tag>)");
  tr->add_option("--pole-mode", t_pole_mode, "override pole parameterization: z | s-iso");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  std::string e_ckpt, e_data, e_out;
  ev->add_option("--checkpoint", e_ckpt)->required();
  ev->add_option("--data", e_data)->required();
  ev->add_option("--out", e_out, "optional CSV path");

  auto* ex = app.add_subcommand("extrapolate", "evaluate at longer horizons");
  std::string x_ckpt, x_spec, x_lengths = "1024,2048", x_out;
  int x_n = 32;
  std::uint64_t x_off = 7000;
  ex->add_option("--checkpoint", x_ckpt)->required();
  ex->add_option("--spec", x_spec, "task sidecar JSON of the training data")->required();
  ex->add_option("--lengths", x_lengths, "comma-separated eval lengths");
  ex->add_option("--n", x_n, "test trajectories per length");
  ex->add_option("--seed-offset", x_off, "held-out seed offset");
  ex->add_option("--out", x_out, "optional CSV path");

  auto* sw = app.add_subcommand("sweep", "near-unit-circle difficulty sweep");
  std::string s_config, s_bins = "all", s_seeds = "0..4", s_out = "runs/sweep";
  int s_n = 160, s_T = 512, s_jobs = 1;
  std::uint64_t s_dseed = 1000;
  sw->add_option("--config", s_config, "run config JSON (model/loss/optim)")->required();
  sw->add_option("--bins", s_bins, "all or comma-separated bin indices");
  sw->add_option("--seeds", s_seeds, "e.g. 0..4 or 0,1,2");
  sw->add_option("--n", s_n, "trajectories per bin");
  sw->add_option("--T", s_T, "sequence length");
  sw->add_option("--data-seed", s_dseed, "per-bin data seed base");
  sw->add_option("--jobs", s_jobs, "parallel training jobs");
  sw->add_option("--out", s_out, "output directory");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  double c_step = 5e-5;
  gc->add_option("--step", c_step, "central-difference step");

  auto* orc = app.add_subcommand("oracle", "convolution and FFT oracle checks");
  std::uint64_t o_seed = 2718;
  orc->add_option("--seed", o_seed, "suite seed");

  auto* pm = app.add_subcommand("polemap", "export constrained poles as CSV");
  std::string p_ckpt, p_out = "poles.csv";
  pm->add_option("--checkpoint", p_ckpt)->required();
  pm->add_option("--out", p_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_generate(g_task, g_bin >= 0 ? std::optional<int>(g_bin) : std::nullopt,
                          g_n, g_T, g_seed, g_ar, g_nonorm, g_out);
    }
    if (tr->parsed()) return cmd_train(t_config, t_seed, t_out, t_pole_mode);
    if (ev->parsed()) return cmd_eval(e_ckpt, e_data, e_out);
    if (ex->parsed()) return cmd_extrapolate(x_ckpt, x_spec, x_lengths, x_n, x_off, x_out);
    if (sw->parsed()) return cmd_sweep(s_config, s_bins, s_seeds, s_n, s_T, s_dseed, s_jobs, s_out);
    if (gc->parsed()) return cmd_gradcheck(c_step);
    if (orc->parsed()) return cmd_oracle(o_seed);
    if (pm->parsed()) return cmd_polemap(p_ckpt, p_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
