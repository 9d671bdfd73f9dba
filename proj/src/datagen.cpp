#include "zno/datagen.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace zno {

namespace {
constexpr std::uint64_t kForcingSalt = 17;
constexpr std::uint64_t kParamSalt = 43;

double population_std(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size()));
}
}  // namespace

std::string family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::ResonantArma: return "arma";
    case TaskFamily::IirCascade6: return "iir";
    case TaskFamily::NarxScalar: return "narx";
  }
  throw std::logic_error("family_name: bad enum");
}

TaskFamily family_from_name(const std::string& s) {
  if (s == "arma") return TaskFamily::ResonantArma;
  if (s == "iir") return TaskFamily::IirCascade6;
  if (s == "narx") return TaskFamily::NarxScalar;
  throw std::invalid_argument("unknown task family: " + s);
}

int TaskSpec::d_u() const {
  switch (family) {
    case TaskFamily::ResonantArma: return 7;
    case TaskFamily::IirCascade6: return 16;
    case TaskFamily::NarxScalar: return 1;
  }
  throw std::logic_error("TaskSpec::d_u: bad enum");
}

void TaskSpec::validate() const {
  if (n_traj <= 0 || T <= 0) throw std::invalid_argument("TaskSpec: n_traj and T must be positive");
  if (family != TaskFamily::NarxScalar) {
    if (!(0.0 < rho_lo && rho_lo < rho_hi && rho_hi < 1.0)) {
      throw std::invalid_argument("TaskSpec: require 0 < rho_lo < rho_hi < 1");
    }
    double plo = phi_lo, phi = phi_hi;
    if (!(plo == 0.0 && phi == 0.0)) {
      if (!(0.0 < plo && plo < phi && phi < M_PI)) {
        throw std::invalid_argument("TaskSpec: require 0 < phi_lo < phi_hi < pi");
      }
    }
  }
  if (!(std::abs(forcing.ar_coeff) < 1.0)) {
    throw std::invalid_argument("ForcingSpec: |ar_coeff| must be < 1");
  }
}

std::vector<double> gen_forcing(const ForcingSpec& spec, int n, int T,
                                const RngStream& rng) {
  if (T < 1 || n < 1) throw std::invalid_argument("gen_forcing: need n, T >= 1");
  if (!(std::abs(spec.ar_coeff) < 1.0)) {
    throw std::invalid_argument("gen_forcing: |ar_coeff| must be < 1");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * T);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    RngStream s = rng.fork(static_cast<std::uint64_t>(i));
    double* x = out.data() + static_cast<std::size_t>(i) * T;
    double prev = 0.0;
    for (int t = 0; t < T; ++t) {
      prev = spec.ar_coeff * prev + s.normal();
      x[t] = prev;
    }
    if (spec.normalize) {
      double sd = population_std({x, static_cast<std::size_t>(T)});
      if (sd > 0.0) {
        for (int t = 0; t < T; ++t) x[t] /= sd;
      }
    }
  }
  return out;
}

void arma_recursion(std::span<const double> x, double a1, double a2,
                    const double m[4], std::span<double> y) {
  double y1 = 0.0, y2 = 0.0;
  const int T = static_cast<int>(x.size());
  for (int n = 0; n < T; ++n) {
    double drive = 0.0;
    for (int j = 0; j < 4 && j <= n; ++j) drive += m[j] * x[n - j];
    double yn = a1 * y1 + a2 * y2 + drive;
    y2 = y1;
    y1 = yn;
    y[n] = yn;
  }
}

void biquad_cascade_recursion(std::span<const double> x,
                              const std::array<BiquadSection, 3>& sections,
                              std::span<double> y) {
  const int T = static_cast<int>(x.size());
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next(T);
  for (const BiquadSection& s : sections) {
    double u1 = 0.0, u2 = 0.0, v1 = 0.0, v2 = 0.0;
    for (int n = 0; n < T; ++n) {
      double vn = s.b0 * cur[n] + s.b1 * u1 + s.b2 * u2 + s.a1 * v1 + s.a2 * v2;
      u2 = u1;
      u1 = cur[n];
      v2 = v1;
      v1 = vn;
      next[n] = vn;
    }
    cur.swap(next);
  }
  for (int n = 0; n < T; ++n) y[n] = cur[n];
}

void narx_recursion(std::span<const double> x, const NarxParams& p,
                    std::span<double> y) {
  const int T = static_cast<int>(x.size());
  double y1 = 0.0, y2 = 0.0, x1 = 0.0;
  const double log2 = std::log(2.0);
  for (int n = 0; n < T; ++n) {
    double z = x[n] + 0.5 * x1;
    // softplus(z) - log 2, written to stay accurate for large |z|
    double softplus = z > 30.0 ? z : std::log1p(std::exp(z));
    double yn = p.a1 * y1 + p.a2 * y2 + p.gain * (softplus - log2) +
                0.08 * std::tanh(y1 * x[n]);
    y2 = y1;
    y1 = yn;
    x1 = x[n];
    y[n] = yn;
  }
}

namespace {

struct Ranges {
  double rho_lo, rho_hi, phi_lo, phi_hi;
};

Ranges effective_ranges(const TaskSpec& spec) {
  Ranges r{spec.rho_lo, spec.rho_hi, spec.phi_lo, spec.phi_hi};
  if (r.phi_lo == 0.0 && r.phi_hi == 0.0) {
    if (spec.family == TaskFamily::ResonantArma) {
      r.phi_lo = 0.05 * M_PI;
      r.phi_hi = 0.45 * M_PI;
    } else {
      r.phi_lo = 0.05 * M_PI;
      r.phi_hi = 0.95 * M_PI;
    }
  }
  return r;
}

}  // namespace

TrajectoryBatch gen_resonant_arma(const TaskSpec& spec, const RngStream& rng) {
  spec.validate();
  if (spec.family != TaskFamily::ResonantArma) {
    throw std::invalid_argument("gen_resonant_arma: wrong family");
  }
  const Ranges rr = effective_ranges(spec);
  const int n = spec.n_traj, T = spec.T;
  std::vector<double> forcing = gen_forcing(spec.forcing, n, T, rng.fork(kForcingSalt));
  RngStream params_base = rng.fork(kParamSalt);

  TrajectoryBatch batch;
  batch.inputs = Tensor3(n, T, 7);
  batch.targets = Tensor3(n, T, 1);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    RngStream ps = params_base.fork(static_cast<std::uint64_t>(i));
    double rho = ps.uniform(rr.rho_lo, rr.rho_hi);
    double phi = ps.uniform(rr.phi_lo, rr.phi_hi);
    double a1 = 2.0 * rho * std::cos(phi);
    double a2 = -rho * rho;
    double m[4];
    for (int j = 0; j < 4; ++j) m[j] = ps.uniform(-1.0, 1.0);
    while (std::abs(m[0]) < 0.1) m[0] = ps.uniform(-1.0, 1.0);

    const double* x = forcing.data() + static_cast<std::size_t>(i) * T;
    std::vector<double> y(T);
    arma_recursion({x, static_cast<std::size_t>(T)}, a1, a2, m, y);
    for (int t = 0; t < T; ++t) {
      double* in = batch.inputs.row(i, t);
      in[0] = x[t];
      in[1] = a1;
      in[2] = a2;
      in[3] = m[0];
      in[4] = m[1];
      in[5] = m[2];
      in[6] = m[3];
      batch.targets.at(i, t, 0) = y[t];
    }
  }
  batch.validate();
  return batch;
}

TrajectoryBatch gen_iir_cascade(const TaskSpec& spec, const RngStream& rng) {
  spec.validate();
  if (spec.family != TaskFamily::IirCascade6) {
    throw std::invalid_argument("gen_iir_cascade: wrong family");
  }
  const Ranges rr = effective_ranges(spec);
  const int n = spec.n_traj, T = spec.T;
  std::vector<double> forcing = gen_forcing(spec.forcing, n, T, rng.fork(kForcingSalt));
  RngStream params_base = rng.fork(kParamSalt);

  TrajectoryBatch batch;
  batch.inputs = Tensor3(n, T, 16);
  batch.targets = Tensor3(n, T, 1);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    RngStream ps = params_base.fork(static_cast<std::uint64_t>(i));
    std::array<BiquadSection, 3> secs;
    for (BiquadSection& s : secs) {
      double rho = ps.uniform(rr.rho_lo, rr.rho_hi);
      double phi = ps.uniform(rr.phi_lo, rr.phi_hi);
      s.b0 = ps.uniform(-1.0, 1.0);
      while (std::abs(s.b0) < 0.1) s.b0 = ps.uniform(-1.0, 1.0);
      s.b1 = ps.uniform(-1.0, 1.0);
      s.b2 = ps.uniform(-1.0, 1.0);
      s.a1 = 2.0 * rho * std::cos(phi);
      s.a2 = -rho * rho;
    }
    const double* x = forcing.data() + static_cast<std::size_t>(i) * T;
    std::vector<double> y(T);
    biquad_cascade_recursion({x, static_cast<std::size_t>(T)}, secs, y);
    for (int t = 0; t < T; ++t) {
      double* in = batch.inputs.row(i, t);
      in[0] = x[t];
      for (int s = 0; s < 3; ++s) {
        in[1 + 5 * s + 0] = secs[s].b0;
        in[1 + 5 * s + 1] = secs[s].b1;
        in[1 + 5 * s + 2] = secs[s].b2;
        in[1 + 5 * s + 3] = secs[s].a1;
        in[1 + 5 * s + 4] = secs[s].a2;
      }
      batch.targets.at(i, t, 0) = y[t];
    }
  }
  batch.validate();
  return batch;
}

TrajectoryBatch gen_narx(const TaskSpec& spec, const RngStream& rng) {
  spec.validate();
  if (spec.family != TaskFamily::NarxScalar) {
    throw std::invalid_argument("gen_narx: wrong family");
  }
  const int n = spec.n_traj, T = spec.T;
  std::vector<double> forcing = gen_forcing(spec.forcing, n, T, rng.fork(kForcingSalt));
  RngStream params_base = rng.fork(kParamSalt);

  TrajectoryBatch batch;
  batch.inputs = Tensor3(n, T, 1);
  batch.targets = Tensor3(n, T, 1);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    RngStream ps = params_base.fork(static_cast<std::uint64_t>(i));
    NarxParams p;
    p.a1 = ps.uniform(0.2, 0.6);
    p.a2 = ps.uniform(-0.3, 0.1);
    p.gain = ps.uniform(0.15, 0.45);
    const double* x = forcing.data() + static_cast<std::size_t>(i) * T;
    std::vector<double> y(T);
    narx_recursion({x, static_cast<std::size_t>(T)}, p, y);
    for (int t = 0; t < T; ++t) {
      batch.inputs.at(i, t, 0) = x[t];
      batch.targets.at(i, t, 0) = y[t];
    }
  }
  batch.validate();
  return batch;
}

TrajectoryBatch generate(const TaskSpec& spec) {
  RngStream rng(spec.seed, "datagen/" + family_name(spec.family));
  switch (spec.family) {
    case TaskFamily::ResonantArma: return gen_resonant_arma(spec, rng);
    case TaskFamily::IirCascade6: return gen_iir_cascade(spec, rng);
    case TaskFamily::NarxScalar: return gen_narx(spec, rng);
  }
  throw std::logic_error("generate: bad enum");
}

std::array<std::pair<double, double>, 5> difficulty_bins() {
  return {{{0.90, 0.93}, {0.93, 0.96}, {0.96, 0.98}, {0.98, 0.99}, {0.99, 0.995}}};
}

double memory_horizon(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::domain_error("memory_horizon: rho must be in (0, 1)");
  }
  return -1.0 / std::log(rho);
}

std::string task_spec_to_json(const TaskSpec& spec) {
  nlohmann::json j;
  j["family"] = family_name(spec.family);
  j["rho_range"] = {spec.rho_lo, spec.rho_hi};
  j["phi_range"] = {spec.phi_lo, spec.phi_hi};
  j["n_traj"] = spec.n_traj;
  j["T"] = spec.T;
  j["seed"] = spec.seed;
  j["forcing"] = {{"kind", "colored_ar1"},
                  {"ar_coeff", spec.forcing.ar_coeff},
                  {"normalize", spec.forcing.normalize}};
  return j.dump(2);
}

TaskSpec task_spec_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TaskSpec spec;
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.rho_lo = j.at("rho_range").at(0).get<double>();
  spec.rho_hi = j.at("rho_range").at(1).get<double>();
  spec.phi_lo = j.at("phi_range").at(0).get<double>();
  spec.phi_hi = j.at("phi_range").at(1).get<double>();
  spec.n_traj = j.at("n_traj").get<int>();
  spec.T = j.at("T").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  const auto& f = j.at("forcing");
  if (f.at("kind").get<std::string>() != "colored_ar1") {
    throw std::invalid_argument("task spec: unknown forcing kind");
  }
  spec.forcing.ar_coeff = f.at("ar_coeff").get<double>();
  spec.forcing.normalize = f.at("normalize").get<bool>();
  return spec;
}

void save_task_spec(const TaskSpec& spec, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_task_spec: cannot open " + path);
  f << task_spec_to_json(spec) << "\n";
}

TaskSpec load_task_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_task_spec: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return task_spec_from_json(ss.str());
}

}  // namespace zno
