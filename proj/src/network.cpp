#include "zno/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"

namespace zno {

namespace {

const char* pole_mode_name(PoleMode m) {
  return m == PoleMode::ZPlane ? "z" : "s_iso";
}
PoleMode pole_mode_from(const std::string& s) {
  if (s == "z") return PoleMode::ZPlane;
  if (s == "s_iso" || s == "s-iso") return PoleMode::SPlaneIso;
  throw std::invalid_argument("unknown pole_mode: " + s);
}
const char* scan_mode_name(ScanMode m) {
  return m == ScanMode::SaveHistory ? "save_history" : "recompute";
}
ScanMode scan_mode_from(const std::string& s) {
  if (s == "save_history") return ScanMode::SaveHistory;
  if (s == "recompute") return ScanMode::Recompute;
  throw std::invalid_argument("unknown scan_mode: " + s);
}
const char* dtype_name(ScanDtype d) { return d == ScanDtype::F64 ? "f64" : "f32"; }
ScanDtype dtype_from(const std::string& s) {
  if (s == "f64") return ScanDtype::F64;
  if (s == "f32") return ScanDtype::F32;
  throw std::invalid_argument("unknown dtype: " + s);
}

// pointwise affine out = W x + b over [B x T x in] -> [B x T x out]
void affine_forward(const ParamStore& store, int idW, int idb, int in, int out,
                    const Tensor3& x, Tensor3& y) {
  auto W = store.values(idW);
  auto b = store.values(idb);
  y = Tensor3(x.B, x.T, out);
#pragma omp parallel for schedule(static)
  for (int bb = 0; bb < x.B; ++bb) {
    for (int t = 0; t < x.T; ++t) {
      const double* xr = x.row(bb, t);
      double* yr = y.row(bb, t);
      for (int o = 0; o < out; ++o) {
        const double* wr = W.data() + static_cast<std::size_t>(o) * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
  }
}

// accumulates W/b grads (batch-ordered reduction) and optionally writes x_bar
void affine_backward(ParamStore& store, int idW, int idb, int in, int out,
                     const Tensor3& x, const Tensor3& y_bar, Tensor3* x_bar) {
  auto W = store.values(idW);
  const int B = x.B, T = x.T;
  std::vector<double> pw(static_cast<std::size_t>(B) * out * in, 0.0);
  std::vector<double> pb(static_cast<std::size_t>(B) * out, 0.0);
  if (x_bar) *x_bar = Tensor3(B, T, in);
#pragma omp parallel for schedule(static)
  for (int bb = 0; bb < B; ++bb) {
    double* pwb = pw.data() + static_cast<std::size_t>(bb) * out * in;
    double* pbb = pb.data() + static_cast<std::size_t>(bb) * out;
    for (int t = 0; t < T; ++t) {
      const double* g = y_bar.row(bb, t);
      const double* xr = x.row(bb, t);
      for (int o = 0; o < out; ++o) {
        pbb[o] += g[o];
        double* row = pwb + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) row[i] += g[o] * xr[i];
      }
      if (x_bar) {
        double* xb = x_bar->row(bb, t);
        for (int i = 0; i < in; ++i) {
          double acc = 0.0;
          for (int o = 0; o < out; ++o) acc += W[static_cast<std::size_t>(o) * in + i] * g[o];
          xb[i] = acc;
        }
      }
    }
  }
  auto gW = store.grads(idW);
  auto gb = store.grads(idb);
  for (int bb = 0; bb < B; ++bb) {
    const double* pwb = pw.data() + static_cast<std::size_t>(bb) * out * in;
    const double* pbb = pb.data() + static_cast<std::size_t>(bb) * out;
    for (int i = 0; i < out * in; ++i) gW[i] += pwb[i];
    for (int o = 0; o < out; ++o) gb[o] += pbb[o];
  }
}

void affine_init(ParamStore& store, int idW, int idb, int in, RngStream rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& x : store.values(idW)) x = rng.uniform(-bound, bound);
  for (double& x : store.values(idb)) x = rng.uniform(-bound, bound);
}

void gelu_apply(const Tensor3& x, Tensor3& y) {
  y = Tensor3(x.B, x.T, x.C);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < x.B; ++b) {
    const double* xr = x.row(b, 0);
    double* yr = y.row(b, 0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(x.T) * x.C; ++i) {
      yr[i] = gelu(xr[i]);
    }
  }
}

void gelu_backward(const Tensor3& x, const Tensor3& y_bar, Tensor3& x_bar) {
  x_bar = Tensor3(x.B, x.T, x.C);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < x.B; ++b) {
    const double* xr = x.row(b, 0);
    const double* gr = y_bar.row(b, 0);
    double* xb = x_bar.row(b, 0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(x.T) * x.C; ++i) {
      xb[i] = gr[i] * gelu_grad(xr[i]);
    }
  }
}

}  // namespace

void ZnoConfig::validate() const {
  if (w < 1 || L < 1 || r < 1 || K < 1 || F < 0 || d_u < 1 || d_y < 1 || proj_hidden < 1) {
    throw std::invalid_argument("ZnoConfig: dimensions must be positive (F >= 0)");
  }
  if (r > w) {
    std::cerr << "warning: rank r=" << r << " exceeds width w=" << w << "\n";
  }
}

std::string ZnoConfig::to_json() const {
  nlohmann::json j;
  j["w"] = w;
  j["L"] = L;
  j["r"] = r;
  j["K"] = K;
  j["F"] = F;
  j["d_u"] = d_u;
  j["d_y"] = d_y;
  j["pole_mode"] = pole_mode_name(pole_mode);
  j["proj_hidden"] = proj_hidden;
  j["scan_mode"] = scan_mode_name(scan_mode);
  j["dtype"] = dtype_name(dtype);
  return j.dump();
}

ZnoConfig ZnoConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ZnoConfig c;
  c.w = j.at("w").get<int>();
  c.L = j.at("L").get<int>();
  c.r = j.at("r").get<int>();
  c.K = j.at("K").get<int>();
  c.F = j.at("F").get<int>();
  c.d_u = j.at("d_u").get<int>();
  c.d_y = j.at("d_y").get<int>();
  if (j.contains("pole_mode")) c.pole_mode = pole_mode_from(j.at("pole_mode").get<std::string>());
  if (j.contains("proj_hidden")) c.proj_hidden = j.at("proj_hidden").get<int>();
  if (j.contains("scan_mode")) c.scan_mode = scan_mode_from(j.at("scan_mode").get<std::string>());
  if (j.contains("dtype")) c.dtype = dtype_from(j.at("dtype").get<std::string>());
  return c;
}

long long count_params(const ZnoConfig& cfg) {
  long long w = cfg.w, L = cfg.L, r = cfg.r, K = cfg.K, F = cfg.F;
  long long layer = 2 * r * w + w * w + w + 2 * K * r + (F > 0 ? r * (F + 1) : 0);
  long long lift = static_cast<long long>(cfg.d_u) * w + w;
  long long proj = w * cfg.proj_hidden + cfg.proj_hidden +
                   static_cast<long long>(cfg.proj_hidden) * cfg.d_y + cfg.d_y;
  return L * layer + lift + proj;
}

ZnoModel::ZnoModel(const ZnoConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  lift_W_ = store_.add("lift.W", static_cast<std::size_t>(cfg.w) * cfg.d_u, {cfg.w, cfg.d_u});
  lift_b_ = store_.add("lift.b", cfg.w, {cfg.w});
  layers_.reserve(cfg.L);
  for (int l = 0; l < cfg.L; ++l) {
    layers_.emplace_back(store_, "layer" + std::to_string(l), cfg.w, cfg.r,
                         cfg.K, cfg.F, cfg.pole_mode, cfg.dtype);
  }
  p1_W_ = store_.add("proj1.W", static_cast<std::size_t>(cfg.proj_hidden) * cfg.w,
                     {cfg.proj_hidden, cfg.w});
  p1_b_ = store_.add("proj1.b", cfg.proj_hidden, {cfg.proj_hidden});
  p2_W_ = store_.add("proj2.W", static_cast<std::size_t>(cfg.d_y) * cfg.proj_hidden,
                     {cfg.d_y, cfg.proj_hidden});
  p2_b_ = store_.add("proj2.b", cfg.d_y, {cfg.d_y});
  store_.freeze();
  if (static_cast<long long>(store_.size()) != count_params(cfg_)) {
    throw std::logic_error("ZnoModel: parameter layout does not match count_params");
  }
}

void ZnoModel::init_params(std::uint64_t seed) {
  RngStream rng(seed, "init");
  affine_init(store_, lift_W_, lift_b_, cfg_.d_u, rng.fork(0));
  for (int l = 0; l < cfg_.L; ++l) {
    layers_[l].init(rng.fork(100 + static_cast<std::uint64_t>(l)));
  }
  affine_init(store_, p1_W_, p1_b_, cfg_.w, rng.fork(1));
  affine_init(store_, p2_W_, p2_b_, cfg_.proj_hidden, rng.fork(2));
}

Tensor3 ZnoModel::forward(const Tensor3& u, ForwardTrace* trace) const {
  if (u.C != cfg_.d_u) throw std::invalid_argument("ZnoModel::forward: d_u mismatch");
  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  // inference calls can drop the state history
  ScanMode mode = trace ? cfg_.scan_mode : ScanMode::Recompute;

  affine_forward(store_, lift_W_, lift_b_, cfg_.d_u, cfg_.w, u, tr.h0);
  tr.pre.resize(cfg_.L);
  tr.act.resize(cfg_.L);
  tr.scan.assign(cfg_.L, LayerTrace{});
  const Tensor3* cur = &tr.h0;
  for (int l = 0; l < cfg_.L; ++l) {
    layers_[l].forward(*cur, mode, tr.scan[l], tr.pre[l]);
    gelu_apply(tr.pre[l], tr.act[l]);
    cur = &tr.act[l];
  }
  affine_forward(store_, p1_W_, p1_b_, cfg_.w, cfg_.proj_hidden, *cur, tr.z1);
  gelu_apply(tr.z1, tr.a1);
  Tensor3 out;
  affine_forward(store_, p2_W_, p2_b_, cfg_.proj_hidden, cfg_.d_y, tr.a1, out);
  return out;
}

void ZnoModel::backward(const Tensor3& u, const ForwardTrace& trace,
                        const Tensor3& out_grad) {
  if (trace.pre.size() != static_cast<std::size_t>(cfg_.L)) {
    throw std::logic_error("ZnoModel::backward: forward trace missing");
  }
  Tensor3 a1_bar;
  affine_backward(store_, p2_W_, p2_b_, cfg_.proj_hidden, cfg_.d_y, trace.a1,
                  out_grad, &a1_bar);
  Tensor3 z1_bar;
  gelu_backward(trace.z1, a1_bar, z1_bar);
  const Tensor3& hL = cfg_.L > 0 ? trace.act[cfg_.L - 1] : trace.h0;
  Tensor3 g;
  affine_backward(store_, p1_W_, p1_b_, cfg_.w, cfg_.proj_hidden, hL, z1_bar, &g);
  for (int l = cfg_.L - 1; l >= 0; --l) {
    Tensor3 pre_bar;
    gelu_backward(trace.pre[l], g, pre_bar);
    const Tensor3& input = l == 0 ? trace.h0 : trace.act[l - 1];
    Tensor3 h_bar;
    layers_[l].backward(input, trace.scan[l], pre_bar, h_bar);
    g = std::move(h_bar);
  }
  affine_backward(store_, lift_W_, lift_b_, cfg_.d_u, cfg_.w, u, g, nullptr);
}

std::vector<PoleRow> ZnoModel::export_poles() const {
  std::vector<PoleRow> rows;
  for (int l = 0; l < cfg_.L; ++l) {
    const RationalLayer& layer = layers_[l];
    ConstrainedPoles cp = layer.constrained();
    auto res = layer.residues();
    const int Kc = layer.Kc();
    for (int a = 0; a < layer.r(); ++a) {
      for (int k = 0; k < Kc; ++k) {
        int i = a * Kc + k;
        rows.push_back({l, a, cp.p_re[i], cp.p_im[i],
                        std::hypot(res[2 * i], res[2 * i + 1])});
      }
      if (layer.has_real()) {
        rows.push_back({l, a, cp.p_real[a], 0.0,
                        std::abs(layer.residues_real()[a])});
      }
    }
  }
  return rows;
}

double ZnoModel::max_abs_pole() const {
  double m = 0.0;
  for (const RationalLayer& layer : layers_) m = std::max(m, layer.max_abs_pole());
  return m;
}

namespace {
constexpr char kCkptMagic[8] = {'Z', 'N', 'O', 'C', 'K', 'P', 'T', '1'};
}

void ZnoModel::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kCkptMagic, sizeof(kCkptMagic));
  std::string cfg = cfg_.to_json();
  std::uint32_t len = static_cast<std::uint32_t>(cfg.size());
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(cfg.data(), len);
  std::uint64_t n = store_.size();
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  f.write(reinterpret_cast<const char*>(store_.values().data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw std::runtime_error("save_checkpoint: write failed");
}

std::unique_ptr<ZnoModel> ZnoModel::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCkptMagic, sizeof(kCkptMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic");
  }
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string cfg(len, '\0');
  f.read(cfg.data(), len);
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  auto model = std::make_unique<ZnoModel>(ZnoConfig::from_json(cfg));
  if (model->store_.size() != n) throw std::runtime_error("load_checkpoint: size mismatch");
  f.read(reinterpret_cast<char*>(model->store_.values().data()),
         static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw std::runtime_error("load_checkpoint: truncated file");
  return model;
}

void export_poles_csv(const ZnoModel& model, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_poles_csv: cannot open " + path);
  f << "layer,channel,re_p,im_p,abs_residue\n";
  f.precision(17);
  for (const PoleRow& row : model.export_poles()) {
    f << row.layer << "," << row.channel << "," << row.re << "," << row.im
      << "," << row.abs_residue << "\n";
  }
}

}  // namespace zno
