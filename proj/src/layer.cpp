#include "zno/layer.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace zno {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

constexpr double kSoftplusFloor = 1e-12;  // keeps exp(-softplus) < 1 in f64

// sigmoid rounds to 1.0 in f64 once x > ~37; keep the radius strictly
// below the ceiling anyway
double constrained_radius(double rho_tilde) {
  double rho = kRhoMax * sigmoid(rho_tilde);
  if (rho >= kRhoMax) rho = std::nextafter(kRhoMax, 0.0);
  return rho;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) * 0.39894228040143268;
  return cdf + x * pdf;
}

ConstrainedPoles constrain_poles(const PoleBank& bank) {
  const int n = bank.r * bank.Kc();
  ConstrainedPoles out;
  out.p_re.resize(n);
  out.p_im.resize(n);
  if (bank.mode == PoleMode::ZPlane) {
    for (int i = 0; i < n; ++i) {
      double rho = constrained_radius(bank.rho_tilde[i]);
      out.p_re[i] = rho * std::cos(bank.phi[i]);
      out.p_im[i] = rho * std::sin(bank.phi[i]);
    }
    if (bank.has_real()) {
      out.p_real.resize(bank.r);
      for (int a = 0; a < bank.r; ++a) {
        out.p_real[a] = constrained_radius(bank.rho_tilde_real[a]);
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      double sp = std::max(softplus(bank.rho_tilde[i]), kSoftplusFloor);
      double rho = std::exp(-sp);
      out.p_re[i] = rho * std::cos(bank.phi[i]);
      out.p_im[i] = rho * std::sin(bank.phi[i]);
    }
    if (bank.has_real()) {
      out.p_real.resize(bank.r);
      for (int a = 0; a < bank.r; ++a) {
        double sp = std::max(softplus(bank.rho_tilde_real[a]), kSoftplusFloor);
        out.p_real[a] = std::exp(-sp);
      }
    }
  }
  return out;
}

void constrain_poles_backward(const PoleBank& bank, const double* gp_re,
                              const double* gp_im, const double* gp_real,
                              std::span<double> g_rho_tilde,
                              std::span<double> g_phi,
                              std::span<double> g_rho_tilde_real) {
  const int n = bank.r * bank.Kc();
  if (bank.mode == PoleMode::ZPlane) {
    for (int i = 0; i < n; ++i) {
      double s = sigmoid(bank.rho_tilde[i]);
      double rho = kRhoMax * s;
      double drho = kRhoMax * s * (1.0 - s);
      double c = std::cos(bank.phi[i]), sn = std::sin(bank.phi[i]);
      g_rho_tilde[i] += (gp_re[i] * c + gp_im[i] * sn) * drho;
      g_phi[i] += rho * (gp_im[i] * c - gp_re[i] * sn);
    }
    if (bank.has_real()) {
      for (int a = 0; a < bank.r; ++a) {
        double s = sigmoid(bank.rho_tilde_real[a]);
        g_rho_tilde_real[a] += gp_real[a] * kRhoMax * s * (1.0 - s);
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      double sp = std::max(softplus(bank.rho_tilde[i]), kSoftplusFloor);
      double rho = std::exp(-sp);
      double drho = -sigmoid(bank.rho_tilde[i]) * rho;
      double c = std::cos(bank.phi[i]), sn = std::sin(bank.phi[i]);
      g_rho_tilde[i] += (gp_re[i] * c + gp_im[i] * sn) * drho;
      g_phi[i] += rho * (gp_im[i] * c - gp_re[i] * sn);
    }
    if (bank.has_real()) {
      for (int a = 0; a < bank.r; ++a) {
        double sp = std::max(softplus(bank.rho_tilde_real[a]), kSoftplusFloor);
        double rho = std::exp(-sp);
        g_rho_tilde_real[a] += gp_real[a] * (-sigmoid(bank.rho_tilde_real[a]) * rho);
      }
    }
  }
}

RationalLayer::RationalLayer(ParamStore& store, const std::string& prefix,
                             int w, int r, int K, int F, PoleMode mode,
                             ScanDtype dtype)
    : store_(&store), w_(w), r_(r), K_(K), F_(F), mode_(mode), dtype_(dtype) {
  if (w < 1 || r < 1 || K < 1 || F < 0) {
    throw std::invalid_argument("RationalLayer: bad dimensions");
  }
  const int Kc = K / 2;
  id_bin_ = store.add(prefix + ".b_in", static_cast<std::size_t>(r) * w, {r, w});
  id_aout_ = store.add(prefix + ".a_out", static_cast<std::size_t>(w) * r, {w, r});
  id_wskip_ = store.add(prefix + ".w_skip", static_cast<std::size_t>(w) * w, {w, w});
  id_bias_ = store.add(prefix + ".bias", w, {w});
  id_rho_ = store.add(prefix + ".rho_tilde", static_cast<std::size_t>(r) * Kc, {r, Kc});
  id_phi_ = store.add(prefix + ".phi", static_cast<std::size_t>(r) * Kc, {r, Kc});
  id_rho_real_ = has_real() ? store.add(prefix + ".rho_tilde_real", r, {r}) : -1;
  id_res_ = store.add(prefix + ".residues", static_cast<std::size_t>(r) * Kc * 2, {r, Kc, 2});
  id_res_real_ = has_real() ? store.add(prefix + ".residues_real", r, {r}) : -1;
  id_fir_ = F > 0 ? store.add(prefix + ".fir", static_cast<std::size_t>(r) * (F + 1), {r, F + 1}) : -1;
}

std::span<double> RationalLayer::b_in() { return store_->values(id_bin_); }
std::span<double> RationalLayer::a_out() { return store_->values(id_aout_); }
std::span<double> RationalLayer::w_skip() { return store_->values(id_wskip_); }
std::span<double> RationalLayer::bias() { return store_->values(id_bias_); }
std::span<double> RationalLayer::residues() { return store_->values(id_res_); }
std::span<double> RationalLayer::residues_real() {
  return id_res_real_ >= 0 ? store_->values(id_res_real_) : std::span<double>{};
}
std::span<double> RationalLayer::fir_taps() {
  return id_fir_ >= 0 ? store_->values(id_fir_) : std::span<double>{};
}
std::span<double> RationalLayer::rho_tilde() { return store_->values(id_rho_); }
std::span<double> RationalLayer::phi_values() { return store_->values(id_phi_); }
std::span<double> RationalLayer::rho_tilde_real() {
  return id_rho_real_ >= 0 ? store_->values(id_rho_real_) : std::span<double>{};
}
std::span<const double> RationalLayer::b_in() const { return store_->values(id_bin_); }
std::span<const double> RationalLayer::a_out() const { return store_->values(id_aout_); }
std::span<const double> RationalLayer::w_skip() const { return store_->values(id_wskip_); }
std::span<const double> RationalLayer::bias() const { return store_->values(id_bias_); }
std::span<const double> RationalLayer::residues() const { return store_->values(id_res_); }
std::span<const double> RationalLayer::residues_real() const {
  return id_res_real_ >= 0 ? store_->values(id_res_real_) : std::span<const double>{};
}
std::span<const double> RationalLayer::fir_taps() const {
  return id_fir_ >= 0 ? store_->values(id_fir_) : std::span<const double>{};
}

std::size_t RationalLayer::param_count() const {
  std::size_t n = 0;
  for (int id : {id_bin_, id_aout_, id_wskip_, id_bias_, id_rho_, id_phi_,
                 id_rho_real_, id_res_, id_res_real_, id_fir_}) {
    if (id >= 0) n += store_->segment(id).size;
  }
  return n;
}

PoleBank RationalLayer::bank() const {
  PoleBank b;
  b.mode = mode_;
  b.r = r_;
  b.K = K_;
  b.rho_tilde = store_->values(id_rho_);
  b.phi = store_->values(id_phi_);
  if (id_rho_real_ >= 0) b.rho_tilde_real = store_->values(id_rho_real_);
  return b;
}

void RationalLayer::init(RngStream rng) {
  auto uniform_fill = [](std::span<double> dst, double bound, RngStream& s) {
    for (double& x : dst) x = s.uniform(-bound, bound);
  };
  RngStream mix = rng.fork(0);
  uniform_fill(b_in(), 1.0 / std::sqrt(static_cast<double>(w_)), mix);
  uniform_fill(a_out(), 1.0 / std::sqrt(static_cast<double>(r_)), mix);
  uniform_fill(w_skip(), 1.0 / std::sqrt(static_cast<double>(w_)), mix);
  uniform_fill(bias(), 1.0 / std::sqrt(static_cast<double>(w_)), mix);

  RngStream poles = rng.fork(1);
  auto rho_param = [&](double u) {
    if (mode_ == PoleMode::ZPlane) return u;
    // match the z-plane radius band: softplus(a) = -log(rho_max*sigmoid(u))
    double rho0 = kRhoMax * sigmoid(u);
    return std::log(1.0 / rho0 - 1.0);
  };
  const int Kc = K_ / 2;
  auto rt = rho_tilde();
  auto ph = phi_values();
  for (int a = 0; a < r_; ++a) {
    for (int k = 0; k < Kc; ++k) {
      double u = poles.uniform(1.0, 3.0);
      double jitter = poles.uniform();
      rt[a * Kc + k] = rho_param(u);
      ph[a * Kc + k] = M_PI * (k + jitter) / Kc;  // equispaced with jitter
    }
  }
  if (has_real()) {
    auto rtr = rho_tilde_real();
    for (int a = 0; a < r_; ++a) rtr[a] = rho_param(poles.uniform(1.0, 3.0));
  }

  RngStream res = rng.fork(2);
  double res_std = 1.0 / static_cast<double>(K_);
  for (double& x : residues()) x = res.normal() * res_std;
  if (has_real()) {
    for (double& x : residues_real()) x = res.normal() * res_std;
  }
  if (F_ > 0) {
    RngStream firs = rng.fork(3);
    for (double& x : fir_taps()) x = firs.normal() * 0.01;
  }
}

template <typename Real>
scan::Filters<Real> RationalLayer::filters() const {
  ConstrainedPoles cp = constrained();
  scan::Filters<Real> f;
  f.r = r_;
  f.Kc = K_ / 2;
  f.F = F_;
  f.has_real = has_real();
  const int n = r_ * f.Kc;
  f.p_re.resize(n);
  f.p_im.resize(n);
  f.c_re.resize(n);
  f.c_im.resize(n);
  auto res = residues();
  for (int i = 0; i < n; ++i) {
    f.p_re[i] = static_cast<Real>(cp.p_re[i]);
    f.p_im[i] = static_cast<Real>(cp.p_im[i]);
    f.c_re[i] = static_cast<Real>(res[2 * i]);
    f.c_im[i] = static_cast<Real>(res[2 * i + 1]);
  }
  if (f.has_real) {
    f.p_real.resize(r_);
    f.c_real.resize(r_);
    auto rr = residues_real();
    for (int a = 0; a < r_; ++a) {
      f.p_real[a] = static_cast<Real>(cp.p_real[a]);
      f.c_real[a] = static_cast<Real>(rr[a]);
    }
  }
  if (F_ > 0) {
    auto g = fir_taps();
    f.fir.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) f.fir[i] = static_cast<Real>(g[i]);
  }
  return f;
}

template scan::Filters<double> RationalLayer::filters<double>() const;
template scan::Filters<float> RationalLayer::filters<float>() const;

void RationalLayer::forward(const Tensor3& h, ScanMode mode, LayerTrace& trace,
                            Tensor3& out) const {
  if (h.C != w_) throw std::invalid_argument("RationalLayer::forward: channel mismatch");
  const int B = h.B, T = h.T;
  const int Kc = K_ / 2;
  out = Tensor3(B, T, w_);
  trace.mode = mode;
  trace.B = B;
  trace.T = T;
  trace.bq = Tensor3(B, T, r_);

  auto bin = b_in();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const double* hr = h.row(b, t);
      double* br = trace.bq.row(b, t);
      for (int a = 0; a < r_; ++a) {
        const double* wr = bin.data() + static_cast<std::size_t>(a) * w_;
        double acc = 0.0;
        for (int c = 0; c < w_; ++c) acc += wr[c] * hr[c];
        br[a] = acc;
      }
    }
  }

  Tensor3 q_all(B, T, r_);
  const std::size_t per_traj = static_cast<std::size_t>(T) * r_ * Kc;
  const std::size_t per_traj_real = static_cast<std::size_t>(T) * r_;

  auto run_forward = [&](auto filt, auto& hist_re, auto& hist_im, auto& hist_real,
                         auto& fin_re, auto& fin_im, auto& fin_real) {
    using Real = typename decltype(filt)::value_type;
    const bool save = mode == ScanMode::SaveHistory;
    if (save) {
      hist_re.assign(static_cast<std::size_t>(B) * per_traj, Real(0));
      hist_im.assign(static_cast<std::size_t>(B) * per_traj, Real(0));
      if (has_real()) hist_real.assign(static_cast<std::size_t>(B) * per_traj_real, Real(0));
    }
    fin_re.assign(static_cast<std::size_t>(B) * r_ * Kc, Real(0));
    fin_im.assign(static_cast<std::size_t>(B) * r_ * Kc, Real(0));
    if (has_real()) fin_real.assign(static_cast<std::size_t>(B) * r_, Real(0));
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
      std::vector<Real> bq_r(static_cast<std::size_t>(T) * r_);
      std::vector<Real> q_r(static_cast<std::size_t>(T) * r_);
      const double* src = trace.bq.row(b, 0);
      for (std::size_t i = 0; i < bq_r.size(); ++i) bq_r[i] = static_cast<Real>(src[i]);
      scan::forward_traj<Real>(
          T, filt.f, bq_r.data(), q_r.data(),
          save ? hist_re.data() + static_cast<std::size_t>(b) * per_traj : nullptr,
          save ? hist_im.data() + static_cast<std::size_t>(b) * per_traj : nullptr,
          save && has_real() ? hist_real.data() + static_cast<std::size_t>(b) * per_traj_real : nullptr,
          fin_re.data() + static_cast<std::size_t>(b) * r_ * Kc,
          fin_im.data() + static_cast<std::size_t>(b) * r_ * Kc,
          has_real() ? fin_real.data() + static_cast<std::size_t>(b) * r_ : nullptr);
      double* dst = q_all.row(b, 0);
      for (std::size_t i = 0; i < q_r.size(); ++i) dst[i] = static_cast<double>(q_r[i]);
    }
  };

  struct WrapD { using value_type = double; scan::Filters<double> f; };
  struct WrapF { using value_type = float; scan::Filters<float> f; };
  if (dtype_ == ScanDtype::F64) {
    run_forward(WrapD{filters<double>()}, trace.s_re, trace.s_im, trace.s_real,
                trace.fin_re, trace.fin_im, trace.fin_real);
  } else {
    run_forward(WrapF{filters<float>()}, trace.s_re32, trace.s_im32, trace.s_real32,
                trace.fin_re32, trace.fin_im32, trace.fin_real32);
  }

  auto aout = a_out();
  auto wsk = w_skip();
  auto bs = bias();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const double* qr = q_all.row(b, t);
      const double* hr = h.row(b, t);
      double* outr = out.row(b, t);
      for (int c = 0; c < w_; ++c) {
        const double* ar = aout.data() + static_cast<std::size_t>(c) * r_;
        const double* wr = wsk.data() + static_cast<std::size_t>(c) * w_;
        double acc = bs[c];
        for (int a = 0; a < r_; ++a) acc += ar[a] * qr[a];
        for (int c2 = 0; c2 < w_; ++c2) acc += wr[c2] * hr[c2];
        outr[c] = acc;
      }
    }
  }
}

void RationalLayer::backward(const Tensor3& h, const LayerTrace& trace,
                             const Tensor3& out_grad, Tensor3& h_grad) const {
  if (trace.B != h.B || trace.T != h.T) {
    throw std::logic_error("RationalLayer::backward: trace does not match input");
  }
  if (out_grad.B != h.B || out_grad.T != h.T || out_grad.C != w_) {
    throw std::invalid_argument("RationalLayer::backward: out_grad shape mismatch");
  }
  const int B = h.B, T = h.T;
  const int Kc = K_ / 2;
  const int nrk = r_ * Kc;
  const int nfir = F_ > 0 ? r_ * (F_ + 1) : 0;
  h_grad = Tensor3(B, T, w_);

  auto aout = a_out();
  auto bin = b_in();
  auto wsk = w_skip();

  // q_bar = A_out^T * out_grad
  Tensor3 q_bar(B, T, r_);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const double* og = out_grad.row(b, t);
      double* qb = q_bar.row(b, t);
      for (int a = 0; a < r_; ++a) {
        double acc = 0.0;
        for (int c = 0; c < w_; ++c) acc += aout[static_cast<std::size_t>(c) * r_ + a] * og[c];
        qb[a] = acc;
      }
    }
  }

  // per-trajectory partial gradients, reduced in batch order afterwards
  std::vector<double> pg_pre(static_cast<std::size_t>(B) * nrk, 0.0);
  std::vector<double> pg_pim(static_cast<std::size_t>(B) * nrk, 0.0);
  std::vector<double> pg_cre(static_cast<std::size_t>(B) * nrk, 0.0);
  std::vector<double> pg_cim(static_cast<std::size_t>(B) * nrk, 0.0);
  std::vector<double> pg_preal(static_cast<std::size_t>(B) * r_, 0.0);
  std::vector<double> pg_creal(static_cast<std::size_t>(B) * r_, 0.0);
  std::vector<double> pg_fir(static_cast<std::size_t>(B) * std::max(nfir, 1), 0.0);
  std::vector<double> pg_a(static_cast<std::size_t>(B) * w_ * r_, 0.0);
  std::vector<double> pg_w(static_cast<std::size_t>(B) * w_ * w_, 0.0);
  std::vector<double> pg_bias(static_cast<std::size_t>(B) * w_, 0.0);
  std::vector<double> pg_b(static_cast<std::size_t>(B) * r_ * w_, 0.0);
  Tensor3 bq_bar(B, T, r_);
  Tensor3 q_rec(B, T, r_);

  const std::size_t per_traj = static_cast<std::size_t>(T) * r_ * Kc;
  const std::size_t per_traj_real = static_cast<std::size_t>(T) * r_;

  auto run_backward = [&](auto filt, const auto* hist_re, const auto* hist_im,
                          const auto* hist_real) {
    using Real = typename decltype(filt)::value_type;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
      std::vector<Real> bq_r(static_cast<std::size_t>(T) * r_);
      std::vector<Real> qb_r(static_cast<std::size_t>(T) * r_);
      std::vector<Real> bb_r(static_cast<std::size_t>(T) * r_);
      std::vector<Real> qr_r(static_cast<std::size_t>(T) * r_);
      const double* bq_src = trace.bq.row(b, 0);
      const double* qb_src = q_bar.row(b, 0);
      for (std::size_t i = 0; i < bq_r.size(); ++i) {
        bq_r[i] = static_cast<Real>(bq_src[i]);
        qb_r[i] = static_cast<Real>(qb_src[i]);
      }
      std::vector<Real> gpre(nrk, Real(0)), gpim(nrk, Real(0));
      std::vector<Real> gcre(nrk, Real(0)), gcim(nrk, Real(0));
      std::vector<Real> gpreal(r_, Real(0)), gcreal(r_, Real(0));
      std::vector<Real> gfir(std::max(nfir, 1), Real(0));
      if (trace.mode == ScanMode::SaveHistory) {
        scan::backward_traj_history<Real>(
            T, filt.f, bq_r.data(), qb_r.data(),
            hist_re + static_cast<std::size_t>(b) * per_traj,
            hist_im + static_cast<std::size_t>(b) * per_traj,
            has_real() ? hist_real + static_cast<std::size_t>(b) * per_traj_real : nullptr,
            bb_r.data(), qr_r.data(), gpre.data(), gpim.data(), gcre.data(),
            gcim.data(), gpreal.data(), gcreal.data(), gfir.data());
      } else {
        scan::backward_traj_recompute<Real>(
            T, filt.f, bq_r.data(), qb_r.data(), bb_r.data(), qr_r.data(),
            gpre.data(), gpim.data(), gcre.data(), gcim.data(), gpreal.data(),
            gcreal.data(), gfir.data());
      }
      double* bb_dst = bq_bar.row(b, 0);
      double* qr_dst = q_rec.row(b, 0);
      for (std::size_t i = 0; i < bb_r.size(); ++i) {
        bb_dst[i] = static_cast<double>(bb_r[i]);
        qr_dst[i] = static_cast<double>(qr_r[i]);
      }
      for (int i = 0; i < nrk; ++i) {
        pg_pre[static_cast<std::size_t>(b) * nrk + i] = static_cast<double>(gpre[i]);
        pg_pim[static_cast<std::size_t>(b) * nrk + i] = static_cast<double>(gpim[i]);
        pg_cre[static_cast<std::size_t>(b) * nrk + i] = static_cast<double>(gcre[i]);
        pg_cim[static_cast<std::size_t>(b) * nrk + i] = static_cast<double>(gcim[i]);
      }
      for (int a = 0; a < r_; ++a) {
        pg_preal[static_cast<std::size_t>(b) * r_ + a] = static_cast<double>(gpreal[a]);
        pg_creal[static_cast<std::size_t>(b) * r_ + a] = static_cast<double>(gcreal[a]);
      }
      for (int i = 0; i < nfir; ++i) {
        pg_fir[static_cast<std::size_t>(b) * std::max(nfir, 1) + i] = static_cast<double>(gfir[i]);
      }

      // dense partials: A_out, W_skip, bias, B_in, and h_grad
      double* ga = pg_a.data() + static_cast<std::size_t>(b) * w_ * r_;
      double* gw = pg_w.data() + static_cast<std::size_t>(b) * w_ * w_;
      double* gb = pg_bias.data() + static_cast<std::size_t>(b) * w_;
      double* gbi = pg_b.data() + static_cast<std::size_t>(b) * r_ * w_;
      for (int t = 0; t < T; ++t) {
        const double* og = out_grad.row(b, t);
        const double* hr = h.row(b, t);
        const double* qr = q_rec.row(b, t);
        const double* bb = bq_bar.row(b, t);
        double* hg = h_grad.row(b, t);
        for (int c = 0; c < w_; ++c) {
          const double g = og[c];
          gb[c] += g;
          for (int a = 0; a < r_; ++a) ga[static_cast<std::size_t>(c) * r_ + a] += g * qr[a];
          for (int c2 = 0; c2 < w_; ++c2) gw[static_cast<std::size_t>(c) * w_ + c2] += g * hr[c2];
        }
        for (int c = 0; c < w_; ++c) {
          double acc = 0.0;
          for (int c2 = 0; c2 < w_; ++c2) acc += wsk[static_cast<std::size_t>(c2) * w_ + c] * og[c2];
          for (int a = 0; a < r_; ++a) acc += bin[static_cast<std::size_t>(a) * w_ + c] * bb[a];
          hg[c] = acc;
        }
        for (int a = 0; a < r_; ++a) {
          for (int c = 0; c < w_; ++c) gbi[static_cast<std::size_t>(a) * w_ + c] += bb[a] * hr[c];
        }
      }
    }
  };

  struct WrapD { using value_type = double; scan::Filters<double> f; };
  struct WrapF { using value_type = float; scan::Filters<float> f; };
  if (dtype_ == ScanDtype::F64) {
    run_backward(WrapD{filters<double>()}, trace.s_re.data(), trace.s_im.data(),
                 trace.s_real.data());
  } else {
    run_backward(WrapF{filters<float>()}, trace.s_re32.data(), trace.s_im32.data(),
                 trace.s_real32.data());
  }

  // ordered reduction keeps results independent of thread count
  std::vector<double> gp_re(nrk, 0.0), gp_im(nrk, 0.0);
  std::vector<double> gp_real(r_, 0.0);
  auto g_res = store_->grads(id_res_);
  auto g_a = store_->grads(id_aout_);
  auto g_w = store_->grads(id_wskip_);
  auto g_bias = store_->grads(id_bias_);
  auto g_b = store_->grads(id_bin_);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < nrk; ++i) {
      gp_re[i] += pg_pre[static_cast<std::size_t>(b) * nrk + i];
      gp_im[i] += pg_pim[static_cast<std::size_t>(b) * nrk + i];
      g_res[2 * i] += pg_cre[static_cast<std::size_t>(b) * nrk + i];
      g_res[2 * i + 1] += pg_cim[static_cast<std::size_t>(b) * nrk + i];
    }
    if (has_real()) {
      auto g_rr = store_->grads(id_res_real_);
      for (int a = 0; a < r_; ++a) {
        gp_real[a] += pg_preal[static_cast<std::size_t>(b) * r_ + a];
        g_rr[a] += pg_creal[static_cast<std::size_t>(b) * r_ + a];
      }
    }
    if (F_ > 0) {
      auto g_fir = store_->grads(id_fir_);
      for (int i = 0; i < nfir; ++i) {
        g_fir[i] += pg_fir[static_cast<std::size_t>(b) * std::max(nfir, 1) + i];
      }
    }
    for (int i = 0; i < w_ * r_; ++i) g_a[i] += pg_a[static_cast<std::size_t>(b) * w_ * r_ + i];
    for (int i = 0; i < w_ * w_; ++i) g_w[i] += pg_w[static_cast<std::size_t>(b) * w_ * w_ + i];
    for (int i = 0; i < w_; ++i) g_bias[i] += pg_bias[static_cast<std::size_t>(b) * w_ + i];
    for (int i = 0; i < r_ * w_; ++i) g_b[i] += pg_b[static_cast<std::size_t>(b) * r_ * w_ + i];
  }

  constrain_poles_backward(
      bank(), gp_re.data(), gp_im.data(), has_real() ? gp_real.data() : nullptr,
      store_->grads(id_rho_), store_->grads(id_phi_),
      has_real() ? store_->grads(id_rho_real_) : std::span<double>{});
}

std::vector<std::complex<double>> RationalLayer::transfer(
    std::complex<double> z) const {
  ConstrainedPoles cp = constrained();
  double maxp = max_abs_pole();
  if (std::abs(z) <= maxp) {
    throw std::domain_error("transfer: |z| inside region-of-convergence boundary");
  }
  const int Kc = K_ / 2;
  const std::complex<double> zinv = 1.0 / z;
  auto res = residues();
  std::vector<std::complex<double>> G(r_, 0.0);
  for (int a = 0; a < r_; ++a) {
    std::complex<double> acc = 0.0;
    for (int k = 0; k < Kc; ++k) {
      int i = a * Kc + k;
      std::complex<double> p(cp.p_re[i], cp.p_im[i]);
      std::complex<double> c(res[2 * i], res[2 * i + 1]);
      acc += c / (1.0 - p * zinv) + std::conj(c) / (1.0 - std::conj(p) * zinv);
    }
    if (has_real()) {
      acc += std::complex<double>(residues_real()[a]) / (1.0 - cp.p_real[a] * zinv);
    }
    if (F_ > 0) {
      auto g = fir_taps();
      std::complex<double> zp = 1.0;
      for (int j = 0; j <= F_; ++j) {
        acc += g[a * (F_ + 1) + j] * zp;
        zp *= zinv;
      }
    }
    G[a] = acc;
  }
  std::vector<std::complex<double>> H(static_cast<std::size_t>(w_) * w_, 0.0);
  auto A = a_out();
  auto Bm = b_in();
  for (int i = 0; i < w_; ++i) {
    for (int j = 0; j < w_; ++j) {
      std::complex<double> acc = 0.0;
      for (int a = 0; a < r_; ++a) {
        acc += A[static_cast<std::size_t>(i) * r_ + a] * G[a] *
               Bm[static_cast<std::size_t>(a) * w_ + j];
      }
      H[static_cast<std::size_t>(i) * w_ + j] = acc;
    }
  }
  return H;
}

double RationalLayer::max_abs_pole() const {
  ConstrainedPoles cp = constrained();
  double m = 0.0;
  for (std::size_t i = 0; i < cp.p_re.size(); ++i) {
    m = std::max(m, std::hypot(cp.p_re[i], cp.p_im[i]));
  }
  for (double p : cp.p_real) m = std::max(m, std::abs(p));
  return m;
}

double RationalLayer::pole_safety_sum(double rho_safe) const {
  ConstrainedPoles cp = constrained();
  double s = 0.0;
  for (std::size_t i = 0; i < cp.p_re.size(); ++i) {
    double h = std::max(std::hypot(cp.p_re[i], cp.p_im[i]) - rho_safe, 0.0);
    s += 2.0 * h * h;  // both poles of the pair share the modulus
  }
  for (double p : cp.p_real) {
    double h = std::max(std::abs(p) - rho_safe, 0.0);
    s += h * h;
  }
  return s;
}

void RationalLayer::pole_safety_backward(double rho_safe, double coeff) const {
  PoleBank b = bank();
  ConstrainedPoles cp = constrain_poles(b);
  auto g_rho = store_->grads(id_rho_);
  const int n = b.r * b.Kc();
  for (int i = 0; i < n; ++i) {
    double rho = std::hypot(cp.p_re[i], cp.p_im[i]);
    double h = rho - rho_safe;
    if (h <= 0.0) continue;
    double dmod;  // d|p| / d(stored radius parameter)
    if (mode_ == PoleMode::ZPlane) {
      double s = sigmoid(b.rho_tilde[i]);
      dmod = kRhoMax * s * (1.0 - s);
    } else {
      dmod = -sigmoid(b.rho_tilde[i]) * rho;
    }
    g_rho[i] += coeff * 4.0 * h * dmod;
  }
  if (has_real()) {
    auto g_rho_real = store_->grads(id_rho_real_);
    for (int a = 0; a < b.r; ++a) {
      double rho = std::abs(cp.p_real[a]);
      double h = rho - rho_safe;
      if (h <= 0.0) continue;
      double dmod;
      if (mode_ == PoleMode::ZPlane) {
        double s = sigmoid(b.rho_tilde_real[a]);
        dmod = kRhoMax * s * (1.0 - s);
      } else {
        dmod = -sigmoid(b.rho_tilde_real[a]) * rho;
      }
      g_rho_real[a] += coeff * 2.0 * h * dmod;
    }
  }
}

}  // namespace zno
