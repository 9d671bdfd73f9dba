#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zno/param_store.hpp"
#include "zno/rng.hpp"
#include "zno/scan.hpp"
#include "zno/tensor.hpp"

namespace zno {

enum class PoleMode { ZPlane, SPlaneIso };
enum class ScanMode { SaveHistory, Recompute };
enum class ScanDtype { F64, F32 };

inline constexpr double kRhoMax = 0.999;

// Unconstrained pole parameters for one layer (view into a ParamStore).
// ZPlane:    p = rho_max * sigmoid(rho_tilde) * exp(i*phi)
// SPlaneIso: mu = -softplus(alpha_tilde) + i*omega, p = exp(mu), dt = 1
//            (rho_tilde/phi hold alpha_tilde/omega in this mode)
struct PoleBank {
  PoleMode mode = PoleMode::ZPlane;
  int r = 0, K = 0;
  std::span<const double> rho_tilde;       // [r*Kc]
  std::span<const double> phi;             // [r*Kc]
  std::span<const double> rho_tilde_real;  // [r] iff K odd

  int Kc() const { return K / 2; }
  bool has_real() const { return K % 2 == 1; }
};

struct ConstrainedPoles {
  std::vector<double> p_re, p_im;  // [r*Kc]
  std::vector<double> p_real;      // [r] iff K odd
};

ConstrainedPoles constrain_poles(const PoleBank& bank);

// Chain rule from gradients w.r.t. the constrained complex poles (packed as
// d/d Re p + i d/d Im p) back to the stored unconstrained parameters.
void constrain_poles_backward(const PoleBank& bank, const double* gp_re,
                              const double* gp_im, const double* gp_real,
                              std::span<double> g_rho_tilde,
                              std::span<double> g_phi,
                              std::span<double> g_rho_tilde_real);

// Scan workspace retained by forward for the matching backward call.
// SaveHistory keeps every state (memory grows with T); Recompute keeps only
// the final state and reruns the forward scan inside backward.
struct LayerTrace {
  ScanMode mode = ScanMode::SaveHistory;
  int B = 0, T = 0;
  Tensor3 bq;  // [B][T][r] latent drive
  std::vector<double> s_re, s_im;    // [B][T][r][Kc] (SaveHistory, f64)
  std::vector<double> s_real;        // [B][T][r]
  std::vector<double> fin_re, fin_im, fin_real;
  std::vector<float> s_re32, s_im32, s_real32;  // f32 twins
  std::vector<float> fin_re32, fin_im32, fin_real32;
};

// One residual rational layer: out = A_out * q + W_skip * h + bias, where q
// is the per-latent-channel pole-residue readout of b = B_in * h.
class RationalLayer {
 public:
  RationalLayer(ParamStore& store, const std::string& prefix, int w, int r,
                int K, int F, PoleMode mode, ScanDtype dtype = ScanDtype::F64);

  void init(RngStream rng);

  void forward(const Tensor3& h, ScanMode mode, LayerTrace& trace,
               Tensor3& out) const;

  // Accumulates parameter gradients into the store; writes h_grad.
  void backward(const Tensor3& h, const LayerTrace& trace,
                const Tensor3& out_grad, Tensor3& h_grad) const;

  // Dynamic-branch transfer matrix A * diag(G_1..G_r) * B at z (skip
  // excluded). Throws if |z| is at or inside the largest pole modulus.
  std::vector<std::complex<double>> transfer(std::complex<double> z) const;

  PoleBank bank() const;
  ConstrainedPoles constrained() const { return constrain_poles(bank()); }
  double max_abs_pole() const;

  // sum over this layer's K*r pole slots of max(|p|-rho_safe, 0)^2; a
  // conjugate pair counts as two slots
  double pole_safety_sum(double rho_safe) const;
  // accumulates coeff * d(pole_safety_sum)/d(params) into the store grads
  void pole_safety_backward(double rho_safe, double coeff) const;

  int w() const { return w_; }
  int r() const { return r_; }
  int K() const { return K_; }
  int F() const { return F_; }
  int Kc() const { return K_ / 2; }
  bool has_real() const { return K_ % 2 == 1; }
  PoleMode mode() const { return mode_; }
  ScanDtype dtype() const { return dtype_; }
  std::size_t param_count() const;

  std::span<double> b_in();
  std::span<double> a_out();
  std::span<double> w_skip();
  std::span<double> bias();
  std::span<double> residues();       // [r*Kc*2] interleaved (re, im)
  std::span<double> residues_real();  // [r] iff K odd
  std::span<double> fir_taps();       // [r*(F+1)] iff F > 0
  std::span<double> rho_tilde();
  std::span<double> phi_values();
  std::span<double> rho_tilde_real();
  std::span<const double> b_in() const;
  std::span<const double> a_out() const;
  std::span<const double> w_skip() const;
  std::span<const double> bias() const;
  std::span<const double> residues() const;
  std::span<const double> residues_real() const;
  std::span<const double> fir_taps() const;

  template <typename Real>
  scan::Filters<Real> filters() const;

 private:
  ParamStore* store_;
  int w_, r_, K_, F_;
  PoleMode mode_;
  ScanDtype dtype_;
  int id_bin_, id_aout_, id_wskip_, id_bias_;
  int id_rho_, id_phi_, id_rho_real_;
  int id_res_, id_res_real_, id_fir_;
};

double gelu(double x);
double gelu_grad(double x);

}  // namespace zno
