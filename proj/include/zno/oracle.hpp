#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "zno/layer.hpp"
#include "zno/param_store.hpp"
#include "zno/tensor.hpp"

namespace zno {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0, numeric = 0.0;
};

// Central-difference check of an analytic gradient over every coordinate of
// the store. value_fn evaluates the scalar at the current parameters;
// grad_fn must zero and then fill the analytic gradient. Relative error uses
// denominator max(|analytic|, |numeric|, 1e-12).
GradCheckResult gradcheck(const std::function<double()>& value_fn,
                          const std::function<void()>& grad_fn,
                          ParamStore& store, double step = 1e-6);

// First n with |c| * |p|^n below tol (the kept response covers 0..n-1).
int mode_truncation_length(double c_abs, double p_abs, double tol = 1e-16);

// Truncated-impulse-response convolution reference for one trajectory
// [T x w]. Rebuilds the constrained poles and the latent impulse responses
// with its own arithmetic (no scan code) and convolves directly; includes
// the skip and bias so the result is directly comparable to layer_forward.
Tensor3 conv_oracle(const RationalLayer& layer, const Tensor3& input);

struct FftOracleResult {
  double max_err = 0.0;      // max |DFT(impulse response) - transfer(z_m)|
  double max_bound = 0.0;    // largest per-entry truncation tail bound
  double max_excess = 0.0;   // max over entries of err - bound
};

// Drives the layer's own scan with unit impulses, removes the skip/bias
// contribution, DFTs the branch response with a local radix-2 FFT, and
// compares against transfer() on the unit circle. T must be a power of two.
FftOracleResult fft_oracle(const RationalLayer& layer, int T);

// Radix-2 iterative FFT, X_m = sum_n x_n exp(-2*pi*i*m*n/N).
void fft_radix2(std::vector<std::complex<double>>& x);

// Pinned verification suites shared by the CLI and the acceptance runner.

struct ObjectiveCheck {
  int w, K, F, d_u;
  std::uint64_t seed;
  double max_rel_err;
};

// Full-objective gradient check (data + pole-safety + suffix terms) on five
// tiny fixed models, B = 2, T = 16. The step is calibrated: the default
// 1e-6 bottoms out on coordinates whose true gradient is ~1e-6 while the
// objective is O(1), so the checks run at 5e-5 where central differences
// resolve every coordinate of these fixtures.
std::vector<ObjectiveCheck> run_objective_gradchecks(double step = 5e-5);

// layer_forward vs conv_oracle on random stable layers; returns the largest
// absolute output difference seen.
double run_conv_oracle_suite(std::uint64_t seed, int trials, int T);

// fft_oracle over a few random layers; returns the worst-case result.
FftOracleResult run_fft_oracle_suite(std::uint64_t seed);

}  // namespace zno
