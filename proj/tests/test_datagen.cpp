#include <cmath>
#include <cstring>
#include <stdexcept>

#include "doctest.h"
#include "zno/datagen.hpp"

using namespace zno;

namespace {

// test-local ARMA recursion, independent of the generator's implementation
void ref_arma(const std::vector<double>& x, double a1, double a2,
              const double m[4], std::vector<double>& y) {
  y.assign(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 4 && j <= n; ++j) acc += m[j] * x[n - j];
    if (n >= 1) acc += a1 * y[n - 1];
    if (n >= 2) acc += a2 * y[n - 2];
    y[n] = acc;
  }
}

}  // namespace

TEST_CASE("forcing: white-noise limit, autocorrelation, normalization") {
  ForcingSpec white{0.0, false};
  RngStream rng(5, "forcing-test");
  auto x = gen_forcing(white, 4, 64, rng);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  CHECK(std::abs(mean) < 0.3);

  ForcingSpec colored{0.9, false};
  const int T = 100000;
  auto xs = gen_forcing(colored, 1, T, RngStream(6, "forcing-test"));
  double m = 0.0;
  for (double v : xs) m += v;
  m /= T;
  double num = 0.0, den = 0.0;
  for (int t = 1; t < T; ++t) num += (xs[t] - m) * (xs[t - 1] - m);
  for (int t = 0; t < T; ++t) den += (xs[t] - m) * (xs[t] - m);
  CHECK(num / den == doctest::Approx(0.9).epsilon(0.022));

  ForcingSpec norm{0.9, true};
  auto xn = gen_forcing(norm, 3, 257, RngStream(7, "forcing-test"));
  for (int i = 0; i < 3; ++i) {
    double mu = 0.0, ss = 0.0;
    for (int t = 0; t < 257; ++t) mu += xn[i * 257 + t];
    mu /= 257.0;
    for (int t = 0; t < 257; ++t) {
      ss += (xn[i * 257 + t] - mu) * (xn[i * 257 + t] - mu);
    }
    CHECK(std::sqrt(ss / 257.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("arma recursion: passthrough and resonant impulse") {
  std::vector<double> x = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> y(x.size());
  double m_pass[4] = {1.0, 0.0, 0.0, 0.0};
  arma_recursion(x, 0.0, 0.0, m_pass, y);
  for (std::size_t n = 0; n < x.size(); ++n) CHECK(y[n] == x[n]);

  double rho = 0.99, phi = 0.25 * M_PI;
  double a1 = 2 * rho * std::cos(phi), a2 = -rho * rho;
  double m[4] = {0.7, -0.2, 0.4, 0.1};
  std::vector<double> xr(64, 0.0);
  xr[0] = 1.0;
  std::vector<double> got(64), want;
  arma_recursion(xr, a1, a2, m, got);
  ref_arma(xr, a1, a2, m, want);
  for (int n = 0; n < 64; ++n) CHECK(got[n] == doctest::Approx(want[n]).epsilon(1e-12));
}

TEST_CASE("arma generator: channel layout and sampled ranges") {
  TaskSpec spec;
  spec.family = TaskFamily::ResonantArma;
  spec.rho_lo = 0.9;
  spec.rho_hi = 0.995;
  spec.phi_lo = 0.05 * M_PI;
  spec.phi_hi = 0.45 * M_PI;
  spec.n_traj = 16;
  spec.T = 32;
  spec.seed = 2;
  TrajectoryBatch b = generate(spec);
  CHECK(b.du() == 7);
  CHECK(b.dy() == 1);
  for (int i = 0; i < b.B(); ++i) {
    double a1 = b.inputs.at(i, 0, 1);
    double a2 = b.inputs.at(i, 0, 2);
    double rho = std::sqrt(-a2);
    double phi = std::acos(a1 / (2.0 * rho));
    CHECK(rho > spec.rho_lo);
    CHECK(rho < spec.rho_hi);
    CHECK(phi > spec.phi_lo);
    CHECK(phi < spec.phi_hi);
    CHECK(std::abs(b.inputs.at(i, 0, 3)) >= 0.1);
    // parameter channels stay constant over time
    for (int t = 1; t < b.T(); ++t) {
      for (int c = 1; c < 7; ++c) CHECK(b.inputs.at(i, t, c) == b.inputs.at(i, 0, c));
    }
  }
}

TEST_CASE("generated targets match a step-by-step recursion oracle") {
  TaskSpec spec;
  spec.family = TaskFamily::ResonantArma;
  spec.n_traj = 10;
  spec.T = 128;
  spec.seed = 9;
  TrajectoryBatch b = generate(spec);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x(b.T());
    for (int t = 0; t < b.T(); ++t) x[t] = b.inputs.at(i, t, 0);
    double m[4] = {b.inputs.at(i, 0, 3), b.inputs.at(i, 0, 4),
                   b.inputs.at(i, 0, 5), b.inputs.at(i, 0, 6)};
    std::vector<double> want;
    ref_arma(x, b.inputs.at(i, 0, 1), b.inputs.at(i, 0, 2), m, want);
    for (int t = 0; t < b.T(); ++t) {
      CHECK(b.targets.at(i, t, 0) == doctest::Approx(want[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("iir cascade: identity sections, impulse oracle, channel count") {
  std::vector<double> x = {0.3, -1.2, 0.7, 2.0, -0.4};
  std::vector<double> y(x.size());
  std::array<BiquadSection, 3> ident{};
  for (auto& s : ident) s = {1.0, 0.0, 0.0, 0.0, 0.0};
  biquad_cascade_recursion(x, ident, y);
  for (std::size_t n = 0; n < x.size(); ++n) CHECK(y[n] == x[n]);

  // one nontrivial section, impulse input, vs a direct difference equation
  std::array<BiquadSection, 3> one{};
  one[0] = {0.5, 0.2, -0.1, 1.2, -0.72};
  one[1] = {1.0, 0.0, 0.0, 0.0, 0.0};
  one[2] = {1.0, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> imp(32, 0.0);
  imp[0] = 1.0;
  std::vector<double> got(32);
  biquad_cascade_recursion(imp, one, got);
  std::vector<double> want(32, 0.0);
  for (int n = 0; n < 32; ++n) {
    double u0 = imp[n];
    double u1 = n >= 1 ? imp[n - 1] : 0.0;
    double u2 = n >= 2 ? imp[n - 2] : 0.0;
    double v1 = n >= 1 ? want[n - 1] : 0.0;
    double v2 = n >= 2 ? want[n - 2] : 0.0;
    want[n] = 0.5 * u0 + 0.2 * u1 - 0.1 * u2 + 1.2 * v1 - 0.72 * v2;
  }
  for (int n = 0; n < 32; ++n) CHECK(got[n] == doctest::Approx(want[n]).epsilon(1e-12));

  TaskSpec spec;
  spec.family = TaskFamily::IirCascade6;
  spec.rho_lo = 0.88;
  spec.rho_hi = 0.995;
  spec.n_traj = 4;
  spec.T = 16;
  spec.seed = 3;
  TrajectoryBatch b = generate(spec);
  CHECK(b.du() == 16);
}

TEST_CASE("narx: zero input, constant input, channel count") {
  std::vector<double> zeros(16, 0.0), y(16);
  NarxParams p{0.4, -0.1, 0.3};
  narx_recursion(zeros, p, y);
  for (double v : y) CHECK(v == 0.0);

  std::vector<double> c3 = {0.7, 0.7, 0.7};
  std::vector<double> got(3);
  narx_recursion(c3, p, got);
  const double log2 = std::log(2.0);
  double y1 = 0, y2 = 0, x1 = 0;
  std::vector<double> want;
  for (int n = 0; n < 3; ++n) {
    double z = c3[n] + 0.5 * x1;
    double v = p.a1 * y1 + p.a2 * y2 + p.gain * (std::log1p(std::exp(z)) - log2) +
               0.08 * std::tanh(y1 * c3[n]);
    want.push_back(v);
    y2 = y1;
    y1 = v;
    x1 = c3[n];
  }
  for (int n = 0; n < 3; ++n) CHECK(got[n] == doctest::Approx(want[n]).epsilon(1e-14));

  TaskSpec spec;
  spec.family = TaskFamily::NarxScalar;
  spec.n_traj = 4;
  spec.T = 16;
  spec.seed = 1;
  TrajectoryBatch b = generate(spec);
  CHECK(b.du() == 1);
}

TEST_CASE("narx outputs stay bounded over the sampled parameter ranges") {
  TaskSpec spec;
  spec.family = TaskFamily::NarxScalar;
  spec.n_traj = 64;
  spec.T = 1024;
  spec.seed = 17;
  TrajectoryBatch b = generate(spec);  // validate() already asserts finiteness
  double peak = 0.0;
  for (double y : b.targets.v) peak = std::max(peak, std::abs(y));
  CHECK(peak < 1e3);
}

TEST_CASE("difficulty bins and memory horizon") {
  auto bins = difficulty_bins();
  CHECK(bins.size() == 5);
  CHECK(bins[0].first == 0.90);
  CHECK(bins[0].second == 0.93);
  CHECK(bins[4].first == 0.99);
  CHECK(bins[4].second == 0.995);

  CHECK(memory_horizon(0.99) == doctest::Approx(99.50).epsilon(1e-4));
  CHECK(memory_horizon(0.995) == doctest::Approx(199.5).epsilon(1e-3));
  CHECK(memory_horizon(1e-9) < 0.05);
  CHECK_THROWS_AS(memory_horizon(0.0), std::domain_error);
  CHECK_THROWS_AS(memory_horizon(1.0), std::domain_error);
}

TEST_CASE("generator determinism and causal prefix property") {
  TaskSpec spec;
  spec.family = TaskFamily::ResonantArma;
  spec.n_traj = 6;
  spec.T = 40;
  spec.seed = 12;
  TrajectoryBatch a = generate(spec);
  TrajectoryBatch b = generate(spec);
  CHECK(std::memcmp(a.inputs.v.data(), b.inputs.v.data(),
                    sizeof(double) * a.inputs.size()) == 0);
  CHECK(std::memcmp(a.targets.v.data(), b.targets.v.data(),
                    sizeof(double) * a.targets.size()) == 0);

  // same stream, longer horizon: first T steps identical (normalization off,
  // since the per-trajectory rescale is the one non-causal step)
  spec.forcing.normalize = false;
  TrajectoryBatch shortb = generate(spec);
  TaskSpec spec2 = spec;
  spec2.T = 80;
  TrajectoryBatch longb = generate(spec2);
  for (int i = 0; i < 6; ++i) {
    for (int t = 0; t < 40; ++t) {
      CHECK(shortb.inputs.at(i, t, 0) == longb.inputs.at(i, t, 0));
      CHECK(shortb.targets.at(i, t, 0) == longb.targets.at(i, t, 0));
    }
  }
}

TEST_CASE("task spec json sidecar round trip") {
  TaskSpec spec;
  spec.family = TaskFamily::IirCascade6;
  spec.rho_lo = 0.88;
  spec.rho_hi = 0.995;
  spec.phi_lo = 0.05 * M_PI;
  spec.phi_hi = 0.95 * M_PI;
  spec.n_traj = 12;
  spec.T = 64;
  spec.seed = 99;
  spec.forcing.ar_coeff = 0.9;
  spec.forcing.normalize = true;
  TaskSpec back = task_spec_from_json(task_spec_to_json(spec));
  CHECK(back.family == spec.family);
  CHECK(back.rho_lo == spec.rho_lo);
  CHECK(back.rho_hi == spec.rho_hi);
  CHECK(back.n_traj == spec.n_traj);
  CHECK(back.T == spec.T);
  CHECK(back.seed == spec.seed);
  CHECK(back.forcing.ar_coeff == spec.forcing.ar_coeff);
}
