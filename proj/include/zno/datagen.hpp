#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zno/rng.hpp"
#include "zno/tensor.hpp"

namespace zno {

enum class TaskFamily { ResonantArma, IirCascade6, NarxScalar };

std::string family_name(TaskFamily f);
TaskFamily family_from_name(const std::string& s);

// AR(1) colored-noise forcing, optionally rescaled per trajectory to unit
// empirical (population) standard deviation.
struct ForcingSpec {
  double ar_coeff = 0.9;
  bool normalize = true;
};

struct TaskSpec {
  TaskFamily family = TaskFamily::ResonantArma;
  double rho_lo = 0.9, rho_hi = 0.995;
  double phi_lo = 0.0, phi_hi = 0.0;  // 0,0 means use the family default
  int n_traj = 0;
  int T = 0;
  std::uint64_t seed = 0;
  ForcingSpec forcing;

  int d_u() const;  // 7 / 16 / 1
  void validate() const;
};

// Fills [n x T] (row-major) with x_t = ar*x_{t-1} + eps_t, x_{-1} = 0.
std::vector<double> gen_forcing(const ForcingSpec& spec, int n, int T,
                                const RngStream& rng);

TrajectoryBatch gen_resonant_arma(const TaskSpec& spec, const RngStream& rng);
TrajectoryBatch gen_iir_cascade(const TaskSpec& spec, const RngStream& rng);
TrajectoryBatch gen_narx(const TaskSpec& spec, const RngStream& rng);

// Dispatch on family with the stream derived from spec.seed.
TrajectoryBatch generate(const TaskSpec& spec);

// Five near-unit-circle pole-radius bins, easiest to hardest.
std::array<std::pair<double, double>, 5> difficulty_bins();

// Dominant impulse-response time constant of a pole of radius rho.
double memory_horizon(double rho);

// Single-trajectory ground-truth recursions used by the generators.
void arma_recursion(std::span<const double> x, double a1, double a2,
                    const double m[4], std::span<double> y);
struct BiquadSection {
  double b0, b1, b2, a1, a2;
};
void biquad_cascade_recursion(std::span<const double> x,
                              const std::array<BiquadSection, 3>& sections,
                              std::span<double> y);
struct NarxParams {
  double a1, a2, gain;
};
void narx_recursion(std::span<const double> x, const NarxParams& p,
                    std::span<double> y);

// JSON sidecar describing the generating TaskSpec.
std::string task_spec_to_json(const TaskSpec& spec);
TaskSpec task_spec_from_json(const std::string& text);
void save_task_spec(const TaskSpec& spec, const std::string& path);
TaskSpec load_task_spec(const std::string& path);

}  // namespace zno
