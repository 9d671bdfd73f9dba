#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace zno {

// Dense row-major [B x T x C] array, the layout every kernel assumes:
// time in the middle, channels contiguous per step.
struct Tensor3 {
  int B = 0, T = 0, C = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int b, int t, int c)
      : B(b), T(t), C(c), v(static_cast<std::size_t>(b) * t * c, 0.0) {}

  double* row(int b, int t) {
    return v.data() + (static_cast<std::size_t>(b) * T + t) * C;
  }
  const double* row(int b, int t) const {
    return v.data() + (static_cast<std::size_t>(b) * T + t) * C;
  }
  double& at(int b, int t, int c) { return row(b, t)[c]; }
  double at(int b, int t, int c) const { return row(b, t)[c]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor3& o) const {
    return B == o.B && T == o.T && C == o.C;
  }
};

// A batch of paired input/output trajectories. Immutable after generation.
struct TrajectoryBatch {
  Tensor3 inputs;   // [B x T x d_u]
  Tensor3 targets;  // [B x T x d_y]

  int B() const { return inputs.B; }
  int T() const { return inputs.T; }
  int du() const { return inputs.C; }
  int dy() const { return targets.C; }

  // shape agreement + all entries finite
  void validate() const;
};

// Disjoint split by leading index; n_train + n_val + n_test must equal B.
std::array<TrajectoryBatch, 3> split_dataset(const TrajectoryBatch& full,
                                             int n_train, int n_val,
                                             int n_test);

// Time window [from, to) of both inputs and targets.
TrajectoryBatch slice_time(const TrajectoryBatch& batch, int from, int to);

// Gather trajectories by index (mini-batch assembly).
TrajectoryBatch select(const TrajectoryBatch& batch,
                       const std::vector<int>& idx);

// Flat binary container: magic "ZNOBATCH", u32 version, u32 B,T,d_u,d_y,
// then inputs followed by targets as little-endian f64.
void save_dataset(const TrajectoryBatch& batch, const std::string& path);
TrajectoryBatch load_dataset(const std::string& path);

}  // namespace zno
