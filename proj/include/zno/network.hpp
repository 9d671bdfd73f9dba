#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "zno/layer.hpp"
#include "zno/param_store.hpp"
#include "zno/tensor.hpp"

namespace zno {

struct ZnoConfig {
  int w = 12, L = 2, r = 8, K = 16, F = 4;
  int d_u = 1, d_y = 1;
  PoleMode pole_mode = PoleMode::ZPlane;
  int proj_hidden = 128;
  ScanMode scan_mode = ScanMode::SaveHistory;
  ScanDtype dtype = ScanDtype::F64;

  void validate() const;  // throws on bad dims, warns on r > w
  std::string to_json() const;
  static ZnoConfig from_json(const std::string& text);
};

// Analytic parameter count:
//   L*(2rw + w^2 + w + 2Kr + 1_{F>0} r(F+1)) + (d_u w + w)
//   + (w*proj_hidden + proj_hidden) + (proj_hidden*d_y + d_y)
long long count_params(const ZnoConfig& cfg);

// Everything forward retains for the matching backward call.
struct ForwardTrace {
  Tensor3 h0;                 // lift output
  std::vector<Tensor3> pre;   // per layer, before GELU
  std::vector<Tensor3> act;   // per layer, after GELU
  std::vector<LayerTrace> scan;
  Tensor3 z1, a1;             // projection head intermediates
};

struct PoleRow {
  int layer;
  int channel;
  double re, im;
  double abs_residue;
};

// Lift -> L residual rational layers with GELU -> two-affine projection head.
class ZnoModel {
 public:
  explicit ZnoModel(const ZnoConfig& cfg);
  ZnoModel(const ZnoModel&) = delete;
  ZnoModel& operator=(const ZnoModel&) = delete;

  void init_params(std::uint64_t seed);

  Tensor3 forward(const Tensor3& u, ForwardTrace* trace = nullptr) const;

  // Accumulates into params().grads(); requires the trace from forward.
  void backward(const Tensor3& u, const ForwardTrace& trace,
                const Tensor3& out_grad);

  const ZnoConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  std::vector<RationalLayer>& layers() { return layers_; }
  const std::vector<RationalLayer>& layers() const { return layers_; }

  std::vector<PoleRow> export_poles() const;
  double max_abs_pole() const;

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<ZnoModel> load_checkpoint(const std::string& path);

 private:
  ZnoConfig cfg_;
  ParamStore store_;
  int lift_W_, lift_b_, p1_W_, p1_b_, p2_W_, p2_b_;
  std::vector<RationalLayer> layers_;
};

void export_poles_csv(const ZnoModel& model, const std::string& path);

}  // namespace zno
