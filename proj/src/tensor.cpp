#include "zno/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");

namespace zno {

void TrajectoryBatch::validate() const {
  if (inputs.B != targets.B || inputs.T != targets.T) {
    throw std::invalid_argument("TrajectoryBatch: inputs/targets shape mismatch");
  }
  if (inputs.B <= 0 || inputs.T <= 0 || inputs.C <= 0 || targets.C <= 0) {
    throw std::invalid_argument("TrajectoryBatch: empty dimension");
  }
  for (double x : inputs.v) {
    if (!std::isfinite(x)) throw std::runtime_error("TrajectoryBatch: non-finite input");
  }
  for (double x : targets.v) {
    if (!std::isfinite(x)) throw std::runtime_error("TrajectoryBatch: non-finite target");
  }
}

std::array<TrajectoryBatch, 3> split_dataset(const TrajectoryBatch& full,
                                             int n_train, int n_val,
                                             int n_test) {
  if (n_train < 0 || n_val < 0 || n_test < 0 ||
      n_train + n_val + n_test != full.B()) {
    throw std::invalid_argument("split_dataset: sizes must be nonnegative and sum to B");
  }
  auto take = [&](int lo, int n) {
    TrajectoryBatch out;
    out.inputs = Tensor3(n, full.T(), full.du());
    out.targets = Tensor3(n, full.T(), full.dy());
    for (int b = 0; b < n; ++b) {
      std::memcpy(out.inputs.row(b, 0), full.inputs.row(lo + b, 0),
                  sizeof(double) * full.T() * full.du());
      std::memcpy(out.targets.row(b, 0), full.targets.row(lo + b, 0),
                  sizeof(double) * full.T() * full.dy());
    }
    return out;
  };
  return {take(0, n_train), take(n_train, n_val), take(n_train + n_val, n_test)};
}

TrajectoryBatch slice_time(const TrajectoryBatch& batch, int from, int to) {
  if (from < 0 || from >= to || to > batch.T()) {
    throw std::invalid_argument("slice_time: require 0 <= from < to <= T");
  }
  int tt = to - from;
  TrajectoryBatch out;
  out.inputs = Tensor3(batch.B(), tt, batch.du());
  out.targets = Tensor3(batch.B(), tt, batch.dy());
  for (int b = 0; b < batch.B(); ++b) {
    std::memcpy(out.inputs.row(b, 0), batch.inputs.row(b, from),
                sizeof(double) * tt * batch.du());
    std::memcpy(out.targets.row(b, 0), batch.targets.row(b, from),
                sizeof(double) * tt * batch.dy());
  }
  return out;
}

TrajectoryBatch select(const TrajectoryBatch& batch,
                       const std::vector<int>& idx) {
  TrajectoryBatch out;
  out.inputs = Tensor3(static_cast<int>(idx.size()), batch.T(), batch.du());
  out.targets = Tensor3(static_cast<int>(idx.size()), batch.T(), batch.dy());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    int b = idx[i];
    if (b < 0 || b >= batch.B()) throw std::out_of_range("select: index out of range");
    std::memcpy(out.inputs.row(static_cast<int>(i), 0), batch.inputs.row(b, 0),
                sizeof(double) * batch.T() * batch.du());
    std::memcpy(out.targets.row(static_cast<int>(i), 0), batch.targets.row(b, 0),
                sizeof(double) * batch.T() * batch.dy());
  }
  return out;
}

namespace {
constexpr char kMagic[8] = {'Z', 'N', 'O', 'B', 'A', 'T', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t x = 0;
  f.read(reinterpret_cast<char*>(&x), sizeof(x));
  return x;
}
}  // namespace

void save_dataset(const TrajectoryBatch& batch, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  write_u32(f, kVersion);
  write_u32(f, static_cast<std::uint32_t>(batch.B()));
  write_u32(f, static_cast<std::uint32_t>(batch.T()));
  write_u32(f, static_cast<std::uint32_t>(batch.du()));
  write_u32(f, static_cast<std::uint32_t>(batch.dy()));
  f.write(reinterpret_cast<const char*>(batch.inputs.v.data()),
          static_cast<std::streamsize>(batch.inputs.size() * sizeof(double)));
  f.write(reinterpret_cast<const char*>(batch.targets.v.data()),
          static_cast<std::streamsize>(batch.targets.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

TrajectoryBatch load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_dataset: bad magic in " + path);
  }
  std::uint32_t version = read_u32(f);
  if (version != kVersion) throw std::runtime_error("load_dataset: unsupported version");
  int B = static_cast<int>(read_u32(f));
  int T = static_cast<int>(read_u32(f));
  int du = static_cast<int>(read_u32(f));
  int dy = static_cast<int>(read_u32(f));
  TrajectoryBatch batch;
  batch.inputs = Tensor3(B, T, du);
  batch.targets = Tensor3(B, T, dy);
  f.read(reinterpret_cast<char*>(batch.inputs.v.data()),
         static_cast<std::streamsize>(batch.inputs.size() * sizeof(double)));
  f.read(reinterpret_cast<char*>(batch.targets.v.data()),
         static_cast<std::streamsize>(batch.targets.size() * sizeof(double)));
  if (!f) throw std::runtime_error("load_dataset: truncated file " + path);
  return batch;
}

}  // namespace zno
