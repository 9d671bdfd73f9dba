// Timing comparison for the scan kernels: OpenMP batch driver vs the serial
// reference, in f64 and f32. The per-trajectory recurrence is sequential in
// time; parallelism comes from the batch dimension.

#include <chrono>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "zno/layer.hpp"
#include "zno/rng.hpp"
#include "zno/scan.hpp"

using namespace zno;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename Real>
double bench_fast_omp(int B, int T, const scan::Filters<Real>& f,
                      const std::vector<Real>& bq, std::vector<Real>& q,
                      int reps) {
  const std::size_t per = static_cast<std::size_t>(T) * f.r;
  double best = 1e30;
  for (int rep = 0; rep < reps; ++rep) {
    double t0 = now_ms();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
      scan::forward_traj<Real>(T, f, bq.data() + b * per, q.data() + b * per,
                               nullptr, nullptr, nullptr, nullptr, nullptr,
                               nullptr);
    }
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

template <typename Real>
double bench_reference(int B, int T, const scan::Filters<Real>& f,
                       const std::vector<Real>& bq, std::vector<Real>& q,
                       int reps) {
  const std::size_t per = static_cast<std::size_t>(T) * f.r;
  double best = 1e30;
  for (int rep = 0; rep < reps; ++rep) {
    double t0 = now_ms();
    for (int b = 0; b < B; ++b) {
      scan_ref::forward_traj<Real>(T, f, bq.data() + b * per, q.data() + b * per);
    }
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

template <typename Real>
void run_case(const char* label, int B, int T, int r, int K, int F) {
  ParamStore store;
  RationalLayer layer(store, "bench", r, r, K, F, PoleMode::ZPlane);
  store.freeze();
  layer.init(RngStream(1, "bench"));
  scan::Filters<Real> f = layer.filters<Real>();

  RngStream in(2, "bench-in");
  std::vector<Real> bq(static_cast<std::size_t>(B) * T * r);
  for (auto& x : bq) x = static_cast<Real>(in.normal());
  std::vector<Real> q(bq.size()), q_ref(bq.size());

  const int reps = 5;
  double t_omp = bench_fast_omp<Real>(B, T, f, bq, q, reps);
  double t_ref = bench_reference<Real>(B, T, f, bq, q_ref, reps);

  double max_diff = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    max_diff = std::max(max_diff, static_cast<double>(std::abs(q[i] - q_ref[i])));
  }
  double cells = static_cast<double>(B) * T * r * (K / 2);
  std::printf("%-4s B=%-3d T=%-5d r=%-3d K=%-3d F=%d | omp %8.2f ms  serial-ref %8.2f ms  speedup %4.2fx  %6.1f Mstates/s  max|diff| %.1e\n",
              label, B, T, r, K, F, t_omp, t_ref, t_ref / t_omp,
              cells / (t_omp * 1e3), max_diff);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  run_case<double>("f64", 32, 512, 8, 16, 4);
  run_case<double>("f64", 32, 2048, 12, 64, 0);
  run_case<double>("f64", 32, 2048, 12, 80, 4);
  run_case<float>("f32", 32, 512, 8, 16, 4);
  run_case<float>("f32", 32, 2048, 12, 64, 0);
  return 0;
}
