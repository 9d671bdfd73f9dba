#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "zno/param_store.hpp"
#include "zno/rng.hpp"
#include "zno/tensor.hpp"

using namespace zno;

TEST_CASE("rng streams are deterministic and label-separated") {
  RngStream a(7, "data");
  RngStream b(7, "data");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(7, "init");
  RngStream d(7, "data");
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) {
    if (c.next_u64() != d.next_u64()) all_equal = false;
  }
  CHECK_FALSE(all_equal);

  // forks are independent of the parent's walk position
  RngStream e(7, "data");
  RngStream f0 = e.fork(3);
  e.next_u64();
  RngStream f1 = e.fork(3);
  CHECK(f0.next_u64() == f1.next_u64());
}

TEST_CASE("rng normal draws have sane moments") {
  RngStream s(11, "stats");
  const int n = 200000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = s.normal();
    mean += x;
    m2 += x * x;
  }
  mean /= n;
  m2 /= n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(m2 - 1.0) < 0.02);
}

TEST_CASE("split_dataset sizes and errors") {
  TrajectoryBatch full;
  full.inputs = Tensor3(1536, 4, 2);
  full.targets = Tensor3(1536, 4, 1);
  auto [tr, va, te] = split_dataset(full, 1024, 256, 256);
  CHECK(tr.B() == 1024);
  CHECK(va.B() == 256);
  CHECK(te.B() == 256);

  TrajectoryBatch small;
  small.inputs = Tensor3(4, 3, 1);
  small.targets = Tensor3(4, 3, 1);
  auto parts = split_dataset(small, 2, 1, 1);
  CHECK(parts[0].B() == 2);
  CHECK(parts[1].B() == 1);
  CHECK(parts[2].B() == 1);

  TrajectoryBatch three;
  three.inputs = Tensor3(3, 2, 1);
  three.targets = Tensor3(3, 2, 1);
  CHECK_THROWS_AS(split_dataset(three, 2, 2, 0), std::invalid_argument);
}

TEST_CASE("split preserves order and is disjoint") {
  TrajectoryBatch full;
  full.inputs = Tensor3(6, 2, 1);
  full.targets = Tensor3(6, 2, 1);
  for (int b = 0; b < 6; ++b) {
    for (int t = 0; t < 2; ++t) {
      full.inputs.at(b, t, 0) = 10.0 * b + t;
      full.targets.at(b, t, 0) = -full.inputs.at(b, t, 0);
    }
  }
  auto parts = split_dataset(full, 3, 2, 1);
  CHECK(parts[0].inputs.at(2, 1, 0) == 21.0);
  CHECK(parts[1].inputs.at(0, 0, 0) == 30.0);
  CHECK(parts[2].inputs.at(0, 1, 0) == 51.0);
}

TEST_CASE("slice_time windows and errors") {
  TrajectoryBatch b;
  b.inputs = Tensor3(2, 8, 1);
  b.targets = Tensor3(2, 8, 1);
  for (int t = 0; t < 8; ++t) b.inputs.at(1, t, 0) = t;

  auto s = slice_time(b, 2, 8);
  CHECK(s.T() == 6);
  CHECK(s.inputs.at(1, 0, 0) == 2.0);

  auto full = slice_time(b, 0, 8);
  CHECK(full.T() == 8);
  CHECK(std::memcmp(full.inputs.v.data(), b.inputs.v.data(),
                    sizeof(double) * b.inputs.size()) == 0);

  CHECK_THROWS_AS(slice_time(b, 5, 5), std::invalid_argument);
  CHECK_THROWS_AS(slice_time(b, -1, 4), std::invalid_argument);
  CHECK_THROWS_AS(slice_time(b, 0, 9), std::invalid_argument);
}

TEST_CASE("param store segment round trip and layout") {
  ParamStore store;
  int a = store.add("alpha", 4, {2, 2});
  int b = store.add("beta", 3, {3});
  store.freeze();
  CHECK(store.size() == 7);
  CHECK(store.segment(a).offset == 0);
  CHECK(store.segment(b).offset == 4);
  CHECK(store.find("beta") == b);
  CHECK(store.find("gamma") == -1);

  auto av = store.values(a);
  for (std::size_t i = 0; i < av.size(); ++i) av[i] = 1.5 * (i + 1);
  auto back = store.values(store.find("alpha"));
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == 1.5 * (i + 1));

  // segments cover [0, P) without overlap
  std::size_t covered = 0;
  for (std::size_t i = 0; i < store.num_segments(); ++i) {
    CHECK(store.segment(static_cast<int>(i)).offset == covered);
    covered += store.segment(static_cast<int>(i)).size;
  }
  CHECK(covered == store.size());

  CHECK_THROWS_AS(store.add("late", 1), std::logic_error);

  store.grads(a)[0] = 2.0;
  store.zero_grads();
  CHECK(store.grads(a)[0] == 0.0);
}

TEST_CASE("dataset container round trips bit-exactly") {
  TrajectoryBatch b;
  b.inputs = Tensor3(3, 5, 2);
  b.targets = Tensor3(3, 5, 1);
  RngStream s(3, "io");
  for (double& x : b.inputs.v) x = s.normal();
  for (double& x : b.targets.v) x = s.normal();

  std::string path = "/tmp/zno_test_batch.znod";
  save_dataset(b, path);
  TrajectoryBatch r = load_dataset(path);
  CHECK(r.B() == 3);
  CHECK(r.T() == 5);
  CHECK(r.du() == 2);
  CHECK(r.dy() == 1);
  CHECK(std::memcmp(r.inputs.v.data(), b.inputs.v.data(),
                    sizeof(double) * b.inputs.size()) == 0);
  CHECK(std::memcmp(r.targets.v.data(), b.targets.v.data(),
                    sizeof(double) * b.targets.size()) == 0);
  std::remove(path.c_str());
}
