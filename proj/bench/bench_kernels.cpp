// Compares the OpenMP kernels against their serial references: checks that
// results are bit-identical, then times both paths on conv-shaped workloads.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "sharppath/data.hpp"
#include "sharppath/graph.hpp"
#include "sharppath/kernels.hpp"
#include "sharppath/model.hpp"
#include "sharppath/rng.hpp"

using namespace sharppath;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_of(const std::function<void()>& fn, int reps) {
  fn(); // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n",
              name, serial * 1e3, parallel * 1e3, serial / parallel,
              same ? "bit-identical" : "MISMATCH");
}

} // namespace

int main() {
  SeededRng rng(7);
  std::printf("threads available: %d\n\n", kernels::max_threads());

  { // conv2-shaped matmul: (N*H*W, 9C) x (9C, F)
    const int m = 128 * 16 * 16, k = 9 * 32, n = 32;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    std::vector<double> c_ser(static_cast<size_t>(m) * n), c_par(c_ser.size());
    const double ts = seconds_of(
        [&] { kernels::matmul_serial(m, k, n, a.data(), b.data(), c_ser.data()); }, 3);
    const double tp = seconds_of(
        [&] { kernels::matmul(m, k, n, a.data(), b.data(), c_par.data()); }, 3);
    report("matmul 32768x288x32", ts, tp, identical(c_ser, c_par));
  }

  { // im2col + col2im on a CIFAR-shaped batch
    const int n = 64, h = 32, w = 32, c = 32;
    std::vector<double> x(static_cast<size_t>(n) * h * w * c);
    for (double& v : x) v = rng.normal();
    std::vector<double> cols_ser(static_cast<size_t>(n) * h * w * 9 * c);
    std::vector<double> cols_par(cols_ser.size());
    const double ts = seconds_of(
        [&] { kernels::im2col3x3_serial(n, h, w, c, x.data(), cols_ser.data()); }, 3);
    const double tp = seconds_of(
        [&] { kernels::im2col3x3(n, h, w, c, x.data(), cols_par.data()); }, 3);
    report("im2col 64x32x32x32", ts, tp, identical(cols_ser, cols_par));

    std::vector<double> back_ser(x.size(), 0.0), back_par(x.size(), 0.0);
    const double ts2 = seconds_of(
        [&] {
          std::fill(back_ser.begin(), back_ser.end(), 0.0);
          kernels::col2im3x3_add_serial(n, h, w, c, cols_ser.data(), back_ser.data());
        },
        3);
    const double tp2 = seconds_of(
        [&] {
          std::fill(back_par.begin(), back_par.end(), 0.0);
          kernels::col2im3x3_add(n, h, w, c, cols_par.data(), back_par.data());
        },
        3);
    report("col2im 64x32x32x32", ts2, tp2, identical(back_ser, back_par));
  }

  { // end to end: gradient of a small CNN batch
    const Model m = Model::build(
        build_scaled_cnn(16, 16, 3, 10, {16, 16, 32, 32}, 64));
    SeededRng init = SeededRng(1).split("init");
    const ParamVector params = init_params(m, init);
    Dataset data = synth_gaussian(10, 128, 16 * 16 * 3, 1.0, 3);
    data = reshape_images(std::move(data), 16, 16, 3);
    const Batch batch = gather_range(data, 0, 128);

    ParamVector g_ser, g_par;
    kernels::set_parallel(false);
    const double ts = seconds_of([&] { g_ser = grad(m.graph, params, batch); }, 2);
    kernels::set_parallel(true);
    const double tp = seconds_of([&] { g_par = grad(m.graph, params, batch); }, 2);
    report("cnn grad batch=128", ts, tp, identical(g_ser, g_par));

    const ParamVector v(params.size(), 0.01);
    kernels::set_parallel(false);
    ParamVector h_ser, h_par;
    const double ts2 = seconds_of([&] { h_ser = hvp(m.graph, params, batch, v); }, 2);
    kernels::set_parallel(true);
    const double tp2 = seconds_of([&] { h_par = hvp(m.graph, params, batch, v); }, 2);
    report("cnn hvp batch=128", ts2, tp2, identical(h_ser, h_par));
  }
  return 0;
}
