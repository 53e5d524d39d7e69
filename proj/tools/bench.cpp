// Benchmark of the OpenMP kernels against the serial reference
// implementations, verifying bit-identical outputs along the way.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "covlm/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace covlm;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& f, int reps) {
  f();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<float> random_vec(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<float> d(0.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void report(const char* name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-18s serial %8.3f ms   openmp %8.3f ms   speedup %5.2fx   %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not available; both columns run serial code\n");
#endif
  std::mt19937_64 rng(42);
  const int reps = 5;

  {  // matmul 256x256x256
    const int m = 256, k = 256, n = 256;
    auto A = random_vec((size_t)m * k, rng), B = random_vec((size_t)k * n, rng);
    std::vector<float> C1((size_t)m * n), C2((size_t)m * n);
    double ts = time_ms([&] { kern::ref::matmul(A.data(), B.data(), C1.data(), m, k, n); }, reps);
    double tp = time_ms([&] { kern::matmul(A.data(), B.data(), C2.data(), m, k, n); }, reps);
    report("matmul", ts, tp, C1 == C2);
  }
  {  // matmul_tn (gradient accumulation shape)
    const int m = 256, k = 256, n = 256;
    auto A = random_vec((size_t)k * m, rng), B = random_vec((size_t)k * n, rng);
    std::vector<float> C1((size_t)m * n), C2((size_t)m * n);
    double ts = time_ms([&] { kern::ref::matmul_tn(A.data(), B.data(), C1.data(), m, k, n); }, reps);
    double tp = time_ms([&] { kern::matmul_tn(A.data(), B.data(), C2.data(), m, k, n); }, reps);
    report("matmul_tn", ts, tp, C1 == C2);
  }
  {  // conv2d: 64ch 32x32 -> 64ch, k3 s2 p1
    const int Ci = 64, H = 32, Co = 64, kk = 3, s = 2, p = 1;
    const int Ho = (H + 2 * p - kk) / s + 1;
    auto x = random_vec((size_t)Ci * H * H, rng);
    auto w = random_vec((size_t)Co * Ci * kk * kk, rng);
    auto b = random_vec(Co, rng);
    std::vector<float> y1((size_t)Co * Ho * Ho), y2((size_t)Co * Ho * Ho);
    double ts = time_ms([&] { kern::ref::conv2d(x.data(), w.data(), b.data(), y1.data(), Ci, H, H, Co, kk, s, p); }, reps);
    double tp = time_ms([&] { kern::conv2d(x.data(), w.data(), b.data(), y2.data(), Ci, H, H, Co, kk, s, p); }, reps);
    report("conv2d", ts, tp, y1 == y2);
  }
  {  // bilinear resize 16x16x256 -> 73x73x256
    const int gi = 16, go = 73, D = 256;
    auto in = random_vec((size_t)gi * gi * D, rng);
    std::vector<float> o1((size_t)go * go * D), o2((size_t)go * go * D);
    double ts = time_ms([&] { kern::ref::bilinear_resize(in.data(), o1.data(), gi, go, D); }, reps);
    double tp = time_ms([&] { kern::bilinear_resize(in.data(), o2.data(), gi, go, D); }, reps);
    report("bilinear_resize", ts, tp, o1 == o2);
  }
  return 0;
}
