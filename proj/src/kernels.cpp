#include "optgym/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace optgym::kernels {

namespace {
constexpr size_t kRowBlock = 4;
}

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, size_t batch,
                    size_t in, size_t out) {
  const double* X = x.data();
  const double* W = w.data();
  double* Y = y.data();
  const auto n_out = static_cast<long>(out);
  // Each weight row is streamed once and reused for every batch row.
#pragma omp parallel for schedule(static)
  for (long o = 0; o < n_out; ++o) {
    const double* wr = W + static_cast<size_t>(o) * in;
    size_t b = 0;
    for (; b + kRowBlock <= batch; b += kRowBlock) {
      const double* x0 = X + b * in;
      const double* x1 = x0 + in;
      const double* x2 = x1 + in;
      const double* x3 = x2 + in;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (size_t i = 0; i < in; ++i) {
        const double wi = wr[i];
        s0 += x0[i] * wi;
        s1 += x1[i] * wi;
        s2 += x2[i] * wi;
        s3 += x3[i] * wi;
      }
      Y[b * out + o] = s0 + bias[o];
      Y[(b + 1) * out + o] = s1 + bias[o];
      Y[(b + 2) * out + o] = s2 + bias[o];
      Y[(b + 3) * out + o] = s3 + bias[o];
    }
    for (; b < batch; ++b) {
      const double* xr = X + b * in;
      double s = 0;
#pragma omp simd reduction(+ : s)
      for (size_t i = 0; i < in; ++i) s += xr[i] * wr[i];
      Y[b * out + o] = s + bias[o];
    }
  }
}

void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, size_t batch,
                            size_t in, size_t out) {
  const double* dY = dy.data();
  const double* X = x.data();
  const auto n_out = static_cast<long>(out);
#pragma omp parallel for schedule(static)
  for (long o = 0; o < n_out; ++o) {
    double* dwr = dw.data() + static_cast<size_t>(o) * in;
    double bsum = 0;
    for (size_t b = 0; b < batch; ++b) {
      const double g = dY[b * out + static_cast<size_t>(o)];
      bsum += g;
      if (g == 0.0) continue;
      const double* xr = X + b * in;
#pragma omp simd
      for (size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
    }
    db[static_cast<size_t>(o)] += bsum;
  }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, size_t batch, size_t in, size_t out) {
  const double* dY = dy.data();
  const double* W = w.data();
  double* dX = dx.data();
  std::fill(dx.begin(), dx.begin() + static_cast<long>(batch * in), 0.0);
  // Blocks of batch rows stay cache-resident while W streams past them.
  constexpr size_t kBatchBlock = 8;
  const auto n_blocks = static_cast<long>((batch + kBatchBlock - 1) / kBatchBlock);
#pragma omp parallel for schedule(static)
  for (long blk = 0; blk < n_blocks; ++blk) {
    const size_t b0 = static_cast<size_t>(blk) * kBatchBlock;
    const size_t b1 = std::min(batch, b0 + kBatchBlock);
    for (size_t o = 0; o < out; ++o) {
      const double* wr = W + o * in;
      for (size_t b = b0; b < b1; ++b) {
        const double g = dY[b * out + o];
        if (g == 0.0) continue;
        double* dxr = dX + b * in;
#pragma omp simd
        for (size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
    }
  }
}

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, size_t batch,
                    size_t in, size_t out) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t o = 0; o < out; ++o) {
      double s = bias[o];
      for (size_t i = 0; i < in; ++i) s += x[b * in + i] * w[o * in + i];
      y[b * out + o] = s;
    }
  }
}

void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, size_t batch,
                            size_t in, size_t out) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t o = 0; o < out; ++o) {
      const double g = dy[b * out + o];
      db[o] += g;
      for (size_t i = 0; i < in; ++i) dw[o * in + i] += g * x[b * in + i];
    }
  }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, size_t batch, size_t in, size_t out) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t i = 0; i < in; ++i) {
      double s = 0;
      for (size_t o = 0; o < out; ++o) s += dy[b * out + o] * w[o * in + i];
      dx[b * in + i] = s;
    }
  }
}

}  // namespace serial

int configure_threads_from_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("OPT_GYM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) omp_set_num_threads(std::min(cap, omp_get_num_procs()));
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace optgym::kernels
