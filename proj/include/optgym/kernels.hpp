#pragma once

// Dense-layer kernels. Weights are row-major out x in, activations row-major
// batch x features. The default entry points are OpenMP-parallel; the serial
// namespace holds the straightforward reference loops the tests and the
// benchmark compare against.

#include <cstddef>
#include <span>

namespace optgym::kernels {

// Y[b,o] = bias[o] + sum_i X[b,i] * W[o,i]
void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, size_t batch,
                    size_t in, size_t out);

// dW[o,i] += sum_b dY[b,o] * X[b,i];  db[o] += sum_b dY[b,o]
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, size_t batch,
                            size_t in, size_t out);

// dX[b,i] = sum_o dY[b,o] * W[o,i]
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, size_t batch, size_t in, size_t out);

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, size_t batch,
                    size_t in, size_t out);
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, size_t batch,
                            size_t in, size_t out);
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, size_t batch, size_t in, size_t out);

}  // namespace serial

// Applies OPT_GYM_THREADS (if set) as the OpenMP thread cap. Returns the
// resulting thread count.
int configure_threads_from_env();

}  // namespace optgym::kernels
