#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "optgym/autosched.hpp"
#include "optgym/kernels.hpp"

namespace {

using namespace optgym;

struct Dense {
  size_t batch, in, out;
  std::vector<double> x, w, b, y, dy, dw, db, dx;

  Dense(size_t batch_, size_t in_, size_t out_) : batch(batch_), in(in_), out(out_) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    auto fill = [&](size_t n) {
      std::vector<double> v(n);
      for (double& e : v) e = normal(rng);
      return v;
    };
    x = fill(batch * in);
    w = fill(out * in);
    b = fill(out);
    dy = fill(batch * out);
    y.assign(batch * out, 0.0);
    dw.assign(out * in, 0.0);
    db.assign(out, 0.0);
    dx.assign(batch * in, 0.0);
  }
};

template <bool Parallel>
void BM_LinearForward(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  Dense d(64, n, n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::linear_forward(d.x, d.w, d.b, d.y, d.batch, d.in, d.out);
    } else {
      kernels::serial::linear_forward(d.x, d.w, d.b, d.y, d.batch, d.in, d.out);
    }
    benchmark::DoNotOptimize(d.y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(64 * n * n));
}

template <bool Parallel>
void BM_LinearBackward(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  Dense d(64, n, n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::linear_backward_params(d.dy, d.x, d.dw, d.db, d.batch, d.in, d.out);
      kernels::linear_backward_input(d.dy, d.w, d.dx, d.batch, d.in, d.out);
    } else {
      kernels::serial::linear_backward_params(d.dy, d.x, d.dw, d.db, d.batch, d.in, d.out);
      kernels::serial::linear_backward_input(d.dy, d.w, d.dx, d.batch, d.in, d.out);
    }
    benchmark::DoNotOptimize(d.dx.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * 64 * n * n));
}

template <bool Parallel>
void BM_Search(benchmark::State& state) {
  const LinalgOp op = build_operation(OpKind::kConv2D, {1, 34, 34, 16, 32, 3, 3});
  for (auto _ : state) {
    const SearchResult r = search(op, SearchConstraints{}, CostConfig{}, Parallel);
    benchmark::DoNotOptimize(r.best_cost);
  }
}

BENCHMARK(BM_LinearForward<true>)->Name("linear_forward/omp")->Arg(128)->Arg(512);
BENCHMARK(BM_LinearForward<false>)->Name("linear_forward/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_LinearBackward<true>)->Name("linear_backward/omp")->Arg(128)->Arg(512);
BENCHMARK(BM_LinearBackward<false>)->Name("linear_backward/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_Search<true>)->Name("search_conv/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Search<false>)->Name("search_conv/serial")->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
