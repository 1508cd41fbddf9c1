#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "optgym/cost.hpp"
#include "optgym/error.hpp"
#include "optgym/interpreter.hpp"
#include "optgym/transform.hpp"

namespace optgym {
namespace {

LinalgOp matmul(int64_t m, int64_t n, int64_t k) {
  return build_operation(OpKind::kMatmul, {m, n, k});
}

TEST(Interpreter, MatmulByIdentity) {
  const LinalgOp op = matmul(2, 2, 2);
  const std::vector<Buffer> in = {Buffer{{2, 2}, {1, 2, 3, 4}}, Buffer{{2, 2}, {1, 0, 0, 1}}};
  EXPECT_EQ(interpret(op, in).data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(Interpreter, Relu) {
  const LinalgOp op = build_operation(OpKind::kRelu, {4});
  EXPECT_EQ(interpret(op, {Buffer{{4}, {-1, 0, 2, -3}}}).data, (std::vector<double>{0, 0, 2, 0}));
}

TEST(Interpreter, ConvolutionMatchesDirectLoops) {
  const std::vector<int64_t> shape = {1, 5, 4, 2, 3, 2, 2};
  const LinalgOp op = build_operation(OpKind::kConv2D, shape);
  const auto in = make_inputs(op, 3, FillKind::kInteger);
  const Buffer out = interpret(op, in);
  const WindowGeometry g = conv_geometry(shape);
  const auto& x = in[0].data;
  const auto& w = in[1].data;
  for (int64_t oh = 0; oh < g.out_h; ++oh) {
    for (int64_t ow = 0; ow < g.out_w; ++ow) {
      for (int64_t co = 0; co < g.channels_out; ++co) {
        double acc = 0.0;
        for (int64_t kh = 0; kh < g.k_h; ++kh) {
          for (int64_t kw = 0; kw < g.k_w; ++kw) {
            for (int64_t ci = 0; ci < g.channels_in; ++ci) {
              acc += x[((oh + kh) * g.in_w + (ow + kw)) * g.channels_in + ci] *
                     w[((kh * g.k_w + kw) * g.channels_in + ci) * g.channels_out + co];
            }
          }
        }
        EXPECT_EQ(out.data[(oh * g.out_w + ow) * g.channels_out + co], acc);
      }
    }
  }
}

TEST(Interpreter, MaxpoolMatchesDirectLoops) {
  const std::vector<int64_t> shape = {1, 5, 5, 2, 2, 3};
  const LinalgOp op = build_operation(OpKind::kMaxpool, shape);
  const auto in = make_inputs(op, 4, FillKind::kFloat);
  const Buffer out = interpret(op, in);
  const WindowGeometry g = pool_geometry(shape);
  for (int64_t oh = 0; oh < g.out_h; ++oh) {
    for (int64_t ow = 0; ow < g.out_w; ++ow) {
      for (int64_t c = 0; c < g.channels_in; ++c) {
        double m = -1e300;
        for (int64_t kh = 0; kh < g.k_h; ++kh) {
          for (int64_t kw = 0; kw < g.k_w; ++kw) {
            m = std::max(m, in[0].data[((oh + kh) * g.in_w + ow + kw) * g.channels_in + c]);
          }
        }
        EXPECT_EQ(out.data[(oh * g.out_w + ow) * g.channels_in + c], m);
      }
    }
  }
}

TEST(Interpreter, Errors) {
  const LinalgOp op = matmul(2, 2, 2);
  try {
    interpret(op, {Buffer{{2, 3}, std::vector<double>(6)}, Buffer{{2, 2}, std::vector<double>(4)}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kExtentMismatch);
  }
  try {
    const LinalgOp big = matmul(65, 2, 2);
    interpret(big, make_inputs(big, 1, FillKind::kInteger));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSafetyLimitExceeded);
  }
}

// Footprint rule evaluated by hand for Matmul 64^3 under the defaults:
// untiled, no band fits until k alone (A: 4 lines, B: 64 lines, C: 1 line per
// (i, j)); tiled 32^3, the (i_in, j_in, k_in) band holds 3 x 32 x 2 lines.
TEST(AnalyticCost, MatmulFootprintHandCheck) {
  const CostConfig cfg;
  const CostReport untiled = analytic_cost(matmul(64, 64, 64), cfg);
  EXPECT_DOUBLE_EQ(untiled.compute_term, 64.0 * 64 * 64 * 2);
  EXPECT_DOUBLE_EQ(untiled.memory_term, 8.0 * 16896);
  const CostReport tiled = analytic_cost(apply_tiling(matmul(64, 64, 64), {32, 32, 32}), cfg);
  EXPECT_DOUBLE_EQ(tiled.memory_term, 8.0 * 1024);
  EXPECT_LT(tiled.memory_term, untiled.memory_term);
  EXPECT_DOUBLE_EQ(untiled.total, untiled.compute_term + untiled.memory_term);
}

TEST(AnalyticCost, BandLines) {
  const LinalgOp op = matmul(64, 64, 64);
  // B[k, j] over the whole nest: 64 rows x (64 floats = 4 lines).
  EXPECT_EQ(band_lines(op.loads[1], op.loops, 0, 4, 64), 256);
  // Only k varies: 64 distinct rows, one line each.
  EXPECT_EQ(band_lines(op.loads[1], op.loops, 2, 4, 64), 64);
  EXPECT_EQ(band_lines(op.loads[0], op.loops, 2, 4, 64), 4);
  EXPECT_EQ(band_lines(op.loads[0], op.loops, 3, 4, 64), 1);
}

TEST(AnalyticCost, VectorizationNeverHurts) {
  for (const LinalgOp& op : generate_dataset(8, KindCounts::validation_default())) {
    const double before = analytic_cost(op, {}).total;
    const CostReport after = analytic_cost(apply_vectorization(op), {});
    EXPECT_LE(after.total, before);
    EXPECT_GT(after.total, 0.0);
  }
}

TEST(AnalyticCost, ParallelDividesCompute) {
  const LinalgOp op = matmul(64, 64, 64);
  const double base = analytic_cost(op, {}).compute_term;
  const LinalgOp p = apply_parallelization(op, {8, 0, 0});  // outer trip 8 = cores
  EXPECT_DOUBLE_EQ(analytic_cost(p, {}).compute_term, base / 8.0);
  const LinalgOp q = apply_parallelization(op, {32, 0, 0});  // outer trip 2 < cores
  EXPECT_DOUBLE_EQ(analytic_cost(q, {}).compute_term, base / 2.0);
}

TEST(AnalyticCost, NoOpsLeaveCostUnchanged) {
  const LinalgOp op = matmul(32, 16, 8);
  const CostReport base = analytic_cost(op, {});
  EXPECT_EQ(analytic_cost(apply_tiling(op, {0, 0, 0}), {}), base);
  EXPECT_EQ(analytic_cost(apply_interchange(op, 2), {}), base);
  EXPECT_EQ(analytic_cost(op, {}), base);
}

TEST(AnalyticCost, Im2colSurcharge) {
  const LinalgOp conv = build_operation(OpKind::kConv2D, {1, 8, 8, 3, 4, 3, 3});
  const LinalgOp g = apply_im2col(conv);
  CostConfig cfg;
  const double with = analytic_cost(g, cfg).memory_term;
  cfg.im2col_write_cost = 0.0;
  EXPECT_DOUBLE_EQ(with - analytic_cost(g, cfg).memory_term, 36.0 * 27.0);
}

TEST(AnalyticCost, ConfigJsonRoundTrip) {
  CostConfig cfg;
  cfg.cores = 4;
  cfg.miss_penalty = 2.5;
  EXPECT_EQ(cost_config_from_json(to_json(cfg)), cfg);
  try {
    cost_config_from_json(Json{{"cores", 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
}

TEST(Measure, TimeoutFlag) {
  const CostReport r = measure_runs([] { return 15.0; }, 3, 10.0, 1.0);
  EXPECT_TRUE(r.timed_out);
}

TEST(Measure, MedianOfRepeats) {
  std::vector<double> times = {3.0, 1.0, 2.0};
  size_t i = 0;
  const CostReport r = measure_runs([&] { return times[i++]; }, 3, 10.0, 1.0);
  EXPECT_FALSE(r.timed_out);
  EXPECT_DOUBLE_EQ(r.total, 2.0);
}

TEST(Measure, InterpreterDeadline) {
  const LinalgOp op = matmul(64, 64, 64);
  const CostReport slow = measure(op, 1, 10.0, 1e-9);
  EXPECT_TRUE(slow.timed_out);
  const CostReport fine = measure(op, 3);
  EXPECT_FALSE(fine.timed_out);
  EXPECT_GT(fine.total, 0.0);
}

}  // namespace
}  // namespace optgym
