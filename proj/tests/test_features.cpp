#include <gtest/gtest.h>

#include <cmath>

#include "optgym/error.hpp"
#include "optgym/features.hpp"

namespace optgym {
namespace {

// Segment offsets for the default limits.
constexpr size_t kLoopSeg = 0, kLoadSeg = 7, kStoreSeg = 7 + 96, kCountSeg = 7 + 96 + 32,
                 kHistSeg = kCountSeg + 6, kFlagSeg = kHistSeg + 147;

TEST(Observation, DefaultLength) {
  EXPECT_EQ(observation_size(EnvLimits{}), 290u);
  EXPECT_EQ(kFlagSeg + 2, 290u);
}

TEST(Observation, MatmulSegments) {
  const LinalgOp op = build_operation(OpKind::kMatmul, {2, 2, 2});
  const Observation obs = extract(op, HistoryTensor(EnvLimits{}), EnvLimits{});
  ASSERT_EQ(obs.size(), 290u);
  for (size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(obs[kLoopSeg + i], i < 3 ? std::log1p(2.0) : 0.0);
  for (size_t i = kHistSeg; i < 290; ++i) EXPECT_EQ(obs[i], 0.0);
  // A = [[1,0,0 | 0],[0,0,1 | 0]] padded to 8 columns, constant last.
  EXPECT_EQ(obs[kLoadSeg + 0], 1.0);
  EXPECT_EQ(obs[kLoadSeg + 8 + 2], 1.0);
  // C's second row selects j.
  EXPECT_EQ(obs[kStoreSeg + 8 + 1], 1.0);
  EXPECT_EQ(obs[kCountSeg + 0], 1.0);
  EXPECT_EQ(obs[kCountSeg + 2], 1.0);
}

TEST(Observation, HistoryOnlyChangesTrailingSegments) {
  const LinalgOp op = build_operation(OpKind::kMatmul, {8, 8, 8});
  const HistoryTensor empty(EnvLimits{});
  const HistoryTensor h = record_history(empty, Tiling{{2, 0, 4}}, 0, 3);
  const Observation a = extract(op, empty, EnvLimits{});
  const Observation b = extract(op, record_history(h, Vectorization{}, 1, 3), EnvLimits{});
  for (size_t i = 0; i < kHistSeg; ++i) EXPECT_EQ(a[i], b[i]) << i;
  EXPECT_NE(a, b);
  EXPECT_EQ(b[kFlagSeg], 1.0);
  EXPECT_EQ(b[kFlagSeg + 1], 0.0);
}

TEST(Observation, LimitExceeded) {
  EnvLimits small;
  small.max_loops = 2;
  try {
    extract(build_operation(OpKind::kMatmul, {2, 2, 2}), HistoryTensor(small), small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLimitExceeded);
  }
}

TEST(Observation, FiniteAndNonNegativeOnDataset) {
  const EnvLimits limits;
  for (const LinalgOp& op : generate_dataset(2, KindCounts::validation_default())) {
    const Observation obs = extract(op, HistoryTensor(limits), limits);
    ASSERT_EQ(obs.size(), 290u);
    for (double v : obs) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Observation, AccessSegmentsDistinguishKinds) {
  const EnvLimits limits;
  const HistoryTensor h(limits);
  const Observation add = extract(build_operation(OpKind::kAdd, {8, 8, 8}), h, limits);
  const Observation mm = extract(build_operation(OpKind::kMatmul, {8, 8, 8}), h, limits);
  EXPECT_FALSE(std::equal(add.begin() + kLoadSeg, add.begin() + kCountSeg, mm.begin() + kLoadSeg));
}

TEST(History, TilingAtStepZero) {
  const HistoryTensor h = record_history(HistoryTensor(EnvLimits{}), Tiling{{2, 0, 0}}, 0, 3);
  EXPECT_EQ(h.at(0, 0, 0), 2.0);
  double sum = 0.0;
  for (double v : h.values()) sum += v;
  EXPECT_EQ(sum, 2.0);
}

TEST(History, ParallelizationIndex) {
  const HistoryTensor h =
      record_history(HistoryTensor(EnvLimits{}), Parallelization{{0, 4, 0}}, 2, 3);
  EXPECT_EQ(h.at(1, 1, 2), 4.0);
}

TEST(History, InterchangeWritesBothLoops) {
  const HistoryTensor empty(EnvLimits{});
  const HistoryTensor h = record_history(empty, Interchange{1}, 3, 3);
  EXPECT_EQ(h.at(1, 2, 3), 2.0);
  EXPECT_EQ(h.at(2, 2, 3), 2.0);
  EXPECT_EQ(record_history(empty, Interchange{2}, 0, 3), empty);
}

TEST(History, FlagsAndStepRange) {
  const HistoryTensor empty(EnvLimits{});
  EXPECT_TRUE(record_history(empty, Im2col{}, 0, 7).im2col);
  EXPECT_TRUE(record_history(empty, Vectorization{}, 0, 7).vectorized);
  try {
    record_history(empty, Vectorization{}, 7, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStepOutOfRange);
  }
}

}  // namespace
}  // namespace optgym
