#pragma once

// Loop-nest IR for the five benchmark operation kinds.
//
// A LinalgOp is a perfect loop nest with box-shaped iteration domains: every
// loop iterates lower, lower+step, ... < upper independently of the others.
// Array subscripts are affine in the loop values; the coefficients live in one
// AccessMatrix per load (and one for the store), with the constant term in the
// last column.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace optgym {

using Json = nlohmann::ordered_json;

inline constexpr int kDefaultMaxLoops = 7;

struct LoopDim {
  int64_t lower = 0;
  int64_t upper = 1;
  int64_t step = 1;
  bool parallel = false;
  bool vectorized = false;

  int64_t trip() const { return (upper - lower + step - 1) / step; }
  bool operator==(const LoopDim&) const = default;
};

struct AccessMatrix {
  // rows[d] has (loop count + 1) entries; the last one is the constant.
  std::vector<std::vector<int64_t>> rows;

  size_t dims() const { return rows.size(); }
  size_t cols() const { return rows.empty() ? 0 : rows.front().size(); }
  bool operator==(const AccessMatrix&) const = default;
};

enum class OpKind { kMatmul, kConv2D, kMaxpool, kAdd, kRelu };

inline constexpr std::array<OpKind, 5> kAllOpKinds = {
    OpKind::kMatmul, OpKind::kConv2D, OpKind::kMaxpool, OpKind::kAdd,
    OpKind::kRelu};

std::string_view op_kind_name(OpKind kind);
OpKind parse_op_kind(std::string_view name);

// Counts per innermost-body execution: add, sub, mul, div, exp, log.
struct MathOpCounts {
  std::array<int64_t, 6> values{};

  int64_t add() const { return values[0]; }
  int64_t mul() const { return values[2]; }
  int64_t total() const;
  bool operator==(const MathOpCounts&) const = default;
};

struct LinalgOp {
  OpKind kind = OpKind::kMatmul;
  std::vector<int64_t> shape;
  std::vector<LoopDim> loops;
  std::vector<AccessMatrix> loads;
  std::optional<AccessMatrix> store;
  MathOpCounts counts;
  int64_t elem_bytes = 4;

  // Transformation annotations.
  bool parallelized = false;
  bool im2col_applied = false;
  int64_t im2col_surcharge_elems = 0;

  size_t num_loops() const { return loops.size(); }
  bool operator==(const LinalgOp&) const = default;
};

// Convolution / pooling window geometry (stride 1, no padding, NHWC).
struct WindowGeometry {
  int64_t batch, in_h, in_w, channels_in, channels_out, k_h, k_w;
  int64_t out_h, out_w;
};

WindowGeometry conv_geometry(const std::vector<int64_t>& shape);
WindowGeometry pool_geometry(const std::vector<int64_t>& shape);

LinalgOp build_operation(OpKind kind, const std::vector<int64_t>& shape,
                         int max_loops = kDefaultMaxLoops);

int64_t trip_count(const LinalgOp& op);

// Row-major extents of every array the nest touches, in the same order as
// op.loads; the store extents are returned separately.
std::vector<std::vector<int64_t>> load_extents(const LinalgOp& op);
std::vector<int64_t> store_extents(const LinalgOp& op);

// Structural validation used after deserialization.
void validate(const LinalgOp& op);

// ---------------------------------------------------------------------------
// Dataset generation

struct DimRange {
  int64_t lo;
  int64_t hi;
};

struct ShapeRanges {
  DimRange matmul{16, 256};
  DimRange batch{1, 2};
  // Output spatial extent for conv/pool; the input extent is derived from it.
  DimRange spatial{8, 64};
  DimRange channels{4, 64};
  DimRange kernel{1, 3};
  DimRange elementwise{4, 256};
  int min_rank = 1;
  int max_rank = 4;

  // Same distribution with every dimension (input extents included) <= max_dim.
  static ShapeRanges capped(int64_t max_dim);
};

struct KindCounts {
  std::array<int64_t, 5> per_kind{};  // indexed like kAllOpKinds

  int64_t total() const;
  int64_t& operator[](OpKind kind) { return per_kind[static_cast<size_t>(kind)]; }
  int64_t operator[](OpKind kind) const { return per_kind[static_cast<size_t>(kind)]; }

  static KindCounts training_default();
  static KindCounts validation_default();
};

// Dimensions are rounded down to a multiple of 4 (minimum 4) so each loop has
// at least two pool divisors; batch and kernel extents are left as drawn.
int64_t round_divisor_rich(int64_t value);

std::vector<LinalgOp> generate_dataset(uint64_t seed, const KindCounts& counts,
                                       const ShapeRanges& ranges = {});

// ---------------------------------------------------------------------------
// JSON (one object per op; field order is stable)

Json to_json(const LinalgOp& op);
LinalgOp op_from_json(const Json& j);

std::string to_jsonl(const std::vector<LinalgOp>& ops);
std::vector<LinalgOp> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<LinalgOp>& ops);

}  // namespace optgym
