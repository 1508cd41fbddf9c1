#pragma once

// Sequential reference execution of a loop nest on concrete buffers. Parallel
// and vectorized flags are ignored; the result only depends on the iteration
// set and the op's body, which is what makes it a transformation oracle.

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "optgym/loop_ir.hpp"

namespace optgym {

struct Buffer {
  std::vector<int64_t> extents;
  std::vector<double> data;

  bool operator==(const Buffer&) const = default;
};

enum class FillKind { kInteger, kFloat };

struct InterpretOptions {
  int64_t safety_limit = 64;  // per shape entry
  // Aborts with ErrorCode::kTimeout once passed.
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

// Extents of the buffers interpret() expects. An im2col-lowered convolution
// still consumes the original image and filter; the column matrix is
// materialized internally.
std::vector<std::vector<int64_t>> input_extents(const LinalgOp& op);

std::vector<Buffer> make_inputs(const LinalgOp& op, uint64_t seed, FillKind fill);

Buffer interpret(const LinalgOp& op, const std::vector<Buffer>& inputs,
                 const InterpretOptions& options = {});

// max |a-b| / max(|a|, |b|, 1) over all elements; infinity on shape mismatch.
double max_relative_difference(const Buffer& a, const Buffer& b);

}  // namespace optgym
