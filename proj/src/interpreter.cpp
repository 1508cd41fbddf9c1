#include "optgym/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "optgym/error.hpp"

namespace optgym {

namespace {

int64_t element_count(const std::vector<int64_t>& extents) {
  int64_t n = 1;
  for (int64_t e : extents) n *= e;
  return n;
}

std::vector<int64_t> row_major_strides(const std::vector<int64_t>& extents) {
  std::vector<int64_t> strides(extents.size(), 1);
  for (size_t d = extents.size(); d-- > 1;) strides[d - 1] = strides[d] * extents[d];
  return strides;
}

// Flat offset of an access as an affine function of the loop values.
struct LinearAccess {
  std::vector<int64_t> weight;  // per loop
  int64_t offset = 0;
};

LinearAccess linearize(const AccessMatrix& m, const std::vector<int64_t>& extents,
                       const std::vector<LoopDim>& loops) {
  if (m.dims() != extents.size()) {
    throw Error(ErrorCode::kExtentMismatch, "access rank does not match buffer rank");
  }
  const size_t n = loops.size();
  const auto strides = row_major_strides(extents);
  LinearAccess a;
  a.weight.assign(n, 0);
  for (size_t d = 0; d < m.dims(); ++d) {
    const auto& row = m.rows[d];
    // Box domain: the subscript range follows from the coefficient signs.
    int64_t lo = row[n], hi = row[n];
    for (size_t j = 0; j < n; ++j) {
      const int64_t first = loops[j].lower;
      const int64_t last = loops[j].lower + (loops[j].trip() - 1) * loops[j].step;
      const int64_t x = row[j] * first, y = row[j] * last;
      lo += std::min(x, y);
      hi += std::max(x, y);
      a.weight[j] += row[j] * strides[d];
    }
    if (lo < 0 || hi >= extents[d]) {
      throw Error(ErrorCode::kExtentMismatch,
                  "subscript range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "] exceeds extent " + std::to_string(extents[d]));
    }
    a.offset += row[n] * strides[d];
  }
  return a;
}

Buffer im2col_buffer(const LinalgOp& op, const Buffer& image) {
  const WindowGeometry g = conv_geometry(op.shape);
  const int64_t m = g.batch * g.out_h * g.out_w;
  const int64_t k = g.k_h * g.k_w * g.channels_in;
  Buffer col{{m, k}, std::vector<double>(static_cast<size_t>(m * k))};
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t oh = 0; oh < g.out_h; ++oh)
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        const int64_t row = (b * g.out_h + oh) * g.out_w + ow;
        for (int64_t kh = 0; kh < g.k_h; ++kh)
          for (int64_t kw = 0; kw < g.k_w; ++kw)
            for (int64_t ci = 0; ci < g.channels_in; ++ci) {
              const int64_t col_idx = (kh * g.k_w + kw) * g.channels_in + ci;
              const int64_t src =
                  ((b * g.in_h + oh + kh) * g.in_w + ow + kw) * g.channels_in + ci;
              col.data[static_cast<size_t>(row * k + col_idx)] = image.data[static_cast<size_t>(src)];
            }
      }
  return col;
}

}  // namespace

std::vector<std::vector<int64_t>> input_extents(const LinalgOp& op) {
  if (op.kind == OpKind::kConv2D && op.im2col_applied) {
    LinalgOp conv = op;
    conv.im2col_applied = false;
    return load_extents(conv);
  }
  return load_extents(op);
}

std::vector<Buffer> make_inputs(const LinalgOp& op, uint64_t seed, FillKind fill) {
  std::mt19937_64 rng(seed);
  std::vector<Buffer> inputs;
  for (const auto& extents : input_extents(op)) {
    Buffer b{extents, std::vector<double>(static_cast<size_t>(element_count(extents)))};
    for (double& v : b.data) {
      if (fill == FillKind::kInteger) {
        v = static_cast<double>(static_cast<int64_t>(rng() % 9) - 4);
      } else {
        v = std::ldexp(static_cast<double>(rng() >> 11), -53) * 2.0 - 1.0;
      }
    }
    inputs.push_back(std::move(b));
  }
  return inputs;
}

Buffer interpret(const LinalgOp& op, const std::vector<Buffer>& inputs,
                 const InterpretOptions& options) {
  for (int64_t s : op.shape) {
    if (s > options.safety_limit) {
      throw Error(ErrorCode::kSafetyLimitExceeded,
                  "shape entry " + std::to_string(s) + " > " + std::to_string(options.safety_limit));
    }
  }
  const auto expected = input_extents(op);
  if (inputs.size() != expected.size()) {
    throw Error(ErrorCode::kExtentMismatch, "expected " + std::to_string(expected.size()) +
                                                " input buffers, got " +
                                                std::to_string(inputs.size()));
  }
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].extents != expected[i] ||
        static_cast<int64_t>(inputs[i].data.size()) != element_count(expected[i])) {
      throw Error(ErrorCode::kExtentMismatch, "input " + std::to_string(i) + " has wrong extents");
    }
  }

  // Operand buffers as seen by the access matrices.
  std::vector<const Buffer*> operands;
  Buffer col;
  if (op.kind == OpKind::kConv2D && op.im2col_applied) {
    col = im2col_buffer(op, inputs[0]);
    operands = {&col, &inputs[1]};
  } else {
    for (const Buffer& b : inputs) operands.push_back(&b);
  }
  const auto extents = load_extents(op);

  Buffer out{store_extents(op), {}};
  const bool is_max = op.kind == OpKind::kMaxpool;
  out.data.assign(static_cast<size_t>(element_count(out.extents)),
                  is_max ? -std::numeric_limits<double>::infinity() : 0.0);

  const size_t n = op.loops.size();
  std::vector<LinearAccess> loads;
  for (size_t i = 0; i < op.loads.size(); ++i) {
    loads.push_back(linearize(op.loads[i], extents[i], op.loops));
  }
  const LinearAccess store = linearize(*op.store, out.extents, op.loops);

  const double* in0 = operands[0]->data.data();
  const double* in1 = operands.size() > 1 ? operands[1]->data.data() : nullptr;
  double* dst = out.data.data();

  // Odometer over the outer n-1 loops; the innermost loop runs as a flat strip.
  std::vector<int64_t> value(n);
  for (size_t j = 0; j < n; ++j) value[j] = op.loops[j].lower;
  const LoopDim& inner = op.loops[n - 1];
  const int64_t inner_trip = inner.trip();
  auto base_offset = [&](const LinearAccess& a) {
    int64_t off = a.offset;
    for (size_t j = 0; j + 1 < n; ++j) off += a.weight[j] * value[j];
    return off + a.weight[n - 1] * inner.lower;
  };
  const int64_t s_step = store.weight[n - 1] * inner.step;
  const int64_t l0_step = loads[0].weight[n - 1] * inner.step;
  const int64_t l1_step = loads.size() > 1 ? loads[1].weight[n - 1] * inner.step : 0;

  int64_t strips = 0;
  while (true) {
    int64_t so = base_offset(store);
    int64_t o0 = base_offset(loads[0]);
    int64_t o1 = loads.size() > 1 ? base_offset(loads[1]) : 0;
    switch (op.kind) {
      case OpKind::kMatmul:
      case OpKind::kConv2D:
        for (int64_t t = 0; t < inner_trip; ++t, so += s_step, o0 += l0_step, o1 += l1_step) {
          dst[so] += in0[o0] * in1[o1];
        }
        break;
      case OpKind::kMaxpool:
        for (int64_t t = 0; t < inner_trip; ++t, so += s_step, o0 += l0_step) {
          dst[so] = std::max(dst[so], in0[o0]);
        }
        break;
      case OpKind::kAdd:
        for (int64_t t = 0; t < inner_trip; ++t, so += s_step, o0 += l0_step, o1 += l1_step) {
          dst[so] = in0[o0] + in1[o1];
        }
        break;
      case OpKind::kRelu:
        for (int64_t t = 0; t < inner_trip; ++t, so += s_step, o0 += l0_step) {
          dst[so] = std::max(in0[o0], 0.0);
        }
        break;
    }
    if (options.deadline && (++strips & 255) == 0 &&
        std::chrono::steady_clock::now() > *options.deadline) {
      throw Error(ErrorCode::kTimeout, "interpretation exceeded its deadline");
    }
    // Advance the odometer.
    size_t j = n - 1;
    while (j > 0) {
      --j;
      value[j] += op.loops[j].step;
      if (value[j] < op.loops[j].upper) break;
      value[j] = op.loops[j].lower;
      if (j == 0) return out;
    }
    if (n == 1) return out;
  }
}

double max_relative_difference(const Buffer& a, const Buffer& b) {
  if (a.data.size() != b.data.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double scale = std::max({std::abs(a.data[i]), std::abs(b.data[i]), 1.0});
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / scale);
  }
  return worst;
}

}  // namespace optgym
