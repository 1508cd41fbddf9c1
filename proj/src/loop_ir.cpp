#include "optgym/loop_ir.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "optgym/error.hpp"

namespace optgym {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeArity: return "ShapeArity";
    case ErrorCode::kTooManyLoops: return "TooManyLoops";
    case ErrorCode::kNotDivisor: return "NotDivisor";
    case ErrorCode::kLoopBudgetExceeded: return "LoopBudgetExceeded";
    case ErrorCode::kAlreadyParallelized: return "AlreadyParallelized";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNotConvolution: return "NotConvolution";
    case ErrorCode::kAlreadyApplied: return "AlreadyApplied";
    case ErrorCode::kLoopsTransformed: return "LoopsTransformed";
    case ErrorCode::kAlreadyVectorized: return "AlreadyVectorized";
    case ErrorCode::kLimitExceeded: return "LimitExceeded";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kExtentMismatch: return "ExtentMismatch";
    case ErrorCode::kSafetyLimitExceeded: return "SafetyLimitExceeded";
    case ErrorCode::kEpisodeDone: return "EpisodeDone";
    case ErrorCode::kMaskedAction: return "MaskedAction";
    case ErrorCode::kAllMasked: return "AllMasked";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kOverflow: return "Overflow";
    case ErrorCode::kInvalidSchedule: return "InvalidSchedule";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kTimeout: return "Timeout";
  }
  return "Unknown";
}

std::string_view op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv2D: return "conv2d";
    case OpKind::kMaxpool: return "maxpool";
    case OpKind::kAdd: return "add";
    case OpKind::kRelu: return "relu";
  }
  return "unknown";
}

OpKind parse_op_kind(std::string_view name) {
  for (OpKind kind : kAllOpKinds) {
    if (op_kind_name(kind) == name) return kind;
  }
  throw Error(ErrorCode::kParse, "unknown op kind '" + std::string(name) + "'");
}

int64_t MathOpCounts::total() const {
  int64_t sum = 0;
  for (int64_t v : values) sum += v;
  return sum;
}

namespace {

// Row with a single coefficient per listed loop.
std::vector<int64_t> access_row(size_t num_loops, std::initializer_list<size_t> loops) {
  std::vector<int64_t> row(num_loops + 1, 0);
  for (size_t l : loops) row[l] = 1;
  return row;
}

AccessMatrix identity_access(size_t rank) {
  AccessMatrix m;
  for (size_t d = 0; d < rank; ++d) m.rows.push_back(access_row(rank, {d}));
  return m;
}

void require_arity(OpKind kind, const std::vector<int64_t>& shape, size_t expected) {
  if (shape.size() != expected) {
    throw Error(ErrorCode::kShapeArity,
                std::string(op_kind_name(kind)) + " expects " + std::to_string(expected) +
                    " shape entries, got " + std::to_string(shape.size()));
  }
}

std::vector<LoopDim> loops_from_trips(const std::vector<int64_t>& trips) {
  std::vector<LoopDim> loops;
  loops.reserve(trips.size());
  for (int64_t t : trips) loops.push_back(LoopDim{0, t, 1});
  return loops;
}

}  // namespace

WindowGeometry conv_geometry(const std::vector<int64_t>& shape) {
  require_arity(OpKind::kConv2D, shape, 7);
  WindowGeometry g{shape[0], shape[1], shape[2], shape[3], shape[4], shape[5], shape[6], 0, 0};
  g.out_h = g.in_h - g.k_h + 1;
  g.out_w = g.in_w - g.k_w + 1;
  if (g.out_h < 1 || g.out_w < 1) {
    throw Error(ErrorCode::kShapeArity, "conv2d kernel larger than input");
  }
  return g;
}

WindowGeometry pool_geometry(const std::vector<int64_t>& shape) {
  require_arity(OpKind::kMaxpool, shape, 6);
  WindowGeometry g{shape[0], shape[1], shape[2], shape[3], shape[3], shape[4], shape[5], 0, 0};
  g.out_h = g.in_h - g.k_h + 1;
  g.out_w = g.in_w - g.k_w + 1;
  if (g.out_h < 1 || g.out_w < 1) {
    throw Error(ErrorCode::kShapeArity, "maxpool window larger than input");
  }
  return g;
}

LinalgOp build_operation(OpKind kind, const std::vector<int64_t>& shape, int max_loops) {
  for (int64_t s : shape) {
    if (s < 1) throw Error(ErrorCode::kShapeArity, "shape entries must be >= 1");
  }
  LinalgOp op;
  op.kind = kind;
  op.shape = shape;
  switch (kind) {
    case OpKind::kMatmul: {
      require_arity(kind, shape, 3);
      // C[i,j] += A[i,k] * B[k,j]; loops (i, j, k).
      op.loops = loops_from_trips(shape);
      op.loads.push_back(AccessMatrix{{access_row(3, {0}), access_row(3, {2})}});
      op.loads.push_back(AccessMatrix{{access_row(3, {2}), access_row(3, {1})}});
      op.store = AccessMatrix{{access_row(3, {0}), access_row(3, {1})}};
      op.counts.values = {1, 0, 1, 0, 0, 0};
      break;
    }
    case OpKind::kConv2D: {
      const WindowGeometry g = conv_geometry(shape);
      // out[b,oh,ow,co] += in[b,oh+kh,ow+kw,ci] * w[kh,kw,ci,co]
      // loops (b, oh, ow, co, kh, kw, ci).
      op.loops = loops_from_trips({g.batch, g.out_h, g.out_w, g.channels_out, g.k_h, g.k_w,
                                   g.channels_in});
      op.loads.push_back(AccessMatrix{{access_row(7, {0}), access_row(7, {1, 4}),
                                       access_row(7, {2, 5}), access_row(7, {6})}});
      op.loads.push_back(AccessMatrix{{access_row(7, {4}), access_row(7, {5}),
                                       access_row(7, {6}), access_row(7, {3})}});
      op.store = AccessMatrix{{access_row(7, {0}), access_row(7, {1}), access_row(7, {2}),
                               access_row(7, {3})}};
      op.counts.values = {1, 0, 1, 0, 0, 0};
      break;
    }
    case OpKind::kMaxpool: {
      const WindowGeometry g = pool_geometry(shape);
      // out[b,oh,ow,c] = max(out, in[b,oh+kh,ow+kw,c]); loops (b, oh, ow, c, kh, kw).
      op.loops = loops_from_trips({g.batch, g.out_h, g.out_w, g.channels_in, g.k_h, g.k_w});
      op.loads.push_back(AccessMatrix{{access_row(6, {0}), access_row(6, {1, 4}),
                                       access_row(6, {2, 5}), access_row(6, {3})}});
      op.store = AccessMatrix{{access_row(6, {0}), access_row(6, {1}), access_row(6, {2}),
                               access_row(6, {3})}};
      op.counts.values = {1, 0, 0, 0, 0, 0};
      break;
    }
    case OpKind::kAdd:
    case OpKind::kRelu: {
      if (shape.empty() || shape.size() > 4) {
        throw Error(ErrorCode::kShapeArity, std::string(op_kind_name(kind)) +
                                                " expects 1-4 shape entries, got " +
                                                std::to_string(shape.size()));
      }
      op.loops = loops_from_trips(shape);
      op.loads.push_back(identity_access(shape.size()));
      if (kind == OpKind::kAdd) op.loads.push_back(identity_access(shape.size()));
      op.store = identity_access(shape.size());
      op.counts.values = {1, 0, 0, 0, 0, 0};
      break;
    }
  }
  if (static_cast<int>(op.loops.size()) > max_loops) {
    throw Error(ErrorCode::kTooManyLoops, std::to_string(op.loops.size()) + " loops > " +
                                              std::to_string(max_loops));
  }
  return op;
}

int64_t trip_count(const LinalgOp& op) {
  int64_t total = 1;
  for (const LoopDim& l : op.loops) total *= l.trip();
  return total;
}

std::vector<std::vector<int64_t>> load_extents(const LinalgOp& op) {
  switch (op.kind) {
    case OpKind::kMatmul:
      return {{op.shape[0], op.shape[2]}, {op.shape[2], op.shape[1]}};
    case OpKind::kConv2D: {
      const WindowGeometry g = conv_geometry(op.shape);
      if (op.im2col_applied) {
        const int64_t m = g.batch * g.out_h * g.out_w;
        const int64_t k = g.k_h * g.k_w * g.channels_in;
        return {{m, k}, {k, g.channels_out}};
      }
      return {{g.batch, g.in_h, g.in_w, g.channels_in},
              {g.k_h, g.k_w, g.channels_in, g.channels_out}};
    }
    case OpKind::kMaxpool: {
      const WindowGeometry g = pool_geometry(op.shape);
      return {{g.batch, g.in_h, g.in_w, g.channels_in}};
    }
    case OpKind::kAdd:
      return {op.shape, op.shape};
    case OpKind::kRelu:
      return {op.shape};
  }
  return {};
}

std::vector<int64_t> store_extents(const LinalgOp& op) {
  switch (op.kind) {
    case OpKind::kMatmul:
      return {op.shape[0], op.shape[1]};
    case OpKind::kConv2D: {
      const WindowGeometry g = conv_geometry(op.shape);
      if (op.im2col_applied) return {g.batch * g.out_h * g.out_w, g.channels_out};
      return {g.batch, g.out_h, g.out_w, g.channels_out};
    }
    case OpKind::kMaxpool: {
      const WindowGeometry g = pool_geometry(op.shape);
      return {g.batch, g.out_h, g.out_w, g.channels_in};
    }
    case OpKind::kAdd:
    case OpKind::kRelu:
      return op.shape;
  }
  return {};
}

void validate(const LinalgOp& op) {
  if (op.loops.empty()) throw Error(ErrorCode::kParse, "op has no loops");
  for (const LoopDim& l : op.loops) {
    if (l.step < 1 || l.upper <= l.lower) throw Error(ErrorCode::kParse, "invalid loop bounds");
  }
  if (!op.store) throw Error(ErrorCode::kParse, "op has no store");
  const size_t cols = op.loops.size() + 1;
  auto check = [&](const AccessMatrix& m, const std::vector<int64_t>& extents) {
    if (m.dims() != extents.size()) {
      throw Error(ErrorCode::kExtentMismatch, "access rank does not match array rank");
    }
    for (const auto& row : m.rows) {
      if (row.size() != cols) throw Error(ErrorCode::kParse, "access matrix column mismatch");
    }
  };
  const auto extents = load_extents(op);
  if (extents.size() != op.loads.size()) {
    throw Error(ErrorCode::kParse, "load count does not match op kind");
  }
  for (size_t i = 0; i < op.loads.size(); ++i) check(op.loads[i], extents[i]);
  check(*op.store, store_extents(op));
}

// ---------------------------------------------------------------------------

ShapeRanges ShapeRanges::capped(int64_t max_dim) {
  ShapeRanges r;
  auto cap = [&](DimRange& d, int64_t hi) {
    d.hi = std::min(d.hi, hi);
    d.lo = std::min(d.lo, d.hi);
  };
  cap(r.matmul, max_dim);
  cap(r.batch, max_dim);
  cap(r.channels, max_dim);
  cap(r.kernel, max_dim);
  cap(r.elementwise, max_dim);
  // Input extent = output extent + kernel - 1 must stay within max_dim too.
  cap(r.spatial, std::max<int64_t>(4, max_dim - (r.kernel.hi - 1)));
  return r;
}

int64_t KindCounts::total() const {
  int64_t sum = 0;
  for (int64_t v : per_kind) sum += v;
  return sum;
}

KindCounts KindCounts::training_default() { return KindCounts{{175, 232, 200, 248, 233}}; }
KindCounts KindCounts::validation_default() { return KindCounts{{15, 18, 10, 10, 14}}; }

int64_t round_divisor_rich(int64_t value) { return std::max<int64_t>(4, value / 4 * 4); }

namespace {

int64_t draw(std::mt19937_64& rng, DimRange r) {
  if (r.hi <= r.lo) return r.lo;
  const uint64_t span = static_cast<uint64_t>(r.hi - r.lo + 1);
  return r.lo + static_cast<int64_t>(rng() % span);
}

int64_t draw_rounded(std::mt19937_64& rng, DimRange r) {
  return round_divisor_rich(draw(rng, r));
}

std::vector<int64_t> random_shape(std::mt19937_64& rng, OpKind kind, const ShapeRanges& r) {
  switch (kind) {
    case OpKind::kMatmul:
      return {draw_rounded(rng, r.matmul), draw_rounded(rng, r.matmul),
              draw_rounded(rng, r.matmul)};
    case OpKind::kConv2D: {
      const int64_t b = draw(rng, r.batch);
      const int64_t oh = draw_rounded(rng, r.spatial);
      const int64_t ow = draw_rounded(rng, r.spatial);
      const int64_t cin = draw_rounded(rng, r.channels);
      const int64_t cout = draw_rounded(rng, r.channels);
      const int64_t kh = draw(rng, r.kernel);
      const int64_t kw = draw(rng, r.kernel);
      return {b, oh + kh - 1, ow + kw - 1, cin, cout, kh, kw};
    }
    case OpKind::kMaxpool: {
      const int64_t b = draw(rng, r.batch);
      const int64_t oh = draw_rounded(rng, r.spatial);
      const int64_t ow = draw_rounded(rng, r.spatial);
      const int64_t c = draw_rounded(rng, r.channels);
      const int64_t kh = std::max<int64_t>(2, draw(rng, r.kernel));
      const int64_t kw = std::max<int64_t>(2, draw(rng, r.kernel));
      return {b, oh + kh - 1, ow + kw - 1, c, kh, kw};
    }
    case OpKind::kAdd:
    case OpKind::kRelu: {
      const int64_t rank = draw(rng, DimRange{r.min_rank, r.max_rank});
      std::vector<int64_t> shape(static_cast<size_t>(rank));
      for (auto& d : shape) d = draw_rounded(rng, r.elementwise);
      return shape;
    }
  }
  return {};
}

}  // namespace

std::vector<LinalgOp> generate_dataset(uint64_t seed, const KindCounts& counts,
                                       const ShapeRanges& ranges) {
  std::mt19937_64 rng(seed);
  std::vector<LinalgOp> ops;
  ops.reserve(static_cast<size_t>(counts.total()));
  for (OpKind kind : kAllOpKinds) {
    for (int64_t i = 0; i < counts[kind]; ++i) {
      ops.push_back(build_operation(kind, random_shape(rng, kind, ranges)));
    }
  }
  // Interleave kinds so any prefix is a representative sample.
  for (size_t i = ops.size(); i > 1; --i) {
    std::swap(ops[i - 1], ops[rng() % i]);
  }
  return ops;
}

// ---------------------------------------------------------------------------

namespace {

Json access_to_json(const AccessMatrix& m) {
  Json rows = Json::array();
  for (const auto& row : m.rows) rows.push_back(row);
  return rows;
}

AccessMatrix access_from_json(const Json& j) {
  AccessMatrix m;
  for (const auto& row : j) m.rows.push_back(row.get<std::vector<int64_t>>());
  return m;
}

}  // namespace

Json to_json(const LinalgOp& op) {
  Json j;
  j["kind"] = op_kind_name(op.kind);
  j["shape"] = op.shape;
  Json loops = Json::array();
  for (const LoopDim& l : op.loops) {
    Json lj;
    lj["lower"] = l.lower;
    lj["upper"] = l.upper;
    lj["step"] = l.step;
    if (l.parallel) lj["parallel"] = true;
    if (l.vectorized) lj["vectorized"] = true;
    loops.push_back(std::move(lj));
  }
  j["loops"] = std::move(loops);
  Json loads = Json::array();
  for (const auto& m : op.loads) loads.push_back(access_to_json(m));
  j["loads"] = std::move(loads);
  j["store"] = op.store ? access_to_json(*op.store) : Json(nullptr);
  j["counts"] = op.counts.values;
  if (op.elem_bytes != 4) j["elem_bytes"] = op.elem_bytes;
  if (op.parallelized) j["parallelized"] = true;
  if (op.im2col_applied) {
    j["im2col"] = true;
    j["im2col_surcharge"] = op.im2col_surcharge_elems;
  }
  return j;
}

LinalgOp op_from_json(const Json& j) {
  try {
    LinalgOp op = build_operation(parse_op_kind(j.at("kind").get<std::string>()),
                                  j.at("shape").get<std::vector<int64_t>>());
    if (j.contains("loops")) {
      op.loops.clear();
      for (const auto& lj : j.at("loops")) {
        LoopDim l;
        l.lower = lj.at("lower").get<int64_t>();
        l.upper = lj.at("upper").get<int64_t>();
        l.step = lj.at("step").get<int64_t>();
        l.parallel = lj.value("parallel", false);
        l.vectorized = lj.value("vectorized", false);
        op.loops.push_back(l);
      }
    }
    if (j.contains("loads")) {
      op.loads.clear();
      for (const auto& mj : j.at("loads")) op.loads.push_back(access_from_json(mj));
    }
    if (j.contains("store") && !j.at("store").is_null()) op.store = access_from_json(j.at("store"));
    if (j.contains("counts")) {
      const auto counts = j.at("counts").get<std::vector<int64_t>>();
      if (counts.size() != 6) throw Error(ErrorCode::kParse, "counts must have 6 entries");
      std::copy(counts.begin(), counts.end(), op.counts.values.begin());
    }
    op.elem_bytes = j.value("elem_bytes", int64_t{4});
    op.parallelized = j.value("parallelized", false);
    op.im2col_applied = j.value("im2col", false);
    op.im2col_surcharge_elems = j.value("im2col_surcharge", int64_t{0});
    validate(op);
    return op;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

std::string to_jsonl(const std::vector<LinalgOp>& ops) {
  std::string out;
  for (const LinalgOp& op : ops) {
    out += to_json(op).dump();
    out += '\n';
  }
  return out;
}

std::vector<LinalgOp> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open " + path);
  std::vector<LinalgOp> ops;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ops.push_back(op_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kParse, path + ": " + e.what());
    }
  }
  return ops;
}

void write_jsonl(const std::string& path, const std::vector<LinalgOp>& ops) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kParse, "cannot write " + path);
  out << to_jsonl(ops);
}

}  // namespace optgym
