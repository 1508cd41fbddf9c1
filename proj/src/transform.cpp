#include "optgym/transform.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "optgym/error.hpp"

namespace optgym {

void validate(const EnvLimits& limits) {
  if (limits.max_loops < 1 || limits.tile_choices < 1 || limits.max_dims < 1 ||
      limits.max_schedule < 1 || limits.max_loads < 1) {
    throw Error(ErrorCode::kLimitExceeded, "all environment limits must be >= 1");
  }
}

Json to_json(const EnvLimits& limits) {
  return Json{{"max_loops", limits.max_loops},
              {"tile_choices", limits.tile_choices},
              {"max_dims", limits.max_dims},
              {"max_schedule", limits.max_schedule},
              {"max_loads", limits.max_loads}};
}

EnvLimits env_limits_from_json(const Json& j) {
  EnvLimits l;
  l.max_loops = j.value("max_loops", l.max_loops);
  l.tile_choices = j.value("tile_choices", l.tile_choices);
  l.max_dims = j.value("max_dims", l.max_dims);
  l.max_schedule = j.value("max_schedule", l.max_schedule);
  l.max_loads = j.value("max_loads", l.max_loads);
  validate(l);
  return l;
}

std::string_view transform_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::kTiling: return "Tiling";
    case TransformKind::kParallelization: return "Parallelization";
    case TransformKind::kInterchange: return "Interchange";
    case TransformKind::kIm2col: return "Im2col";
    case TransformKind::kVectorization: return "Vectorization";
  }
  return "Unknown";
}

TransformKind transform_of(const Action& action) {
  return static_cast<TransformKind>(action.index());
}

bool ActionMask::any() const {
  return std::any_of(transform.begin(), transform.end(), [](bool b) { return b; });
}

std::vector<int64_t> candidate_tile_sizes(const LoopDim& loop, int count) {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(std::max(count, 1)));
  out.push_back(0);
  const int64_t trip = loop.trip();
  for (int64_t size : kTileSizePool) {
    if (static_cast<int>(out.size()) >= count) break;
    if (size <= trip && trip % size == 0) out.push_back(size);
  }
  out.resize(static_cast<size_t>(std::max(count, 1)), 0);
  return out;
}

namespace {

AccessMatrix remap_columns(const AccessMatrix& m, const std::vector<size_t>& source_col) {
  AccessMatrix out;
  out.rows.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    std::vector<int64_t> r(source_col.size() + 1);
    for (size_t c = 0; c < source_col.size(); ++c) r[c] = row[source_col[c]];
    r.back() = row.back();
    out.rows.push_back(std::move(r));
  }
  return out;
}

void remap_all(LinalgOp& op, const std::vector<size_t>& source_col) {
  for (auto& m : op.loads) m = remap_columns(m, source_col);
  if (op.store) op.store = remap_columns(*op.store, source_col);
}

// Shared by tiling and parallelization. Outer tile loops keep their relative
// order and precede the point band, which is the original nest with each
// tiled loop replaced by its inner loop.
LinalgOp tile_loops(const LinalgOp& op, const std::vector<int64_t>& sizes, int max_loops,
                    bool mark_parallel) {
  const size_t n = op.loops.size();
  if (sizes.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, "expected " + std::to_string(n) +
                                                " tile sizes, got " +
                                                std::to_string(sizes.size()));
  }
  size_t tiled = 0;
  for (size_t i = 0; i < n; ++i) {
    if (sizes[i] == 0) continue;
    const int64_t trip = op.loops[i].trip();
    if (sizes[i] < 0 || trip % sizes[i] != 0) {
      throw Error(ErrorCode::kNotDivisor, std::to_string(sizes[i]) + " does not divide trip " +
                                              std::to_string(trip) + " of loop " +
                                              std::to_string(i));
    }
    ++tiled;
  }
  if (tiled == 0) return op;
  if (static_cast<int>(n + tiled) > max_loops) {
    throw Error(ErrorCode::kLoopBudgetExceeded, std::to_string(n + tiled) + " loops > " +
                                                    std::to_string(max_loops));
  }

  LinalgOp out = op;
  out.loops.clear();
  std::vector<size_t> source_col;
  for (size_t i = 0; i < n; ++i) {
    if (sizes[i] == 0) continue;
    const LoopDim& l = op.loops[i];
    LoopDim outer{l.lower, l.upper, l.step * sizes[i], l.parallel || mark_parallel, false};
    out.loops.push_back(outer);
    source_col.push_back(i);
  }
  for (size_t i = 0; i < n; ++i) {
    const LoopDim& l = op.loops[i];
    if (sizes[i] == 0) {
      out.loops.push_back(l);
    } else {
      out.loops.push_back(LoopDim{0, l.step * sizes[i], l.step, false, l.vectorized});
    }
    source_col.push_back(i);
  }
  remap_all(out, source_col);
  return out;
}

bool loops_untransformed(const LinalgOp& op) {
  const LinalgOp fresh = build_operation(op.kind, op.shape, static_cast<int>(op.loops.size()));
  return op.loops == fresh.loops && op.loads == fresh.loads && op.store == fresh.store;
}

}  // namespace

LinalgOp apply_tiling(const LinalgOp& op, const std::vector<int64_t>& sizes, int max_loops) {
  return tile_loops(op, sizes, max_loops, false);
}

LinalgOp apply_parallelization(const LinalgOp& op, const std::vector<int64_t>& sizes,
                               int max_loops) {
  if (op.parallelized) throw Error(ErrorCode::kAlreadyParallelized, "op already parallelized");
  LinalgOp out = tile_loops(op, sizes, max_loops, true);
  if (out.loops.size() != op.loops.size()) out.parallelized = true;
  return out;
}

LinalgOp apply_interchange(const LinalgOp& op, int64_t swap_index) {
  const auto n = static_cast<int64_t>(op.loops.size());
  if (swap_index < 0 || swap_index > n - 1) {
    throw Error(ErrorCode::kIndexOutOfRange, "swap index " + std::to_string(swap_index) +
                                                 " outside [0, " + std::to_string(n - 1) + "]");
  }
  if (swap_index == n - 1) return op;
  const auto k = static_cast<size_t>(swap_index);
  LinalgOp out = op;
  std::swap(out.loops[k], out.loops[k + 1]);
  auto swap_cols = [k](AccessMatrix& m) {
    for (auto& row : m.rows) std::swap(row[k], row[k + 1]);
  };
  for (auto& m : out.loads) swap_cols(m);
  if (out.store) swap_cols(*out.store);
  return out;
}

LinalgOp apply_im2col(const LinalgOp& op) {
  if (op.kind != OpKind::kConv2D) {
    throw Error(ErrorCode::kNotConvolution, "im2col applies only to convolutions");
  }
  if (op.im2col_applied) throw Error(ErrorCode::kAlreadyApplied, "im2col already applied");
  if (!loops_untransformed(op)) {
    throw Error(ErrorCode::kLoopsTransformed, "im2col must precede loop transformations");
  }
  const WindowGeometry g = conv_geometry(op.shape);
  const int64_t m = g.batch * g.out_h * g.out_w;
  const int64_t k = g.k_h * g.k_w * g.channels_in;
  LinalgOp gemm = build_operation(OpKind::kMatmul, {m, g.channels_out, k});
  LinalgOp out = op;
  out.loops = gemm.loops;
  out.loads = gemm.loads;
  out.store = gemm.store;
  out.im2col_applied = true;
  out.im2col_surcharge_elems = m * k;
  return out;
}

LinalgOp apply_vectorization(const LinalgOp& op) {
  for (const LoopDim& l : op.loops) {
    if (l.vectorized) throw Error(ErrorCode::kAlreadyVectorized, "op already vectorized");
  }
  LinalgOp out = op;
  out.loops.back().vectorized = true;
  return out;
}

LinalgOp apply_action(const LinalgOp& op, const Action& action, int max_loops) {
  return std::visit(
      [&](const auto& a) -> LinalgOp {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Tiling>) {
          return apply_tiling(op, a.sizes, max_loops);
        } else if constexpr (std::is_same_v<T, Parallelization>) {
          return apply_parallelization(op, a.sizes, max_loops);
        } else if constexpr (std::is_same_v<T, Interchange>) {
          return apply_interchange(op, a.swap_index);
        } else if constexpr (std::is_same_v<T, Im2col>) {
          return apply_im2col(op);
        } else {
          return apply_vectorization(op);
        }
      },
      action);
}

void validate_schedule(const Schedule& schedule, int max_length) {
  if (static_cast<int>(schedule.actions.size()) > max_length) {
    throw Error(ErrorCode::kInvalidSchedule, "schedule longer than " + std::to_string(max_length));
  }
  int parallel = 0;
  for (size_t i = 0; i < schedule.actions.size(); ++i) {
    const TransformKind kind = transform_of(schedule.actions[i]);
    if (kind == TransformKind::kParallelization && ++parallel > 1) {
      throw Error(ErrorCode::kAlreadyParallelized, "schedule parallelizes twice");
    }
    if (kind == TransformKind::kVectorization && i + 1 != schedule.actions.size()) {
      throw Error(ErrorCode::kInvalidSchedule, "vectorization must be the last action");
    }
  }
}

LinalgOp apply_schedule(const LinalgOp& op, const Schedule& schedule, int max_loops) {
  validate_schedule(schedule, std::numeric_limits<int>::max());
  LinalgOp current = op;
  for (const Action& a : schedule.actions) current = apply_action(current, a, max_loops);
  return current;
}

ActionMask compute_mask(const LinalgOp& op, const Schedule& history, int step,
                        const EnvLimits& limits) {
  const auto n = static_cast<int>(op.loops.size());
  const int slots = limits.tile_choices + 1;
  ActionMask mask;
  mask.tile_choices.assign(static_cast<size_t>(limits.max_loops),
                           std::vector<int64_t>(static_cast<size_t>(slots), 0));
  mask.tile_sizes.assign(static_cast<size_t>(limits.max_loops),
                         std::vector<bool>(static_cast<size_t>(slots), false));
  mask.interchange.assign(static_cast<size_t>(limits.max_loops), false);
  mask.tile_budget = std::max(0, limits.max_loops - n);

  bool any_candidate = false;
  for (int i = 0; i < limits.max_loops; ++i) {
    mask.tile_sizes[i][0] = true;
    if (i >= n) continue;
    mask.tile_choices[i] = candidate_tile_sizes(op.loops[i], slots);
    for (int j = 1; j < slots; ++j) {
      if (mask.tile_choices[i][j] != 0) {
        mask.tile_sizes[i][j] = true;
        any_candidate = true;
      }
    }
  }
  for (int k = 0; k < std::min(n, limits.max_loops); ++k) mask.interchange[k] = true;

  const bool vectorized =
      std::any_of(op.loops.begin(), op.loops.end(), [](const LoopDim& l) { return l.vectorized; });
  if (vectorized || step >= limits.max_schedule) return mask;  // terminal: nothing allowed

  bool parallel_used = op.parallelized;
  bool nest_touched = false;
  for (const Action& a : history.actions) {
    const TransformKind kind = transform_of(a);
    if (kind == TransformKind::kParallelization) parallel_used = true;
    if (kind == TransformKind::kTiling || kind == TransformKind::kParallelization ||
        kind == TransformKind::kInterchange) {
      nest_touched = true;
    }
  }

  auto set = [&](TransformKind k, bool v) { mask.transform[static_cast<size_t>(k)] = v; };
  set(TransformKind::kVectorization, true);
  if (step == limits.max_schedule - 1) return mask;

  const bool can_tile = any_candidate && mask.tile_budget > 0;
  set(TransformKind::kTiling, can_tile);
  set(TransformKind::kParallelization, can_tile && !parallel_used);
  set(TransformKind::kInterchange, n >= 2);
  set(TransformKind::kIm2col,
      op.kind == OpKind::kConv2D && !op.im2col_applied && !nest_touched);
  return mask;
}

uint64_t action_space_size(int max_loops, int tile_choices) {
  if (max_loops < 1 || tile_choices < 1) {
    throw Error(ErrorCode::kLimitExceeded, "N and M must be >= 1");
  }
  auto mul = [](uint64_t a, uint64_t b) {
    uint64_t r = 0;
    if (__builtin_mul_overflow(a, b, &r)) throw Error(ErrorCode::kOverflow, "|A| overflows");
    return r;
  };
  auto add = [](uint64_t a, uint64_t b) {
    uint64_t r = 0;
    if (__builtin_add_overflow(a, b, &r)) throw Error(ErrorCode::kOverflow, "|A| overflows");
    return r;
  };
  uint64_t tiling = 1;
  for (int i = 0; i < max_loops; ++i) tiling = mul(tiling, static_cast<uint64_t>(tile_choices));
  uint64_t permutations = 1;
  for (int i = 2; i <= max_loops; ++i) permutations = mul(permutations, static_cast<uint64_t>(i));
  return add(add(mul(2, tiling), permutations), 2);
}

// ---------------------------------------------------------------------------

Json to_json(const Action& action) {
  Json j;
  j["t"] = transform_name(transform_of(action));
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Tiling> || std::is_same_v<T, Parallelization>) {
          j["sizes"] = a.sizes;
        } else if constexpr (std::is_same_v<T, Interchange>) {
          j["k"] = a.swap_index;
        }
      },
      action);
  return j;
}

Action action_from_json(const Json& j) {
  try {
    const auto t = j.at("t").get<std::string>();
    if (t == "Tiling") return Tiling{j.at("sizes").get<std::vector<int64_t>>()};
    if (t == "Parallelization") return Parallelization{j.at("sizes").get<std::vector<int64_t>>()};
    if (t == "Interchange") return Interchange{j.at("k").get<int64_t>()};
    if (t == "Im2col") return Im2col{};
    if (t == "Vectorization") return Vectorization{};
    throw Error(ErrorCode::kParse, "unknown action '" + t + "'");
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

Json to_json(const Schedule& schedule) {
  Json actions = Json::array();
  for (const Action& a : schedule.actions) actions.push_back(to_json(a));
  Json j;
  j["actions"] = std::move(actions);
  return j;
}

Schedule schedule_from_json(const Json& j) {
  if (!j.contains("actions") || !j.at("actions").is_array()) {
    throw Error(ErrorCode::kParse, "schedule needs an 'actions' array");
  }
  Schedule s;
  for (const auto& aj : j.at("actions")) s.actions.push_back(action_from_json(aj));
  return s;
}

}  // namespace optgym
