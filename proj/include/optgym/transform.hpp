#pragma once

// The five loop transformations, their legality rules, and the per-state
// action mask.

#include <array>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "optgym/limits.hpp"
#include "optgym/loop_ir.hpp"

namespace optgym {

enum class TransformKind { kTiling = 0, kParallelization, kInterchange, kIm2col, kVectorization };
inline constexpr int kNumTransforms = 5;

std::string_view transform_name(TransformKind kind);

// sizes[i] == 0 leaves loop i untouched; a nonzero size must divide the trip count.
struct Tiling {
  std::vector<int64_t> sizes;
  bool operator==(const Tiling&) const = default;
};
struct Parallelization {
  std::vector<int64_t> sizes;
  bool operator==(const Parallelization&) const = default;
};
// swap_index k < n-1 exchanges loops k and k+1; k == n-1 is the identity.
struct Interchange {
  int64_t swap_index = 0;
  bool operator==(const Interchange&) const = default;
};
struct Im2col {
  bool operator==(const Im2col&) const = default;
};
struct Vectorization {
  bool operator==(const Vectorization&) const = default;
};

using Action = std::variant<Tiling, Parallelization, Interchange, Im2col, Vectorization>;

TransformKind transform_of(const Action& action);

struct Schedule {
  std::vector<Action> actions;
  bool operator==(const Schedule&) const = default;
};

struct ActionMask {
  std::array<bool, kNumTransforms> transform{};
  // N x (M+1): tile_choices[i][j] is the size chosen by slot j for loop i and
  // tile_sizes[i][j] whether that slot may be sampled.
  std::vector<std::vector<int64_t>> tile_choices;
  std::vector<std::vector<bool>> tile_sizes;
  std::vector<bool> interchange;  // N
  // Number of loops that may still be tiled without exceeding N.
  int tile_budget = 0;

  bool allows(TransformKind kind) const { return transform[static_cast<size_t>(kind)]; }
  bool any() const;
};

// [0] followed by the ascending pool divisors of the loop's trip count,
// zero-padded to exactly `count` entries.
std::vector<int64_t> candidate_tile_sizes(const LoopDim& loop, int count);

inline constexpr std::array<int64_t, 8> kTileSizePool = {2, 4, 8, 16, 32, 64, 128, 256};

LinalgOp apply_tiling(const LinalgOp& op, const std::vector<int64_t>& sizes,
                      int max_loops = kDefaultMaxLoops);
LinalgOp apply_parallelization(const LinalgOp& op, const std::vector<int64_t>& sizes,
                               int max_loops = kDefaultMaxLoops);
LinalgOp apply_interchange(const LinalgOp& op, int64_t swap_index);
LinalgOp apply_im2col(const LinalgOp& op);
LinalgOp apply_vectorization(const LinalgOp& op);

LinalgOp apply_action(const LinalgOp& op, const Action& action,
                      int max_loops = kDefaultMaxLoops);

// Checks the schedule-level rules: at most one Parallelization, at most one
// Vectorization and only in last position, length <= max_length.
void validate_schedule(const Schedule& schedule, int max_length);

LinalgOp apply_schedule(const LinalgOp& op, const Schedule& schedule,
                        int max_loops = kDefaultMaxLoops);

ActionMask compute_mask(const LinalgOp& op, const Schedule& history, int step,
                        const EnvLimits& limits);

// |A| = 2 * M^N + N! + 2; throws kOverflow when it does not fit in 64 bits.
uint64_t action_space_size(int max_loops, int tile_choices);

Json to_json(const EnvLimits& limits);
EnvLimits env_limits_from_json(const Json& j);

Json to_json(const Action& action);
Action action_from_json(const Json& j);
Json to_json(const Schedule& schedule);
Schedule schedule_from_json(const Json& j);

}  // namespace optgym
