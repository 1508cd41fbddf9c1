#pragma once

// Exhaustive baseline over a fixed schedule template:
// Im2col? -> Interchange? -> (Tiling | Parallelization)? -> Vectorization?

#include <cstdint>
#include <optional>
#include <vector>

#include "optgym/cost.hpp"
#include "optgym/loop_ir.hpp"
#include "optgym/transform.hpp"

namespace optgym {

struct SearchConstraints {
  int64_t max_tile = 64;
  int min_tiled_loops = 2;
  int max_schedule_len = 7;
  std::optional<int64_t> budget;  // evaluate at most this many schedules
  int max_loops = kDefaultMaxLoops;
};

void validate(const SearchConstraints& c);

// Deterministic order; the empty schedule comes first. Tile vectors use pool
// divisors <= max_tile, at least min_tiled_loops nonzero entries, and never
// push the nest past max_loops.
std::vector<Schedule> enumerate_schedules(const LinalgOp& op, const SearchConstraints& c);

struct TraceRecord {
  int64_t schedule_index = 0;  // position in the enumeration
  Schedule schedule;
  double cost = 0.0;
  double best_so_far = 0.0;
};

struct SearchResult {
  Schedule best;
  double base_cost = 0.0;
  double best_cost = 0.0;
  double speedup = 1.0;
  std::vector<TraceRecord> trace;  // enumeration order
  int64_t skipped = 0;             // candidates rejected by the transform engine
};

// Analytic backend; candidates are evaluated in parallel when `parallel`.
SearchResult search(const LinalgOp& op, const SearchConstraints& c, const CostConfig& cfg = {},
                    bool parallel = true);

// Any backend, evaluated serially in enumeration order.
SearchResult search(const LinalgOp& op, const SearchConstraints& c, CostBackend& backend);

}  // namespace optgym
