#include "optgym/autosched.hpp"

#include <cmath>
#include <limits>

#include "optgym/error.hpp"

namespace optgym {

namespace {

std::vector<int64_t> tile_options(const LoopDim& loop, int64_t max_tile) {
  std::vector<int64_t> opts{0};
  const int64_t trip = loop.trip();
  for (int64_t s : kTileSizePool) {
    if (s <= max_tile && s <= trip && trip % s == 0) opts.push_back(s);
  }
  return opts;
}

// Lexicographic over per-loop options, filtered by the nonzero count.
std::vector<std::vector<int64_t>> tile_vectors(const LinalgOp& op, const SearchConstraints& c) {
  const size_t n = op.loops.size();
  const int budget = c.max_loops - static_cast<int>(n);
  std::vector<std::vector<int64_t>> options;
  for (const LoopDim& l : op.loops) options.push_back(tile_options(l, c.max_tile));

  std::vector<std::vector<int64_t>> out;
  if (n == 0 || budget < c.min_tiled_loops) return out;
  std::vector<size_t> idx(n, 0);
  while (true) {
    int nonzero = 0;
    for (size_t i = 0; i < n; ++i) nonzero += idx[i] != 0 ? 1 : 0;
    if (nonzero >= c.min_tiled_loops && nonzero <= budget) {
      std::vector<int64_t> v(n);
      for (size_t i = 0; i < n; ++i) v[i] = options[i][idx[i]];
      out.push_back(std::move(v));
    }
    size_t pos = n;
    while (pos-- > 0) {
      if (++idx[pos] < options[pos].size()) break;
      idx[pos] = 0;
    }
    if (pos == static_cast<size_t>(-1)) break;
  }
  return out;
}

void finish(SearchResult& r, const std::vector<Schedule>& candidates,
            const std::vector<double>& costs) {
  r.best_cost = r.base_cost;
  double best = std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (std::isnan(costs[i])) {
      ++r.skipped;
      continue;
    }
    if (costs[i] < best) {
      best = costs[i];
      r.best = candidates[i];
      r.best_cost = costs[i];
      have_best = true;
    }
    r.trace.push_back(TraceRecord{static_cast<int64_t>(i), candidates[i], costs[i], best});
  }
  if (!have_best) {
    r.best = Schedule{};
    r.best_cost = r.base_cost;
  }
  r.speedup = r.base_cost / r.best_cost;
}

std::vector<Schedule> budgeted(const LinalgOp& op, const SearchConstraints& c) {
  validate(c);
  std::vector<Schedule> all = enumerate_schedules(op, c);
  if (c.budget && static_cast<int64_t>(all.size()) > *c.budget) {
    all.resize(static_cast<size_t>(*c.budget));
  }
  return all;
}

}  // namespace

void validate(const SearchConstraints& c) {
  if (c.max_tile < 2 || c.min_tiled_loops < 1 || c.max_schedule_len < 1 || c.max_loops < 1 ||
      (c.budget && *c.budget < 0)) {
    throw Error(ErrorCode::kParse, "search constraints out of range");
  }
}

std::vector<Schedule> enumerate_schedules(const LinalgOp& op, const SearchConstraints& c) {
  validate(c);
  std::vector<Schedule> out;
  std::vector<bool> im2col_options{false};
  if (op.kind == OpKind::kConv2D && !op.im2col_applied) im2col_options.push_back(true);

  for (bool im2col : im2col_options) {
    Schedule prefix;
    LinalgOp base = op;
    if (im2col) {
      prefix.actions.push_back(Im2col{});
      base = apply_im2col(op);
    }
    const auto n = static_cast<int64_t>(base.loops.size());
    std::vector<std::optional<int64_t>> swaps{std::nullopt};
    for (int64_t k = 0; k + 1 < n; ++k) swaps.push_back(k);

    for (const auto& swap : swaps) {
      Schedule with_swap = prefix;
      LinalgOp swapped = base;
      if (swap) {
        with_swap.actions.push_back(Interchange{*swap});
        swapped = apply_interchange(base, *swap);
      }
      std::vector<std::optional<Action>> tiles{std::nullopt};
      const auto vectors = tile_vectors(swapped, c);
      for (const auto& v : vectors) tiles.push_back(Tiling{v});
      if (!swapped.parallelized) {
        for (const auto& v : vectors) tiles.push_back(Parallelization{v});
      }
      for (const auto& tile : tiles) {
        Schedule with_tile = with_swap;
        if (tile) with_tile.actions.push_back(*tile);
        for (bool vec : {false, true}) {
          Schedule s = with_tile;
          if (vec) s.actions.push_back(Vectorization{});
          if (static_cast<int>(s.actions.size()) <= c.max_schedule_len) out.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

SearchResult search(const LinalgOp& op, const SearchConstraints& c, const CostConfig& cfg,
                    bool parallel) {
  const std::vector<Schedule> candidates = budgeted(op, c);
  SearchResult r;
  r.base_cost = analytic_cost(op, cfg).total;
  std::vector<double> costs(candidates.size(), std::numeric_limits<double>::quiet_NaN());
  const auto m = static_cast<long>(candidates.size());
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
  for (long i = 0; i < m; ++i) {
    try {
      const LinalgOp t = apply_schedule(op, candidates[static_cast<size_t>(i)], c.max_loops);
      costs[static_cast<size_t>(i)] = analytic_cost(t, cfg).total;
    } catch (const Error&) {
      // left as NaN: counted in `skipped`
    }
  }
  finish(r, candidates, costs);
  return r;
}

SearchResult search(const LinalgOp& op, const SearchConstraints& c, CostBackend& backend) {
  const std::vector<Schedule> candidates = budgeted(op, c);
  SearchResult r;
  r.base_cost = backend.evaluate(op, std::nullopt).total;
  std::vector<double> costs(candidates.size(), std::numeric_limits<double>::quiet_NaN());
  for (size_t i = 0; i < candidates.size(); ++i) {
    try {
      const LinalgOp t = apply_schedule(op, candidates[i], c.max_loops);
      const CostReport report = backend.evaluate(t, r.base_cost);
      if (!report.timed_out) costs[i] = report.total;
    } catch (const Error&) {
    }
  }
  finish(r, candidates, costs);
  return r;
}

}  // namespace optgym
