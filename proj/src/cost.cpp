#include "optgym/cost.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <string>
#include <vector>

#include "optgym/error.hpp"

namespace optgym {

void validate(const CostConfig& c) {
  if (c.cache_bytes <= 0 || c.line_bytes <= 0 || c.cores <= 0 || c.vec_width <= 0 ||
      c.miss_penalty <= 0 || c.flop_cost <= 0 || c.im2col_write_cost <= 0) {
    throw Error(ErrorCode::kParse, "cost config values must be positive");
  }
}

Json to_json(const CostConfig& c) {
  Json j;
  j["cache_bytes"] = c.cache_bytes;
  j["line_bytes"] = c.line_bytes;
  j["cores"] = c.cores;
  j["vec_width"] = c.vec_width;
  j["miss_penalty"] = c.miss_penalty;
  j["flop_cost"] = c.flop_cost;
  j["im2col_write_cost"] = c.im2col_write_cost;
  return j;
}

CostConfig cost_config_from_json(const Json& j) {
  CostConfig c;
  c.cache_bytes = j.value("cache_bytes", c.cache_bytes);
  c.line_bytes = j.value("line_bytes", c.line_bytes);
  c.cores = j.value("cores", c.cores);
  c.vec_width = j.value("vec_width", c.vec_width);
  c.miss_penalty = j.value("miss_penalty", c.miss_penalty);
  c.flop_cost = j.value("flop_cost", c.flop_cost);
  c.im2col_write_cost = j.value("im2col_write_cost", c.im2col_write_cost);
  validate(c);
  return c;
}

int64_t band_lines(const AccessMatrix& access, const std::vector<LoopDim>& loops,
                   size_t band_start, int64_t elem_bytes, int64_t line_bytes) {
  const size_t n = loops.size();
  int64_t lines = 1;
  for (size_t d = 0; d < access.dims(); ++d) {
    const auto& row = access.rows[d];
    int64_t span = 1;      // max - min + 1 of the subscript
    int64_t distinct = 1;  // upper bound on distinct subscript values
    for (size_t j = band_start; j < n; ++j) {
      if (row[j] == 0) continue;
      span += std::abs(row[j]) * (loops[j].trip() - 1) * loops[j].step;
      distinct *= loops[j].trip();
    }
    distinct = std::min(distinct, span);
    if (d + 1 == access.dims()) {
      const int64_t contiguous = (span * elem_bytes + line_bytes - 1) / line_bytes;
      lines *= std::min(distinct, contiguous);
    } else {
      lines *= distinct;
    }
  }
  return lines;
}

CostReport analytic_cost(const LinalgOp& op, const CostConfig& cfg) {
  const size_t n = op.loops.size();

  double par = 1.0;
  bool any_parallel = false;
  double parallel_trips = 1.0;
  for (const LoopDim& l : op.loops) {
    if (!l.parallel) continue;
    any_parallel = true;
    parallel_trips *= static_cast<double>(l.trip());
  }
  if (any_parallel) par = std::min(static_cast<double>(cfg.cores), parallel_trips);

  std::vector<const AccessMatrix*> accesses;
  for (const auto& m : op.loads) accesses.push_back(&m);
  if (op.store) accesses.push_back(&*op.store);

  double vec = 1.0;
  if (op.loops.back().vectorized) {
    const bool unit = std::all_of(accesses.begin(), accesses.end(), [&](const AccessMatrix* m) {
      return std::all_of(m->rows.begin(), m->rows.end(),
                         [&](const auto& row) { return std::abs(row[n - 1]) <= 1; });
    });
    if (unit) vec = static_cast<double>(cfg.vec_width);
  }

  CostReport r;
  r.compute_term = static_cast<double>(trip_count(op)) *
                   static_cast<double>(op.counts.total()) * cfg.flop_cost / (par * vec);

  // Smallest band_start whose band fits; band_start == n always fits in
  // practice (one line per access).
  std::vector<int64_t> lines(accesses.size());
  size_t band_start = 0;
  for (; band_start <= n; ++band_start) {
    int64_t bytes = 0;
    for (size_t a = 0; a < accesses.size(); ++a) {
      lines[a] = band_lines(*accesses[a], op.loops, band_start, op.elem_bytes, cfg.line_bytes);
      bytes += lines[a] * cfg.line_bytes;
    }
    if (bytes <= cfg.cache_bytes) break;
  }
  band_start = std::min(band_start, n);
  double outer_trips = 1.0;
  for (size_t j = 0; j < band_start; ++j) outer_trips *= static_cast<double>(op.loops[j].trip());
  double misses = 0.0;
  for (int64_t l : lines) misses += outer_trips * static_cast<double>(l);

  r.memory_term = misses * cfg.miss_penalty +
                  static_cast<double>(op.im2col_surcharge_elems) * cfg.im2col_write_cost;
  r.total = r.compute_term + r.memory_term;
  return r;
}

CostReport measure_runs(const std::function<double()>& run_once, int repeats,
                        double timeout_factor, double base_time) {
  if (repeats < 1) throw Error(ErrorCode::kLengthMismatch, "repeats must be >= 1");
  const double limit = base_time > 0.0 ? timeout_factor * base_time : 0.0;
  std::vector<double> times;
  CostReport r;
  for (int i = 0; i < repeats; ++i) {
    const double t = run_once();
    times.push_back(t);
    if (limit > 0.0 && t > limit) {
      r.timed_out = true;
      break;
    }
  }
  std::sort(times.begin(), times.end());
  r.total = times[times.size() / 2];
  r.compute_term = r.total;
  return r;
}

CostReport measure(const LinalgOp& op, int repeats, double timeout_factor, double base_time) {
  const auto inputs = make_inputs(op, 0x5eed, FillKind::kFloat);
  const double limit = base_time > 0.0 ? timeout_factor * base_time : 0.0;
  auto run_once = [&]() -> double {
    InterpretOptions options;
    const auto start = std::chrono::steady_clock::now();
    if (limit > 0.0) {
      options.deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double>(limit));
    }
    try {
      const Buffer out = interpret(op, inputs, options);
      (void)out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTimeout) throw;
      return limit * 2.0;
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  return measure_runs(run_once, repeats, timeout_factor, base_time);
}

std::string_view backend_name(BackendKind kind) {
  return kind == BackendKind::kAnalytic ? "analytic" : "measured";
}

BackendKind parse_backend(std::string_view name) {
  if (name == "analytic") return BackendKind::kAnalytic;
  if (name == "measured") return BackendKind::kMeasured;
  throw Error(ErrorCode::kParse, "unknown backend '" + std::string(name) + "'");
}

std::unique_ptr<CostBackend> make_backend(BackendKind kind, const CostConfig& cfg) {
  if (kind == BackendKind::kAnalytic) return std::make_unique<AnalyticBackend>(cfg);
  return std::make_unique<MeasuredBackend>();
}

}  // namespace optgym
