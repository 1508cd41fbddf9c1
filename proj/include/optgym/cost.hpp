#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>

#include "optgym/interpreter.hpp"
#include "optgym/loop_ir.hpp"

namespace optgym {

struct CostConfig {
  int64_t cache_bytes = 32768;
  int64_t line_bytes = 64;
  int64_t cores = 8;
  int64_t vec_width = 8;
  double miss_penalty = 8.0;
  double flop_cost = 1.0;
  double im2col_write_cost = 1.0;

  bool operator==(const CostConfig&) const = default;
};

void validate(const CostConfig& cfg);
Json to_json(const CostConfig& cfg);
CostConfig cost_config_from_json(const Json& j);

struct CostReport {
  double total = 0.0;
  double compute_term = 0.0;
  double memory_term = 0.0;
  bool timed_out = false;

  bool operator==(const CostReport&) const = default;
};

// Cache-line footprint of one access when the loops from `band_start` inward
// iterate with the outer loops held fixed.
int64_t band_lines(const AccessMatrix& access, const std::vector<LoopDim>& loops,
                   size_t band_start, int64_t elem_bytes, int64_t line_bytes);

// Deterministic cost model.
//
// compute = trips * sum(counts) * flop_cost / (par * vec), where par is
// min(cores, product of parallel trip counts) and vec is vec_width when the
// innermost loop is vectorized and every access moves by at most one element
// along it.
//
// memory = miss_penalty * sum over accesses of line misses. Walking the nest
// outermost to innermost, the first band whose combined line footprint fits
// in cache_bytes is reused for free inside; each access then misses
// (trips of the enclosing loops) * (its band footprint in lines).
// An im2col surcharge of elements * im2col_write_cost is added to memory.
CostReport analytic_cost(const LinalgOp& op, const CostConfig& cfg);

// Median of `repeats` timings from run_once (seconds). timed_out is raised
// when any run exceeds timeout_factor * base_time (base_time <= 0 disables it).
CostReport measure_runs(const std::function<double()>& run_once, int repeats,
                        double timeout_factor, double base_time);

// Wall-clock measurement of the reference interpreter on seeded inputs.
CostReport measure(const LinalgOp& op, int repeats, double timeout_factor = 10.0,
                   double base_time = 0.0);

enum class BackendKind { kAnalytic, kMeasured };

std::string_view backend_name(BackendKind kind);
BackendKind parse_backend(std::string_view name);

class CostBackend {
 public:
  virtual ~CostBackend() = default;

  // base_total is the untransformed op's cost; nullopt when evaluating it.
  virtual CostReport evaluate(const LinalgOp& op, std::optional<double> base_total) = 0;
};

class AnalyticBackend final : public CostBackend {
 public:
  explicit AnalyticBackend(CostConfig cfg = {}) : cfg_(cfg) {}

  CostReport evaluate(const LinalgOp& op, std::optional<double>) override {
    return analytic_cost(op, cfg_);
  }

 private:
  CostConfig cfg_;
};

// Not reentrant: timings assume exclusive use of the calling thread.
class MeasuredBackend final : public CostBackend {
 public:
  MeasuredBackend(int repeats = 3, double timeout_factor = 10.0)
      : repeats_(repeats), timeout_factor_(timeout_factor) {}

  CostReport evaluate(const LinalgOp& op, std::optional<double> base_total) override {
    return measure(op, repeats_, timeout_factor_, base_total.value_or(0.0));
  }

 private:
  int repeats_;
  double timeout_factor_;
};

std::unique_ptr<CostBackend> make_backend(BackendKind kind, const CostConfig& cfg);

}  // namespace optgym
