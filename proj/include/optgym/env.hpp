#pragma once

// Episodic environment: one LinalgOp per episode, hierarchical actions in,
// masked observations and log-speedup rewards out.

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "optgym/cost.hpp"
#include "optgym/features.hpp"
#include "optgym/limits.hpp"
#include "optgym/loop_ir.hpp"
#include "optgym/transform.hpp"

namespace optgym {

enum class RewardMode { kImmediate, kFinal };

std::string_view reward_mode_name(RewardMode mode);
RewardMode parse_reward_mode(std::string_view name);

// Reward (natural-log units) for a backend timeout; ends the episode.
inline constexpr double kTimeoutPenalty = -5.0;

struct StepInfo {
  std::optional<double> cost;  // backend cost of the current op, when evaluated
  double speedup = 1.0;        // base cost / latest evaluated cost
  std::string error;           // "timeout" when the penalty fired
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  ActionMask mask;
  StepInfo info;
};

struct EnvState {
  LinalgOp current_op;
  double base_cost = 0.0;
  double prev_cost = 0.0;
  Schedule schedule;
  HistoryTensor history;
  int step_index = 0;
  bool done = false;
};

class Env {
 public:
  Env(EnvLimits limits, RewardMode mode, std::shared_ptr<CostBackend> backend);

  StepResult reset(const LinalgOp& op);

  // Throws kEpisodeDone after termination and kMaskedAction for an action the
  // current mask forbids.
  StepResult step(const Action& action);

  const EnvState& state() const { return *state_; }
  const ActionMask& mask() const { return mask_; }
  const EnvLimits& limits() const { return limits_; }
  RewardMode mode() const { return mode_; }

 private:
  void check_permitted(const Action& action) const;

  EnvLimits limits_;
  RewardMode mode_;
  std::shared_ptr<CostBackend> backend_;
  std::optional<EnvState> state_;
  ActionMask mask_;
};

// Whether `action` is allowed by `mask` for an op with `num_loops` loops.
bool mask_permits(const ActionMask& mask, const Action& action, size_t num_loops);

struct ScheduleResult {
  LinalgOp op;
  double base_cost = 0.0;
  double final_cost = 0.0;
  double speedup = 1.0;
};

ScheduleResult run_schedule(const LinalgOp& op, const Schedule& schedule, CostBackend& backend,
                            int max_loops = kDefaultMaxLoops);
ScheduleResult run_schedule(const LinalgOp& op, const Schedule& schedule,
                            const CostConfig& cfg = {}, int max_loops = kDefaultMaxLoops);

// One JSON-lines trajectory record: {op_id, step, action, reward, cost, done}.
Json trajectory_record(int64_t op_id, int step, const Action& action, const StepResult& result);

}  // namespace optgym
