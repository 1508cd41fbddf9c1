#include "optgym/env.hpp"

#include <cmath>

#include "optgym/error.hpp"

namespace optgym {

std::string_view reward_mode_name(RewardMode mode) {
  return mode == RewardMode::kImmediate ? "immediate" : "final";
}

RewardMode parse_reward_mode(std::string_view name) {
  if (name == "immediate") return RewardMode::kImmediate;
  if (name == "final") return RewardMode::kFinal;
  throw Error(ErrorCode::kParse, "unknown reward mode '" + std::string(name) + "'");
}

Env::Env(EnvLimits limits, RewardMode mode, std::shared_ptr<CostBackend> backend)
    : limits_(limits), mode_(mode), backend_(std::move(backend)) {
  validate(limits_);
}

StepResult Env::reset(const LinalgOp& op) {
  HistoryTensor history(limits_);
  StepResult r;
  r.observation = extract(op, history, limits_);  // throws kLimitExceeded
  const CostReport base = backend_->evaluate(op, std::nullopt);
  state_.emplace(EnvState{op, base.total, base.total, Schedule{}, std::move(history), 0, false});
  mask_ = compute_mask(op, state_->schedule, 0, limits_);
  r.mask = mask_;
  r.info.cost = base.total;
  return r;
}

bool mask_permits(const ActionMask& mask, const Action& action, size_t num_loops) {
  if (!mask.allows(transform_of(action))) return false;
  if (const auto* a = std::get_if<Interchange>(&action)) {
    return a->swap_index >= 0 && static_cast<size_t>(a->swap_index) < mask.interchange.size() &&
           mask.interchange[static_cast<size_t>(a->swap_index)];
  }
  const std::vector<int64_t>* sizes = nullptr;
  if (const auto* t = std::get_if<Tiling>(&action)) sizes = &t->sizes;
  if (const auto* p = std::get_if<Parallelization>(&action)) sizes = &p->sizes;
  if (sizes == nullptr) return true;
  if (sizes->size() != num_loops || num_loops > mask.tile_choices.size()) return false;
  int nonzero = 0;
  for (size_t i = 0; i < sizes->size(); ++i) {
    const int64_t s = (*sizes)[i];
    if (s == 0) continue;
    ++nonzero;
    bool found = false;
    for (size_t j = 1; j < mask.tile_choices[i].size(); ++j) {
      if (mask.tile_sizes[i][j] && mask.tile_choices[i][j] == s) found = true;
    }
    if (!found) return false;
  }
  return nonzero <= mask.tile_budget;
}

void Env::check_permitted(const Action& action) const {
  if (!mask_permits(mask_, action, state_->current_op.loops.size())) {
    throw Error(ErrorCode::kMaskedAction,
                std::string(transform_name(transform_of(action))) + " " + to_json(action).dump() +
                    " is masked at step " + std::to_string(state_->step_index));
  }
}

StepResult Env::step(const Action& action) {
  if (!state_ || state_->done) throw Error(ErrorCode::kEpisodeDone, "episode is over");
  check_permitted(action);
  EnvState& s = *state_;

  const int loops_before = static_cast<int>(s.current_op.loops.size());
  s.current_op = apply_action(s.current_op, action, limits_.max_loops);
  s.history = record_history(s.history, action, s.step_index, loops_before);
  s.schedule.actions.push_back(action);
  ++s.step_index;
  s.done = transform_of(action) == TransformKind::kVectorization ||
           s.step_index >= limits_.max_schedule;

  StepResult r;
  if (mode_ == RewardMode::kImmediate || s.done) {
    const CostReport cost = backend_->evaluate(s.current_op, s.base_cost);
    if (cost.timed_out) {
      r.reward = kTimeoutPenalty;
      r.info.error = "timeout";
      r.info.speedup = std::exp(kTimeoutPenalty);
      s.done = true;
    } else {
      r.reward = mode_ == RewardMode::kImmediate ? std::log(s.prev_cost / cost.total)
                                                 : std::log(s.base_cost / cost.total);
      r.info.cost = cost.total;
      r.info.speedup = s.base_cost / cost.total;
      s.prev_cost = cost.total;
    }
  } else {
    r.info.speedup = s.base_cost / s.prev_cost;
  }

  r.done = s.done;
  r.observation = extract(s.current_op, s.history, limits_);
  mask_ = compute_mask(s.current_op, s.schedule, s.done ? limits_.max_schedule : s.step_index,
                       limits_);
  r.mask = mask_;
  return r;
}

ScheduleResult run_schedule(const LinalgOp& op, const Schedule& schedule, CostBackend& backend,
                            int max_loops) {
  ScheduleResult r;
  r.op = apply_schedule(op, schedule, max_loops);
  r.base_cost = backend.evaluate(op, std::nullopt).total;
  r.final_cost = schedule.actions.empty() ? r.base_cost : backend.evaluate(r.op, r.base_cost).total;
  r.speedup = r.base_cost / r.final_cost;
  return r;
}

ScheduleResult run_schedule(const LinalgOp& op, const Schedule& schedule, const CostConfig& cfg,
                            int max_loops) {
  AnalyticBackend backend(cfg);
  return run_schedule(op, schedule, backend, max_loops);
}

Json trajectory_record(int64_t op_id, int step, const Action& action, const StepResult& result) {
  Json j;
  j["op_id"] = op_id;
  j["step"] = step;
  j["action"] = to_json(action);
  j["reward"] = result.reward;
  j["cost"] = result.info.cost ? Json(*result.info.cost) : Json(nullptr);
  j["done"] = result.done;
  return j;
}

}  // namespace optgym
