#pragma once

// Everything a CLI run needs, loadable from and savable to JSON.

#include <cstdint>
#include <string>

#include "optgym/autosched.hpp"
#include "optgym/cost.hpp"
#include "optgym/env.hpp"
#include "optgym/limits.hpp"
#include "optgym/policy.hpp"
#include "optgym/ppo.hpp"

namespace optgym {

struct RunPaths {
  std::string dataset_dir = "data";
  std::string checkpoint = "checkpoint.bin";
  std::string report_dir = "reports";

  bool operator==(const RunPaths&) const = default;
};

struct RunConfig {
  EnvLimits limits;
  PPOConfig ppo;
  CostConfig cost;
  NetworkShape network;
  RewardMode reward_mode = RewardMode::kFinal;
  ActionSpaceKind action_space = ActionSpaceKind::kHierarchical;
  BackendKind backend = BackendKind::kAnalytic;
  int measure_repeats = 3;
  uint64_t seed = 0;
  RunPaths paths;

  bool operator==(const RunConfig&) const = default;
};

Json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; throws kParse on malformed values.
RunConfig run_config_from_json(const Json& j);

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

std::shared_ptr<CostBackend> make_shared_backend(const RunConfig& cfg);

}  // namespace optgym
