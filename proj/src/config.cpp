#include "optgym/config.hpp"

#include <fstream>
#include <sstream>

#include "optgym/error.hpp"

namespace optgym {

Json to_json(const RunConfig& cfg) {
  return Json{{"limits", to_json(cfg.limits)},
              {"ppo", to_json(cfg.ppo)},
              {"cost", to_json(cfg.cost)},
              {"network", to_json(cfg.network)},
              {"reward_mode", reward_mode_name(cfg.reward_mode)},
              {"action_space", action_space_name(cfg.action_space)},
              {"backend", backend_name(cfg.backend)},
              {"measure_repeats", cfg.measure_repeats},
              {"seed", cfg.seed},
              {"paths",
               {{"dataset_dir", cfg.paths.dataset_dir},
                {"checkpoint", cfg.paths.checkpoint},
                {"report_dir", cfg.paths.report_dir}}}};
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "run config must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("limits")) c.limits = env_limits_from_json(j["limits"]);
    if (j.contains("ppo")) c.ppo = ppo_config_from_json(j["ppo"]);
    if (j.contains("cost")) c.cost = cost_config_from_json(j["cost"]);
    if (j.contains("network")) c.network = network_shape_from_json(j["network"]);
    if (j.contains("reward_mode")) {
      c.reward_mode = parse_reward_mode(j["reward_mode"].get<std::string>());
    }
    if (j.contains("action_space")) {
      c.action_space = parse_action_space(j["action_space"].get<std::string>());
    }
    if (j.contains("backend")) c.backend = parse_backend(j["backend"].get<std::string>());
    c.measure_repeats = j.value("measure_repeats", c.measure_repeats);
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const Json& p = j["paths"];
      c.paths.dataset_dir = p.value("dataset_dir", c.paths.dataset_dir);
      c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint);
      c.paths.report_dir = p.value("report_dir", c.paths.report_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("run config: ") + e.what());
  }
  if (c.measure_repeats < 1) throw Error(ErrorCode::kParse, "measure_repeats must be >= 1");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return run_config_from_json(Json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kParse, "cannot write config " + path);
  out << to_json(cfg).dump(2) << "\n";
}

std::shared_ptr<CostBackend> make_shared_backend(const RunConfig& cfg) {
  if (cfg.backend == BackendKind::kMeasured) {
    return std::make_shared<MeasuredBackend>(cfg.measure_repeats);
  }
  return std::make_shared<AnalyticBackend>(cfg.cost);
}

}  // namespace optgym
