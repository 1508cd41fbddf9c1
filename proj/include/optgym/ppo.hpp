#pragma once

// PPO training: GAE, lockstep rollout collection, the clipped-surrogate
// update, checkpoints, and policy-driven episodes for evaluation.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "optgym/env.hpp"
#include "optgym/nn.hpp"
#include "optgym/policy.hpp"

namespace optgym {

struct PPOConfig {
  double lr = 0.001;
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  int batch = 64;
  int epochs = 4;
  int iterations = 1000;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;  // 0 disables clipping
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int num_envs = 8;  // environments stepped in lockstep during collection

  bool operator==(const PPOConfig&) const = default;
};

void validate(const PPOConfig& cfg);
Json to_json(const PPOConfig& cfg);
PPOConfig ppo_config_from_json(const Json& j);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} - V_t, A_t = delta_t + gamma lambda A_{t+1},
// with V_T = bootstrap. Throws kLengthMismatch.
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              double bootstrap, double gamma, double lambda);

struct RolloutBatch {
  std::vector<Observation> observations;
  std::vector<ActionMask> masks;
  std::vector<size_t> num_loops;
  std::vector<HierarchicalSample> samples;
  std::vector<double> logprobs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;

  // Statistics over every completed episode, including truncated tails.
  int episodes = 0;
  double mean_episode_reward = 0.0;
  double mean_speedup = 0.0;

  size_t size() const { return samples.size(); }
};

using EnvFactory = std::function<Env()>;

// Samples ops uniformly from `dataset`, runs masked episodes to termination,
// computes GAE per episode, truncates to n transitions and normalizes the
// advantages. Episodes are never split for GAE.
RolloutBatch collect_rollouts(const EnvFactory& make_env, const PolicyParams& params,
                              const std::vector<LinalgOp>& dataset, size_t n,
                              const PPOConfig& cfg, std::mt19937_64& rng);

struct LossReport {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

// Full-batch PPO loss; when `grads` is non-null, accumulates its gradient.
LossReport compute_loss_and_gradients(const PolicyParams& params, const RolloutBatch& batch,
                                      const PPOConfig& cfg, PolicyParams* grads);

// cfg.epochs full-batch gradient steps. Throws kNonFiniteLoss and leaves
// `params` at the last finite state.
std::vector<LossReport> ppo_update(PolicyParams& params, Optimizer& optimizer,
                                   const RolloutBatch& batch, const PPOConfig& cfg);

struct TrainLogEntry {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_speedup = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double wall_seconds = 0.0;
};

Json to_json(const TrainLogEntry& e);

struct TrainResult {
  PolicyParams params;
  std::vector<TrainLogEntry> log;
};

using TrainCallback = std::function<void(const TrainLogEntry&, const PolicyParams&)>;

TrainResult train(const std::vector<LinalgOp>& dataset, PolicyParams initial,
                  const PPOConfig& cfg, const EnvFactory& make_env, uint64_t seed,
                  const TrainCallback& on_iteration = {});

struct EpisodeOutcome {
  Schedule schedule;
  double base_cost = 0.0;
  double final_cost = 0.0;
  double speedup = 1.0;
  double total_reward = 0.0;
};

// One episode on `op`: sampled when `rng` is given, greedy (argmax) otherwise.
EpisodeOutcome run_policy_episode(const PolicyParams& params, Env& env, const LinalgOp& op,
                                  std::mt19937_64* rng);

// Best-so-far speedup after each of `episodes` sampled episodes.
std::vector<double> sampled_search_curve(const PolicyParams& params, Env& env,
                                         const LinalgOp& op, int episodes,
                                         std::mt19937_64& rng);

// Binary checkpoint: magic, version, length-prefixed JSON header describing
// every layer, then the raw little-endian doubles in header order.
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace optgym
