#include "optgym/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "optgym/error.hpp"

namespace optgym {

namespace {

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error(ErrorCode::kParse, "unknown optimizer '" + std::string(name) + "'");
}

struct Step {
  Observation obs;
  ActionMask mask;
  size_t num_loops = 0;
  HierarchicalSample sample;
  double value = 0.0;
  double reward = 0.0;
};

struct Worker {
  Env env;
  bool active = false;
  Observation obs;
  ActionMask mask;
  std::vector<Step> steps;
};

size_t current_loops(const Env& env) { return env.state().current_op.loops.size(); }

}  // namespace

void validate(const PPOConfig& cfg) {
  const bool ok = cfg.lr > 0 && cfg.clip > 0 && cfg.gamma >= 0 && cfg.gamma <= 1 &&
                  cfg.lambda >= 0 && cfg.lambda <= 1 && cfg.batch >= 1 && cfg.epochs >= 1 &&
                  cfg.iterations >= 0 && cfg.value_coef >= 0 && cfg.entropy_coef >= 0 &&
                  cfg.max_grad_norm >= 0 && cfg.num_envs >= 1;
  if (!ok) throw Error(ErrorCode::kParse, "PPO configuration out of range");
}

Json to_json(const PPOConfig& cfg) {
  return Json{{"lr", cfg.lr},
              {"clip", cfg.clip},
              {"gamma", cfg.gamma},
              {"lambda", cfg.lambda},
              {"batch", cfg.batch},
              {"epochs", cfg.epochs},
              {"iterations", cfg.iterations},
              {"value_coef", cfg.value_coef},
              {"entropy_coef", cfg.entropy_coef},
              {"max_grad_norm", cfg.max_grad_norm},
              {"optimizer", optimizer_name(cfg.optimizer)},
              {"num_envs", cfg.num_envs}};
}

PPOConfig ppo_config_from_json(const Json& j) {
  PPOConfig c;
  c.lr = j.value("lr", c.lr);
  c.clip = j.value("clip", c.clip);
  c.gamma = j.value("gamma", c.gamma);
  c.lambda = j.value("lambda", c.lambda);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.iterations = j.value("iterations", c.iterations);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j["optimizer"].get<std::string>());
  c.num_envs = j.value("num_envs", c.num_envs);
  validate(c);
  return c;
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              double bootstrap, double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw Error(ErrorCode::kLengthMismatch, "rewards and values differ in length");
  }
  const size_t n = rewards.size();
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (size_t t = n; t-- > 0;) {
    const double delta = rewards[t] + gamma * next_value - values[t];
    next_adv = delta + gamma * lambda * next_adv;
    r.advantages[t] = next_adv;
    r.returns[t] = next_adv + values[t];
    next_value = values[t];
  }
  return r;
}

RolloutBatch collect_rollouts(const EnvFactory& make_env, const PolicyParams& params,
                              const std::vector<LinalgOp>& dataset, size_t n,
                              const PPOConfig& cfg, std::mt19937_64& rng) {
  if (n == 0) throw Error(ErrorCode::kLengthMismatch, "rollout size must be >= 1");
  if (dataset.empty()) throw Error(ErrorCode::kLengthMismatch, "dataset is empty");
  std::uniform_int_distribution<size_t> pick_op(0, dataset.size() - 1);

  std::vector<Worker> workers;
  for (int w = 0; w < cfg.num_envs; ++w) workers.push_back(Worker{make_env(), false, {}, {}, {}});

  size_t collected = 0;
  auto in_progress = [&] {
    size_t s = 0;
    for (const Worker& w : workers) s += w.active ? w.steps.size() : 0;
    return s;
  };
  auto launch = [&](Worker& w) {
    const StepResult r = w.env.reset(dataset[pick_op(rng)]);
    w.obs = r.observation;
    w.mask = r.mask;
    w.steps.clear();
    w.active = true;
  };
  for (Worker& w : workers) {
    if (collected + in_progress() >= n) break;
    launch(w);
  }

  std::vector<std::vector<Step>> episodes;
  std::vector<double> episode_speedups;
  while (std::any_of(workers.begin(), workers.end(), [](const Worker& w) { return w.active; })) {
    std::vector<Worker*> live;
    std::vector<Observation> obs;
    for (Worker& w : workers) {
      if (!w.active) continue;
      live.push_back(&w);
      obs.push_back(w.obs);
    }
    const PolicyForward f = forward_batch(params, observations_matrix(obs), false);
    for (size_t r = 0; r < live.size(); ++r) {
      Worker& w = *live[r];
      const size_t loops = current_loops(w.env);
      const PolicyDistributions d = distributions_from_logits(params, f.row(r), w.mask, loops);
      const HierarchicalSample s = sample_action(d, rng);
      const StepResult res = w.env.step(to_action(d, s));
      w.steps.push_back(Step{w.obs, w.mask, loops, s, f.value(r, 0), res.reward});
      w.obs = res.observation;
      w.mask = res.mask;
      if (!res.done) continue;
      collected += w.steps.size();
      episodes.push_back(std::move(w.steps));
      episode_speedups.push_back(res.info.speedup);
      w.active = false;
      if (collected + in_progress() < n) launch(w);
    }
  }

  RolloutBatch batch;
  double reward_sum = 0.0;
  for (const auto& ep : episodes) {
    std::vector<double> rewards, values;
    for (const Step& s : ep) {
      rewards.push_back(s.reward);
      values.push_back(s.value);
      reward_sum += s.reward;
    }
    const GaeResult g = gae(rewards, values, 0.0, cfg.gamma, cfg.lambda);
    for (size_t t = 0; t < ep.size() && batch.size() < n; ++t) {
      batch.observations.push_back(ep[t].obs);
      batch.masks.push_back(ep[t].mask);
      batch.num_loops.push_back(ep[t].num_loops);
      batch.samples.push_back(ep[t].sample);
      batch.logprobs.push_back(ep[t].sample.joint_logprob);
      batch.rewards.push_back(ep[t].reward);
      batch.values.push_back(ep[t].value);
      batch.advantages.push_back(g.advantages[t]);
      batch.returns.push_back(g.returns[t]);
    }
  }
  batch.episodes = static_cast<int>(episodes.size());
  batch.mean_episode_reward = reward_sum / static_cast<double>(episodes.size());
  batch.mean_speedup = std::accumulate(episode_speedups.begin(), episode_speedups.end(), 0.0) /
                       static_cast<double>(episode_speedups.size());

  const double m = static_cast<double>(batch.size());
  const double mean = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) / m;
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / m);
  for (double& a : batch.advantages) a = (a - mean) / (sd + 1e-8);
  return batch;
}

LossReport compute_loss_and_gradients(const PolicyParams& params, const RolloutBatch& batch,
                                      const PPOConfig& cfg, PolicyParams* grads) {
  const size_t b = batch.size();
  if (b == 0) throw Error(ErrorCode::kLengthMismatch, "empty batch");
  const Matrix x = observations_matrix(batch.observations);
  const bool backprop = grads != nullptr;
  const PolicyForward f = forward_batch(params, x, backprop);
  const double inv_b = 1.0 / static_cast<double>(b);

  Matrix g_transform(f.transform.rows, f.transform.cols);
  Matrix g_tile(f.tile.rows, f.tile.cols);
  Matrix g_swap(f.interchange.rows, f.interchange.cols);
  Matrix g_simple(f.simple.rows, f.simple.cols);
  Matrix g_value(b, 1);
  auto view = [](Matrix& m, size_t r) { return m.rows == 0 ? std::span<double>{} : m.row(r); };

  LossReport loss;
  for (size_t i = 0; i < b; ++i) {
    const PolicyDistributions d =
        distributions_from_logits(params, f.row(i), batch.masks[i], batch.num_loops[i]);
    const SampleScore score = score_sample(d, batch.samples[i]);
    const double ratio = std::exp(score.logprob - batch.logprobs[i]);
    const double adv = batch.advantages[i];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
    loss.policy -= std::min(unclipped, clipped) * inv_b;
    loss.entropy += score.entropy * inv_b;
    const double v_err = f.value(i, 0) - batch.returns[i];
    loss.value += v_err * v_err * inv_b;
    if (!backprop) continue;
    const double coef_lp = unclipped <= clipped ? -ratio * adv * inv_b : 0.0;
    accumulate_logit_gradients(d, batch.samples[i], coef_lp, -cfg.entropy_coef * inv_b,
                               HeadGrads{view(g_transform, i), view(g_tile, i), view(g_swap, i),
                                         view(g_simple, i)});
    g_value(i, 0) = cfg.value_coef * 2.0 * v_err * inv_b;
  }
  loss.total = loss.policy + cfg.value_coef * loss.value - cfg.entropy_coef * loss.entropy;
  if (!std::isfinite(loss.total)) {
    throw Error(ErrorCode::kNonFiniteLoss,
                "policy=" + std::to_string(loss.policy) + " value=" + std::to_string(loss.value) +
                    " entropy=" + std::to_string(loss.entropy));
  }
  if (!backprop) return loss;

  Matrix g_hidden(f.hidden.rows, f.hidden.cols);
  auto add_into_hidden = [&](const Matrix& m) {
    for (size_t k = 0; k < m.data.size(); ++k) g_hidden.data[k] += m.data[k];
  };
  if (params.space == ActionSpaceKind::kHierarchical) {
    add_into_hidden(params.transform_head.backward(f.transform_tape, g_transform,
                                                   grads->transform_head));
    add_into_hidden(params.tile_head.backward(f.tile_tape, g_tile, grads->tile_head));
    add_into_hidden(
        params.interchange_head.backward(f.interchange_tape, g_swap, grads->interchange_head));
  } else {
    add_into_hidden(params.simple_head.backward(f.simple_tape, g_simple, grads->simple_head));
  }
  params.backbone.backward(f.backbone_tape, g_hidden, grads->backbone);
  params.value_net.backward(f.value_tape, g_value, grads->value_net);
  return loss;
}

std::vector<LossReport> ppo_update(PolicyParams& params, Optimizer& optimizer,
                                   const RolloutBatch& batch, const PPOConfig& cfg) {
  std::vector<LossReport> reports;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    PolicyParams grads = params.zeros_like();
    reports.push_back(compute_loss_and_gradients(params, batch, cfg, &grads));
    double sq = 0.0;
    for (auto g : std::as_const(grads).parameters()) {
      for (double v : g) sq += v * v;
    }
    if (!std::isfinite(sq)) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "non-finite gradient at epoch " + std::to_string(epoch));
    }
    const double norm = std::sqrt(sq);
    if (cfg.max_grad_norm > 0 && norm > cfg.max_grad_norm) {
      const double scale = cfg.max_grad_norm / norm;
      for (auto g : grads.parameters()) {
        for (double& v : g) v *= scale;
      }
    }
    optimizer.step(params.parameters(), std::as_const(grads).parameters());
  }
  return reports;
}

Json to_json(const TrainLogEntry& e) {
  return Json{{"iteration", e.iteration},       {"mean_reward", e.mean_reward},
              {"mean_speedup", e.mean_speedup}, {"policy_loss", e.policy_loss},
              {"value_loss", e.value_loss},     {"entropy", e.entropy},
              {"wall_seconds", e.wall_seconds}};
}

TrainResult train(const std::vector<LinalgOp>& dataset, PolicyParams initial,
                  const PPOConfig& cfg, const EnvFactory& make_env, uint64_t seed,
                  const TrainCallback& on_iteration) {
  validate(cfg);
  TrainResult result{std::move(initial), {}};
  if (cfg.iterations == 0) return result;
  if (dataset.empty()) throw Error(ErrorCode::kLengthMismatch, "dataset is empty");
  std::mt19937_64 rng(seed);
  Optimizer optimizer(cfg.optimizer, cfg.lr);
  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const RolloutBatch batch = collect_rollouts(make_env, result.params, dataset,
                                                static_cast<size_t>(cfg.batch), cfg, rng);
    const std::vector<LossReport> losses = ppo_update(result.params, optimizer, batch, cfg);
    TrainLogEntry e;
    e.iteration = it;
    e.mean_reward = batch.mean_episode_reward;
    e.mean_speedup = batch.mean_speedup;
    e.policy_loss = losses.front().policy;
    e.value_loss = losses.front().value;
    e.entropy = losses.front().entropy;
    e.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(e);
    if (on_iteration) on_iteration(e, result.params);
  }
  return result;
}

EpisodeOutcome run_policy_episode(const PolicyParams& params, Env& env, const LinalgOp& op,
                                  std::mt19937_64* rng) {
  EpisodeOutcome out;
  StepResult r = env.reset(op);
  out.base_cost = env.state().base_cost;
  while (true) {
    const PolicyDistributions d =
        forward_policy(params, r.observation, r.mask, current_loops(env));
    const HierarchicalSample s = rng ? sample_action(d, *rng) : greedy_action(d);
    const Action a = to_action(d, s);
    r = env.step(a);
    out.schedule.actions.push_back(a);
    out.total_reward += r.reward;
    if (r.done) break;
  }
  out.speedup = r.info.speedup;
  out.final_cost = out.base_cost / out.speedup;
  return out;
}

std::vector<double> sampled_search_curve(const PolicyParams& params, Env& env,
                                         const LinalgOp& op, int episodes,
                                         std::mt19937_64& rng) {
  std::vector<double> curve;
  double best = 0.0;
  for (int e = 0; e < episodes; ++e) {
    best = std::max(best, run_policy_episode(params, env, op, &rng).speedup);
    curve.push_back(best);
  }
  return curve;
}

namespace {

constexpr char kMagic[8] = {'O', 'G', 'Y', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  Json header;
  header["space"] = action_space_name(params.space);
  header["limits"] = to_json(params.limits);
  header["shape"] = to_json(params.shape);
  Json tensors = Json::array();
  const auto nets = params.nets();
  for (size_t n = 0; n < nets.size(); ++n) {
    for (size_t l = 0; l < nets[n]->layers().size(); ++l) {
      const DenseLayer& layer = nets[n]->layers()[l];
      tensors.push_back(Json{{"net", PolicyParams::net_names()[n]},
                             {"layer", l},
                             {"in", layer.in},
                             {"out", layer.out},
                             {"activation", layer.activation == Activation::kRelu ? "relu" : "none"}});
    }
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kParse, "cannot write checkpoint " + path);
  const uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto p : params.parameters()) {
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::kParse, "short write to checkpoint " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParse, "cannot open checkpoint " + path);
  char magic[8];
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::kParse, path + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kParse, "unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const Json header = Json::parse(text);

  PolicyParams p;
  p.space = parse_action_space(header.at("space").get<std::string>());
  p.limits = env_limits_from_json(header.at("limits"));
  p.shape = network_shape_from_json(header.at("shape"));
  auto nets = p.nets();
  const auto& names = PolicyParams::net_names();
  for (const Json& t : header.at("tensors")) {
    const auto name = t.at("net").get<std::string>();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error(ErrorCode::kParse, "unknown network " + name);
    DenseLayer layer;
    layer.in = t.at("in").get<size_t>();
    layer.out = t.at("out").get<size_t>();
    layer.activation = t.at("activation") == "relu" ? Activation::kRelu : Activation::kNone;
    layer.weights.resize(layer.in * layer.out);
    layer.bias.resize(layer.out);
    nets[static_cast<size_t>(it - names.begin())]->layers().push_back(std::move(layer));
  }
  for (auto s : p.parameters()) {
    in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
  }
  if (!in) throw Error(ErrorCode::kParse, "truncated checkpoint " + path);
  return p;
}

}  // namespace optgym
