#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace optgym::testing {

void jitter_parameters(PolicyParams& params, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto span : params.parameters()) {
    for (double& v : span) v += normal(rng);
  }
}

ActionMask random_mask(const EnvLimits& limits, size_t num_loops, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.6);
  const auto n = static_cast<size_t>(limits.max_loops);
  const auto slots = static_cast<size_t>(limits.tile_choices) + 1;
  ActionMask m;
  m.tile_choices.assign(n, std::vector<int64_t>(slots, 0));
  m.tile_sizes.assign(n, std::vector<bool>(slots, false));
  m.interchange.assign(n, false);
  const std::vector<int64_t> sizes = {0, 4, 32, 8, 16, 64};
  for (size_t i = 0; i < n; ++i) {
    m.tile_sizes[i][0] = true;
    if (i >= num_loops) continue;
    for (size_t j = 1; j < slots; ++j) {
      m.tile_choices[i][j] = sizes[j % sizes.size()];
      m.tile_sizes[i][j] = coin(rng);
    }
    m.interchange[i] = coin(rng);
  }
  m.interchange[0] = true;
  m.tile_budget = std::uniform_int_distribution<int>(1, static_cast<int>(n))(rng);
  for (bool& b : m.transform) b = coin(rng);
  m.transform[static_cast<size_t>(TransformKind::kVectorization)] = true;
  return m;
}

RolloutBatch random_batch(const PolicyParams& params, size_t size, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4);
  const size_t obs_len = observation_size(params.limits);
  RolloutBatch b;
  for (size_t i = 0; i < size; ++i) {
    Observation obs(obs_len);
    for (double& v : obs) v = normal(rng);
    const size_t loops =
        std::uniform_int_distribution<size_t>(1, static_cast<size_t>(params.limits.max_loops))(rng);
    const ActionMask mask = random_mask(params.limits, loops, rng);
    const PolicyDistributions d = forward_policy(params, obs, mask, loops);
    const HierarchicalSample s = sample_action(d, rng);
    b.observations.push_back(obs);
    b.masks.push_back(mask);
    b.num_loops.push_back(loops);
    b.samples.push_back(s);
    b.logprobs.push_back(s.joint_logprob + jitter(rng));
    b.rewards.push_back(normal(rng));
    b.values.push_back(normal(rng));
    b.advantages.push_back(normal(rng));
    b.returns.push_back(normal(rng));
  }
  return b;
}

std::vector<double> brute_force_gae(const std::vector<double>& r, const std::vector<double>& v,
                                    double bootstrap, double gamma, double lambda) {
  const size_t n = r.size();
  std::vector<double> out(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (size_t k = t; k < n; ++k) {
      const double next = k + 1 < n ? v[k + 1] : bootstrap;
      out[t] += weight * (r[k] + gamma * next - v[k]);
      weight *= gamma * lambda;
    }
  }
  return out;
}

double max_gradient_error(ActionSpaceKind space, uint64_t seed) {
  PolicyParams params = PolicyParams::make(toy_limits(), space, toy_shape(), seed);
  std::mt19937_64 rng(seed + 1000);
  jitter_parameters(params, 0.1, rng);
  const RolloutBatch batch = random_batch(params, 8, rng);
  PPOConfig cfg;
  PolicyParams grads = params.zeros_like();
  compute_loss_and_gradients(params, batch, cfg, &grads);

  const auto analytic = std::as_const(grads).parameters();
  auto theta = params.parameters();
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t p = 0; p < theta.size(); ++p) {
    for (size_t i = 0; i < theta[p].size(); ++i) {
      const double saved = theta[p][i];
      theta[p][i] = saved + h;
      const double up = compute_loss_and_gradients(params, batch, cfg, nullptr).total;
      theta[p][i] = saved - h;
      const double down = compute_loss_and_gradients(params, batch, cfg, nullptr).total;
      theta[p][i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[p][i];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace optgym::testing
