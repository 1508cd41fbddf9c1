#pragma once

#include <random>
#include <vector>

#include "optgym/policy.hpp"
#include "optgym/ppo.hpp"

namespace optgym::testing {

// Small limits that keep toy policies under a thousand parameters.
inline EnvLimits toy_limits() { return EnvLimits{2, 2, 2, 3, 3}; }

inline NetworkShape toy_shape() { return NetworkShape{4, 1, 4, 1}; }

// Adds N(0, sigma) noise to every parameter so no ReLU sits exactly on its
// kink (zero-initialized biases feeding dead rows would).
void jitter_parameters(PolicyParams& params, double sigma, std::mt19937_64& rng);

// A random mask over toy limits with tile slots [0, 4, 32] on real loops.
ActionMask random_mask(const EnvLimits& limits, size_t num_loops, std::mt19937_64& rng);

// A batch of random states whose samples are drawn from `params` itself;
// old log-probs are perturbed so some ratios fall outside the clip band.
RolloutBatch random_batch(const PolicyParams& params, size_t size, std::mt19937_64& rng);

// Independent GAE oracle: A_t = sum_k (gamma lambda)^k delta_{t+k}.
std::vector<double> brute_force_gae(const std::vector<double>& r, const std::vector<double>& v,
                                    double bootstrap, double gamma, double lambda);

// Worst relative error between the analytic PPO gradient and central finite
// differences on a jittered toy network.
double max_gradient_error(ActionSpaceKind space, uint64_t seed);

}  // namespace optgym::testing
