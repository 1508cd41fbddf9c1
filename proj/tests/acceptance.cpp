// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all of them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "optgym/autosched.hpp"
#include "optgym/env.hpp"
#include "optgym/error.hpp"
#include "optgym/features.hpp"
#include "optgym/interpreter.hpp"
#include "optgym/policy.hpp"
#include "optgym/ppo.hpp"
#include "test_support.hpp"

namespace optgym {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Uniform over legal transforms, then over legal parameter slots; tile rows
// honour the remaining loop budget.
Action random_legal_action(const ActionMask& m, size_t num_loops, std::mt19937_64& rng) {
  std::vector<int> kinds;
  for (int k = 0; k < kNumTransforms; ++k) {
    if (m.transform[static_cast<size_t>(k)]) kinds.push_back(k);
  }
  const int kind = kinds[std::uniform_int_distribution<size_t>(0, kinds.size() - 1)(rng)];
  const auto pick = [&](const std::vector<bool>& allowed, size_t limit) {
    std::vector<size_t> idx;
    for (size_t j = 0; j < limit; ++j) {
      if (allowed[j]) idx.push_back(j);
    }
    return idx[std::uniform_int_distribution<size_t>(0, idx.size() - 1)(rng)];
  };
  switch (static_cast<TransformKind>(kind)) {
    case TransformKind::kTiling:
    case TransformKind::kParallelization: {
      std::vector<int64_t> sizes(num_loops, 0);
      int nonzero = 0;
      for (size_t i = 0; i < num_loops; ++i) {
        if (nonzero >= m.tile_budget) break;
        const size_t j = pick(m.tile_sizes[i], m.tile_sizes[i].size());
        sizes[i] = m.tile_choices[i][j];
        nonzero += sizes[i] != 0 ? 1 : 0;
      }
      if (kind == static_cast<int>(TransformKind::kTiling)) return Tiling{sizes};
      return Parallelization{sizes};
    }
    case TransformKind::kInterchange:
      return Interchange{static_cast<int64_t>(pick(m.interchange, num_loops))};
    case TransformKind::kIm2col:
      return Im2col{};
    case TransformKind::kVectorization:
      return Vectorization{};
  }
  return Vectorization{};
}

// Random op with every extent in [1, 8] (windows no larger than the input).
LinalgOp small_op(std::mt19937_64& rng) {
  std::uniform_int_distribution<int64_t> dim(1, 8), kind_pick(0, 4), rank(1, 4), win(1, 3),
      batch(1, 2);
  const auto kind = static_cast<OpKind>(kind_pick(rng));
  std::vector<int64_t> shape;
  switch (kind) {
    case OpKind::kMatmul:
      shape = {dim(rng), dim(rng), dim(rng)};
      break;
    case OpKind::kConv2D:
    case OpKind::kMaxpool: {
      const int64_t kh = win(rng), kw = win(rng);
      const int64_t h = std::max(kh, dim(rng)), w = std::max(kw, dim(rng));
      if (kind == OpKind::kConv2D) {
        shape = {batch(rng), h, w, dim(rng), dim(rng), kh, kw};
      } else {
        shape = {batch(rng), h, w, dim(rng), kh, kw};
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kRelu: {
      const int64_t r = rank(rng);
      for (int64_t i = 0; i < r; ++i) shape.push_back(dim(rng));
      break;
    }
  }
  return build_operation(kind, shape);
}

// Runs random legal actions until the episode ends; returns the actions.
std::vector<Action> random_episode(Env& env, const LinalgOp& op, std::mt19937_64& rng,
                                   double* reward_sum) {
  StepResult r = env.reset(op);
  std::vector<Action> actions;
  double sum = 0.0;
  while (!r.done) {
    const Action a = random_legal_action(env.mask(), env.state().current_op.loops.size(), rng);
    r = env.step(a);
    sum += r.reward;
    actions.push_back(a);
  }
  if (reward_sum) *reward_sum = sum;
  return actions;
}

Outcome c1_action_space() {
  const uint64_t n = action_space_size(7, 5);
  return {n == 161292, "action_space_size(7,5) = " + std::to_string(n) + ", expected 161292"};
}

Outcome c2_observation_shape() {
  KindCounts counts;
  for (OpKind k : kAllOpKinds) counts[k] = 100;
  const EnvLimits limits;
  size_t bad = 0, total = 0;
  for (const LinalgOp& op : generate_dataset(2024, counts)) {
    ++total;
    if (extract(op, HistoryTensor(limits), limits).size() != 290) ++bad;
  }
  return {bad == 0 && total == 500,
          std::to_string(total) + " ops, " + std::to_string(bad) + " with length != 290"};
}

Outcome c3_semantics() {
  std::mt19937_64 rng(3);
  const EnvLimits limits;
  int pairs = 0, mismatches = 0;
  double worst_float = 0.0;
  while (pairs < 600) {
    const LinalgOp op = small_op(rng);
    Schedule schedule;
    LinalgOp cur = op;
    const int len = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int s = 0; s < len; ++s) {
      const ActionMask m = compute_mask(cur, schedule, s, limits);
      if (!m.any()) break;
      const Action a = random_legal_action(m, cur.loops.size(), rng);
      cur = apply_action(cur, a, limits.max_loops);
      schedule.actions.push_back(a);
      if (transform_of(a) == TransformKind::kVectorization) break;
    }
    const LinalgOp replay = apply_schedule(op, schedule, limits.max_loops);
    const auto ints = make_inputs(op, static_cast<uint64_t>(pairs), FillKind::kInteger);
    const auto floats = make_inputs(op, static_cast<uint64_t>(pairs), FillKind::kFloat);
    if (interpret(op, ints).data != interpret(replay, ints).data) ++mismatches;
    const double diff = max_relative_difference(interpret(op, floats), interpret(replay, floats));
    worst_float = std::max(worst_float, diff);
    if (diff > 1e-9) ++mismatches;
    ++pairs;
  }
  return {mismatches == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) +
                               " mismatches, worst float rel diff " + fmt("%.3g", worst_float)};
}

Outcome c4_mask_soundness() {
  std::mt19937_64 rng(4);
  KindCounts counts;
  for (OpKind k : kAllOpKinds) counts[k] = 20;
  const auto ops = generate_dataset(4, counts, ShapeRanges::capped(64));
  Env env(EnvLimits{}, RewardMode::kImmediate, std::make_shared<AnalyticBackend>());
  int steps = 0, errors = 0, violations = 0;
  while (steps < 10000) {
    const LinalgOp& op = ops[std::uniform_int_distribution<size_t>(0, ops.size() - 1)(rng)];
    StepResult r = env.reset(op);
    try {
      while (!r.done) {
        r = env.step(random_legal_action(env.mask(), env.state().current_op.loops.size(), rng));
        ++steps;
      }
    } catch (const Error&) {
      ++errors;
      continue;
    }
    const Schedule& s = env.state().schedule;
    int parallel = 0;
    for (size_t i = 0; i < s.actions.size(); ++i) {
      const TransformKind k = transform_of(s.actions[i]);
      parallel += k == TransformKind::kParallelization ? 1 : 0;
      if (k == TransformKind::kVectorization && i + 1 != s.actions.size()) ++violations;
    }
    if (parallel > 1) ++violations;
    try {
      validate_schedule(s, EnvLimits{}.max_schedule);
      if (apply_schedule(op, s) != env.state().current_op) ++violations;
    } catch (const Error&) {
      ++violations;
    }
  }
  return {errors == 0 && violations == 0, std::to_string(steps) + " steps, " +
                                              std::to_string(errors) + " engine errors, " +
                                              std::to_string(violations) + " invariant violations"};
}

Outcome c5_telescoping() {
  std::mt19937_64 rng(5);
  const auto ops = generate_dataset(5, KindCounts::validation_default());
  auto backend = std::make_shared<AnalyticBackend>();
  Env immediate(EnvLimits{}, RewardMode::kImmediate, backend);
  Env final_env(EnvLimits{}, RewardMode::kFinal, backend);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const LinalgOp& op = ops[std::uniform_int_distribution<size_t>(0, ops.size() - 1)(rng)];
    double sum = 0.0;
    const std::vector<Action> actions = random_episode(immediate, op, rng, &sum);
    StepResult r = final_env.reset(op);
    for (const Action& a : actions) r = final_env.step(a);
    worst = std::max(worst, std::abs(sum - r.reward));
  }
  return {worst <= 1e-9, "1000 trajectories, max |sum immediate - final| = " + fmt("%.3g", worst)};
}

Outcome c6_gradients() {
  double worst = 0.0;
  size_t params = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    for (ActionSpaceKind space : {ActionSpaceKind::kHierarchical, ActionSpaceKind::kSimple}) {
      worst = std::max(worst, testing::max_gradient_error(space, seed));
      params = std::max(params, PolicyParams::make(testing::toy_limits(), space,
                                                   testing::toy_shape(), seed)
                                    .parameter_count());
    }
  }
  return {worst < 1e-4 && params <= 1000,
          "20 seeds x 2 action spaces, " + std::to_string(params) +
              " parameters, max rel error " + fmt("%.3g", worst) + " (< 1e-4)"};
}

Outcome c7_gae() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<size_t> len(1, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0, worst_mc = 0.0;
  for (int e = 0; e < 100; ++e) {
    const size_t n = len(rng);
    std::vector<double> r(n), v(n);
    for (size_t i = 0; i < n; ++i) {
      r[i] = normal(rng);
      v[i] = normal(rng);
    }
    const double boot = normal(rng), gamma = unit(rng), lambda = unit(rng);
    const GaeResult g = gae(r, v, boot, gamma, lambda);
    const auto oracle = testing::brute_force_gae(r, v, boot, gamma, lambda);
    for (size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(g.advantages[i] - oracle[i]));
    // lambda = 1: discounted return (bootstrapped) minus the value.
    const GaeResult mc = gae(r, v, boot, gamma, 1.0);
    for (size_t t = 0; t < n; ++t) {
      double ret = 0.0, w = 1.0;
      for (size_t k = t; k < n; ++k, w *= gamma) ret += w * r[k];
      ret += w * boot;
      worst_mc = std::max(worst_mc, std::abs(mc.advantages[t] - (ret - v[t])));
    }
  }
  return {worst <= 1e-10 && worst_mc <= 1e-10, "100 episodes, max |err| " + fmt("%.3g", worst) +
                                                   ", lambda=1 vs Monte-Carlo " +
                                                   fmt("%.3g", worst_mc)};
}

Outcome c8_baseline() {
  const LinalgOp op = build_operation(OpKind::kMatmul, {64, 64, 64});
  const SearchResult r = search(op, SearchConstraints{}, CostConfig{});
  const double hand =
      run_schedule(op, Schedule{{Tiling{{32, 32, 32}}, Vectorization{}}}).speedup;
  bool monotone = true;
  for (size_t i = 1; i < r.trace.size(); ++i) {
    monotone = monotone && r.trace[i].best_so_far <= r.trace[i - 1].best_so_far;
  }
  return {r.speedup >= hand && r.speedup >= 1.0 && monotone,
          std::to_string(r.trace.size()) + " schedules, best " + fmt("%.4g", r.speedup) +
              "x vs tile32+vec " + fmt("%.4g", hand) + "x, trace " +
              (monotone ? "monotone" : "NOT monotone")};
}

// Shared by criteria 9 and 10.
struct TrainedAgent {
  PolicyParams params;
  std::vector<TrainLogEntry> log;
  std::vector<LinalgOp> held_out;
};

KindCounts uniform_counts(int64_t n) {
  KindCounts c;
  for (OpKind k : kAllOpKinds) c[k] = n;
  return c;
}

EnvFactory analytic_env(RewardMode mode) {
  auto backend = std::make_shared<AnalyticBackend>();
  return [backend, mode] { return Env(EnvLimits{}, mode, backend); };
}

const TrainedAgent& trained_agent() {
  static const TrainedAgent agent = [] {
    const uint64_t seed = 1;
    const auto train_ops = generate_dataset(seed, uniform_counts(10), ShapeRanges::capped(128));
    TrainedAgent a;
    a.held_out = generate_dataset(seed + 1, uniform_counts(2), ShapeRanges::capped(128));
    PPOConfig cfg;
    cfg.iterations = 200;
    cfg.lr = 1e-4;  // tuned for the 512-wide default network; see README
    const PolicyParams initial =
        PolicyParams::make(EnvLimits{}, ActionSpaceKind::kHierarchical, NetworkShape{}, seed);
    TrainResult r = train(train_ops, initial, cfg, analytic_env(RewardMode::kFinal), seed,
                          [](const TrainLogEntry& e, const PolicyParams&) {
                            if (e.iteration % 20 == 0) {
                              std::printf("      train iter %d mean speedup %.3f\n", e.iteration,
                                          e.mean_speedup);
                              std::fflush(stdout);
                            }
                          });
    a.params = std::move(r.params);
    a.log = std::move(r.log);
    return a;
  }();
  return agent;
}

Outcome c9_training() {
  const TrainedAgent& a = trained_agent();
  Env env = analytic_env(RewardMode::kFinal)();
  double log_ratio = 0.0;
  for (const LinalgOp& op : a.held_out) {
    const EpisodeOutcome rl = run_policy_episode(a.params, env, op, nullptr);
    const SearchResult base = search(op, SearchConstraints{}, CostConfig{});
    log_ratio += std::log(rl.speedup / base.speedup);
  }
  const double ratio = std::exp(log_ratio / static_cast<double>(a.held_out.size()));
  const size_t tail = std::min<size_t>(10, a.log.size());
  double late = 0.0;
  for (size_t i = a.log.size() - tail; i < a.log.size(); ++i) {
    late += a.log[i].mean_speedup / static_cast<double>(tail);
  }
  const double first = a.log.front().mean_speedup;
  return {ratio >= 0.8 && late > first,
          std::to_string(a.held_out.size()) + " held-out ops, geomean ratio " + fmt("%.3f", ratio) +
              " (>= 0.8), mean speedup iter 1 " + fmt("%.3f", first) + " -> last 10 iters " +
              fmt("%.3f", late)};
}

Outcome c10_search_efficiency() {
  const TrainedAgent& a = trained_agent();
  std::vector<LinalgOp> ops;
  std::set<OpKind> seen;
  for (const LinalgOp& op : a.held_out) {
    if (seen.insert(op.kind).second) ops.push_back(op);
  }
  Env env = analytic_env(RewardMode::kFinal)();
  std::mt19937_64 rng(10);
  SearchConstraints budget50;
  budget50.budget = 50;
  int wins = 0;
  std::string per_op;
  for (const LinalgOp& op : ops) {
    const double rl = sampled_search_curve(a.params, env, op, 50, rng).back();
    const double base = search(op, budget50, CostConfig{}).speedup;
    wins += rl >= base ? 1 : 0;
    per_op += " " + std::string(op_kind_name(op.kind)) + " " + fmt("%.2f", rl) + "/" +
              fmt("%.2f", base);
  }
  return {wins >= 3, std::to_string(wins) + "/" + std::to_string(ops.size()) +
                         " ops where agent >= baseline after 50 schedules (rl/base):" + per_op};
}

Outcome c11_ablation() {
  NetworkShape small{32, 2, 32, 2};
  PPOConfig cfg;
  cfg.iterations = 5;
  cfg.lr = 1e-4;
  const std::vector<LinalgOp> one = {build_operation(OpKind::kMatmul, {48, 48, 48})};

  auto measured_env = [](RewardMode mode) -> EnvFactory {
    auto backend = std::make_shared<MeasuredBackend>(3, 10.0);
    return [backend, mode] { return Env(EnvLimits{}, mode, backend); };
  };
  auto run = [&](ActionSpaceKind space, const EnvFactory& make_env) {
    return train(one, PolicyParams::make(EnvLimits{}, space, small, 11), cfg, make_env, 11).log;
  };
  auto mean_wall = [](const std::vector<TrainLogEntry>& log) {
    double s = 0.0;
    for (const auto& e : log) s += e.wall_seconds / static_cast<double>(log.size());
    return s;
  };
  const auto imm = run(ActionSpaceKind::kHierarchical, measured_env(RewardMode::kImmediate));
  const auto fin = run(ActionSpaceKind::kHierarchical, measured_env(RewardMode::kFinal));
  const auto hier = run(ActionSpaceKind::kHierarchical, analytic_env(RewardMode::kFinal));
  const auto simple = run(ActionSpaceKind::kSimple, analytic_env(RewardMode::kFinal));

  bool comparable = true;
  for (const auto* log : {&imm, &fin, &hier, &simple}) {
    comparable = comparable && log->size() == static_cast<size_t>(cfg.iterations);
    for (const TrainLogEntry& e : *log) {
      comparable = comparable && std::isfinite(e.mean_speedup) && std::isfinite(e.policy_loss);
    }
    comparable = comparable && to_json(log->front()).size() == to_json(imm.front()).size();
  }
  const double t_imm = mean_wall(imm), t_fin = mean_wall(fin);
  return {comparable && t_fin <= t_imm,
          "4 runs x " + std::to_string(cfg.iterations) + " iterations, logs " +
              (comparable ? "comparable" : "NOT comparable") + "; measured backend s/iter final " +
              fmt("%.4f", t_fin) + " vs immediate " + fmt("%.4f", t_imm) +
              "; speedup hier " + fmt("%.2f", hier.back().mean_speedup) + " simple " +
              fmt("%.2f", simple.back().mean_speedup)};
}

}  // namespace
}  // namespace optgym

int main(int argc, char** argv) {
  using namespace optgym;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"action-space size formula", c1_action_space},
      {"observation length on 500 ops", c2_observation_shape},
      {"semantic preservation", c3_semantics},
      {"mask soundness over 10000 steps", c4_mask_soundness},
      {"reward telescoping", c5_telescoping},
      {"policy/value gradient vs finite differences", c6_gradients},
      {"GAE vs brute-force oracle", c7_gae},
      {"baseline sanity on matmul 64^3", c8_baseline},
      {"end-to-end training vs baseline", c9_training},
      {"search efficiency at 50 schedules", c10_search_efficiency},
      {"reward-mode and action-space ablation", c11_ablation},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id,
                criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
