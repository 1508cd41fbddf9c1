// optgym: dataset generation, training, evaluation, baseline search, and
// manual schedule application.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "optgym/autosched.hpp"
#include "optgym/config.hpp"
#include "optgym/env.hpp"
#include "optgym/error.hpp"
#include "optgym/features.hpp"
#include "optgym/interpreter.hpp"
#include "optgym/kernels.hpp"
#include "optgym/loop_ir.hpp"
#include "optgym/policy.hpp"
#include "optgym/ppo.hpp"

namespace fs = std::filesystem;
using namespace optgym;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

KindCounts parse_counts(const std::string& text) {
  KindCounts counts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("bad --counts entry '" + item + "'");
    try {
      const OpKind kind = parse_op_kind(item.substr(0, eq));
      const int64_t n = std::stoll(item.substr(eq + 1));
      if (n < 0) throw UsageError("negative count in '" + item + "'");
      counts[kind] = n;
    } catch (const Error&) {
      throw UsageError("unknown op kind in '" + item + "'");
    } catch (const std::logic_error&) {
      throw UsageError("bad count in '" + item + "'");
    }
  }
  return counts;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
}

// A single op object, or line `index` of a JSON-lines dataset.
LinalgOp read_op(const std::string& path, size_t index) {
  const std::string text = read_file(path);
  if (Json::accept(text)) return op_from_json(Json::parse(text));
  const std::vector<LinalgOp> ops = read_jsonl(path);
  if (index >= ops.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, path + " has " + std::to_string(ops.size()) + " ops");
  }
  return ops[index];
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kParse, "cannot write " + path);
  out.precision(17);
  return out;
}

EnvFactory env_factory(const RunConfig& cfg) {
  auto backend = make_shared_backend(cfg);
  return [cfg, backend] { return Env(cfg.limits, cfg.reward_mode, backend); };
}

SearchResult run_search(const LinalgOp& op, const SearchConstraints& c, const RunConfig& cfg) {
  if (cfg.backend == BackendKind::kAnalytic) return search(op, c, cfg.cost);
  auto backend = make_shared_backend(cfg);
  return search(op, c, *backend);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::string counts;
  std::string val_counts;
  int64_t max_dim = 0;
};

void cmd_generate(const RunConfig& cfg, const GenerateArgs& a) {
  const std::string dir = a.out.empty() ? cfg.paths.dataset_dir : a.out;
  KindCounts train = KindCounts::training_default();
  KindCounts val = KindCounts::validation_default();
  if (!a.counts.empty()) val = train = parse_counts(a.counts);
  if (!a.val_counts.empty()) val = parse_counts(a.val_counts);
  const ShapeRanges ranges = a.max_dim > 0 ? ShapeRanges::capped(a.max_dim) : ShapeRanges{};
  fs::create_directories(dir);
  const auto train_ops = generate_dataset(cfg.seed, train, ranges);
  const auto val_ops = generate_dataset(cfg.seed + 1, val, ranges);
  write_jsonl((fs::path(dir) / "train.jsonl").string(), train_ops);
  write_jsonl((fs::path(dir) / "validation.jsonl").string(), val_ops);
  std::cout << "train " << train_ops.size() << " validation " << val_ops.size() << " -> " << dir
            << "\n";
}

struct TrainArgs {
  std::string dataset;
  std::string checkpoint;
  std::string log;
  std::string reward;
  std::string space;
  int iterations = -1;
  int checkpoint_every = 50;
};

void cmd_train(RunConfig cfg, const TrainArgs& a) {
  if (!a.reward.empty()) cfg.reward_mode = parse_reward_mode(a.reward);
  if (!a.space.empty()) cfg.action_space = parse_action_space(a.space);
  if (a.iterations >= 0) cfg.ppo.iterations = a.iterations;
  const std::string dataset =
      a.dataset.empty() ? (fs::path(cfg.paths.dataset_dir) / "train.jsonl").string() : a.dataset;
  const std::string ckpt = a.checkpoint.empty() ? cfg.paths.checkpoint : a.checkpoint;
  const std::string log_path =
      a.log.empty() ? (fs::path(cfg.paths.report_dir) / "train_log.jsonl").string() : a.log;

  const std::vector<LinalgOp> ops = read_jsonl(dataset);
  PolicyParams initial =
      PolicyParams::make(cfg.limits, cfg.action_space, cfg.network, cfg.seed);
  std::ofstream log = open_out(log_path);
  if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
  save_checkpoint(ckpt, initial);

  auto on_iteration = [&](const TrainLogEntry& e, const PolicyParams& p) {
    Json j = to_json(e);
    j["reward_mode"] = reward_mode_name(cfg.reward_mode);
    j["action_space"] = action_space_name(cfg.action_space);
    log << j.dump() << "\n" << std::flush;
    std::cerr << "iter " << e.iteration << " speedup " << e.mean_speedup << " reward "
              << e.mean_reward << "\n";
    if (a.checkpoint_every > 0 && e.iteration % a.checkpoint_every == 0) save_checkpoint(ckpt, p);
  };
  const TrainResult r =
      train(ops, std::move(initial), cfg.ppo, env_factory(cfg), cfg.seed, on_iteration);
  save_checkpoint(ckpt, r.params);
  std::cout << "trained " << r.log.size() << " iterations -> " << ckpt << "\n";
}

struct SearchArgs {
  int64_t max_tile = 64;
  int min_tiled = 2;
  int64_t budget = -1;

  SearchConstraints constraints(const RunConfig& cfg) const {
    SearchConstraints c;
    c.max_tile = max_tile;
    c.min_tiled_loops = min_tiled;
    c.max_schedule_len = cfg.limits.max_schedule;
    c.max_loops = cfg.limits.max_loops;
    if (budget >= 0) c.budget = budget;
    return c;
  }
};

struct EvaluateArgs {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  int episodes = 50;
  int limit = -1;
  SearchArgs search;
};

void cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& a) {
  const std::string ckpt = a.checkpoint.empty() ? cfg.paths.checkpoint : a.checkpoint;
  const std::string dataset = a.dataset.empty()
                                  ? (fs::path(cfg.paths.dataset_dir) / "validation.jsonl").string()
                                  : a.dataset;
  const std::string dir = a.out.empty() ? cfg.paths.report_dir : a.out;
  const PolicyParams params = load_checkpoint(ckpt);
  std::vector<LinalgOp> ops = read_jsonl(dataset);
  if (a.limit >= 0 && static_cast<size_t>(a.limit) < ops.size()) ops.resize(static_cast<size_t>(a.limit));

  RunConfig env_cfg = cfg;
  env_cfg.limits = params.limits;
  Env env = env_factory(env_cfg)();
  std::mt19937_64 rng(cfg.seed);
  const SearchConstraints c = a.search.constraints(env_cfg);

  std::ofstream report = open_out((fs::path(dir) / "report.csv").string());
  std::ofstream curves = open_out((fs::path(dir) / "curves.csv").string());
  report << "op_id,kind,base_cost,rl_cost,rl_speedup,baseline_cost,baseline_speedup,ratio\n";
  curves << "op_id,searcher,schedules,best_speedup\n";
  double log_ratio = 0.0, log_rl = 0.0, log_base = 0.0;
  for (size_t i = 0; i < ops.size(); ++i) {
    const EpisodeOutcome rl = run_policy_episode(params, env, ops[i], nullptr);
    const SearchResult base = run_search(ops[i], c, env_cfg);
    const double ratio = rl.speedup / base.speedup;
    log_ratio += std::log(ratio);
    log_rl += std::log(rl.speedup);
    log_base += std::log(base.speedup);
    report << i << ',' << op_kind_name(ops[i].kind) << ',' << rl.base_cost << ',' << rl.final_cost
           << ',' << rl.speedup << ',' << base.best_cost << ',' << base.speedup << ',' << ratio
           << "\n";
    const auto curve = sampled_search_curve(params, env, ops[i], a.episodes, rng);
    for (size_t k = 0; k < curve.size(); ++k) {
      curves << i << ",rl," << k + 1 << ',' << curve[k] << "\n";
    }
    for (size_t k = 0; k < base.trace.size() && k < static_cast<size_t>(a.episodes); ++k) {
      curves << i << ",baseline," << k + 1 << ',' << base.base_cost / base.trace[k].best_so_far
             << "\n";
    }
  }
  const double n = std::max<double>(1.0, static_cast<double>(ops.size()));
  Json summary{{"ops", ops.size()},
               {"geomean_ratio", std::exp(log_ratio / n)},
               {"geomean_rl_speedup", std::exp(log_rl / n)},
               {"geomean_baseline_speedup", std::exp(log_base / n)}};
  open_out((fs::path(dir) / "summary.json").string()) << summary.dump(2) << "\n";
  std::cout << summary.dump() << "\n";
}

struct AutoscheduleArgs {
  std::string op;
  size_t index = 0;
  std::string out;
  std::string trace;
  SearchArgs search;
};

void cmd_autoschedule(const RunConfig& cfg, const AutoscheduleArgs& a) {
  const LinalgOp op = read_op(a.op, a.index);
  const SearchResult r = run_search(op, a.search.constraints(cfg), cfg);
  Json result{{"schedule", to_json(r.best)},
              {"base_cost", r.base_cost},
              {"best_cost", r.best_cost},
              {"speedup", r.speedup},
              {"evaluated", r.trace.size()},
              {"skipped", r.skipped}};
  if (!a.out.empty()) open_out(a.out) << to_json(r.best).dump(2) << "\n";
  if (!a.trace.empty()) {
    std::ofstream t = open_out(a.trace);
    t << "schedule_index,cost,best_so_far,schedule_json\n";
    for (const TraceRecord& rec : r.trace) {
      t << rec.schedule_index << ',' << rec.cost << ',' << rec.best_so_far << ','
        << csv_quote(to_json(rec.schedule).dump()) << "\n";
    }
  }
  std::cout << result.dump() << "\n";
}

struct ApplyArgs {
  std::string op;
  size_t index = 0;
  std::string schedule;
  std::string out;
  bool verify = false;
  bool dump_obs = false;
};

void cmd_apply(const RunConfig& cfg, const ApplyArgs& a) {
  const LinalgOp op = read_op(a.op, a.index);
  const Json sj = read_json(a.schedule);
  const Schedule schedule = schedule_from_json(sj.contains("schedule") ? sj["schedule"] : sj);
  auto backend = make_shared_backend(cfg);
  const ScheduleResult r = run_schedule(op, schedule, *backend, cfg.limits.max_loops);
  Json result{{"op", to_json(r.op)},
              {"base_cost", r.base_cost},
              {"final_cost", r.final_cost},
              {"speedup", r.speedup}};
  if (a.verify) {
    bool pass = true;
    for (FillKind fill : {FillKind::kInteger, FillKind::kFloat}) {
      const auto inputs = make_inputs(op, cfg.seed, fill);
      const double diff = max_relative_difference(interpret(op, inputs), interpret(r.op, inputs));
      pass = pass && (fill == FillKind::kInteger ? diff == 0.0 : diff <= 1e-9);
    }
    result["verify"] = pass ? "pass" : "fail";
  }
  if (a.dump_obs) {
    HistoryTensor history(cfg.limits);
    LinalgOp cur = op;
    for (size_t s = 0; s < schedule.actions.size(); ++s) {
      history = record_history(history, schedule.actions[s], static_cast<int>(s),
                               static_cast<int>(cur.loops.size()));
      cur = apply_action(cur, schedule.actions[s], cfg.limits.max_loops);
    }
    result["observation"] = extract(cur, history, cfg.limits);
  }
  if (!a.out.empty()) open_out(a.out) << result.dump(2) << "\n";
  std::cout << result.dump() << "\n";
  if (a.verify && result["verify"] != "pass") throw Error(ErrorCode::kInvalidSchedule, "verification failed");
}

void add_search_flags(CLI::App* sub, SearchArgs& s) {
  sub->add_option("--max-tile", s.max_tile, "largest tile size considered")->capture_default_str();
  sub->add_option("--min-tiled", s.min_tiled, "minimum number of tiled loops")
      ->capture_default_str();
  sub->add_option("--budget", s.budget, "evaluate at most this many schedules");
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  CLI::App app{"loop-nest optimization gym"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string backend;
  app.add_option("--config", config_path, "run configuration (JSON)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--backend", backend, "cost backend")
      ->check(CLI::IsMember({"analytic", "measured"}));

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write train/validation datasets");
  g->add_option("--out", gen.out, "output directory");
  g->add_option("--counts", gen.counts, "per-kind counts, e.g. matmul=10,conv2d=5");
  g->add_option("--val-counts", gen.val_counts, "validation counts (default: --counts)");
  g->add_option("--max-dim", gen.max_dim, "cap every dimension");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the PPO agent");
  t->add_option("--dataset", tr.dataset, "training ops (JSON lines)");
  t->add_option("--checkpoint", tr.checkpoint, "checkpoint path");
  t->add_option("--log", tr.log, "training log (JSON lines)");
  t->add_option("--reward", tr.reward, "reward mode")->check(CLI::IsMember({"immediate", "final"}));
  t->add_option("--space", tr.space, "action space")->check(CLI::IsMember({"hier", "simple"}));
  t->add_option("--iterations", tr.iterations, "PPO iterations");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "iterations between checkpoints")
      ->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "compare the agent against the baseline");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint path");
  e->add_option("--dataset", ev.dataset, "evaluation ops (JSON lines)");
  e->add_option("--out", ev.out, "report directory");
  e->add_option("--episodes", ev.episodes, "sampled schedules per op for the curves")
      ->capture_default_str();
  e->add_option("--limit", ev.limit, "evaluate only the first N ops");
  add_search_flags(e, ev.search);

  AutoscheduleArgs as;
  auto* s = app.add_subcommand("autoschedule", "exhaustive baseline search on one op");
  s->add_option("--op", as.op, "op JSON or JSON-lines file")->required();
  s->add_option("--index", as.index, "line of a JSON-lines file");
  s->add_option("--out", as.out, "best schedule JSON");
  s->add_option("--trace", as.trace, "trace CSV");
  add_search_flags(s, as.search);

  ApplyArgs ap;
  auto* p = app.add_subcommand("apply", "apply a schedule to an op");
  p->add_option("--op", ap.op, "op JSON or JSON-lines file")->required();
  p->add_option("--index", ap.index, "line of a JSON-lines file");
  p->add_option("--schedule", ap.schedule, "schedule JSON")->required();
  p->add_option("--out", ap.out, "result JSON");
  p->add_flag("--verify", ap.verify, "check semantic equivalence with the interpreter");
  p->add_flag("--dump-obs", ap.dump_obs, "include the final observation vector");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!backend.empty()) cfg.backend = parse_backend(backend);
    if (g->parsed()) cmd_generate(cfg, gen);
    if (t->parsed()) cmd_train(cfg, tr);
    if (e->parsed()) cmd_evaluate(cfg, ev);
    if (s->parsed()) cmd_autoschedule(cfg, as);
    if (p->parsed()) cmd_apply(cfg, ap);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
