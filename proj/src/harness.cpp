#include "dbsrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dbsrl/baselines.hpp"
#include "dbsrl/presets.hpp"
#include "dbsrl/sim.hpp"

namespace dbsrl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json schedule_json(const vdrl::StepSchedule& s) { return {{"a", s.a}, {"b", s.b}, {"p", s.p}}; }

vdrl::StepSchedule schedule_from(const json& j, vdrl::StepSchedule d) {
  return {j.value("a", d.a), j.value("b", d.b), j.value("p", d.p)};
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json train_json(const vdrl::TrainConfig& t) {
  return {{"max_iterations", t.max_iterations},
          {"discount", t.discount},
          {"value_lr", schedule_json(t.value_lr)},
          {"policy_lr", schedule_json(t.policy_lr)},
          {"window", t.window},
          {"tolerance", t.tolerance},
          {"stop_on_convergence", t.stop_on_convergence},
          {"semi_gradient", t.semi_gradient},
          {"reward_scale_by_n", t.reward_scale_by_n},
          {"target_window", t.target_window},
          {"target_greedy", t.target_greedy}};
}

vdrl::TrainConfig train_from(const json& j) {
  check_keys(j,
             {"max_iterations", "discount", "value_lr", "policy_lr", "window", "tolerance",
              "stop_on_convergence", "semi_gradient", "reward_scale_by_n", "target_window",
              "target_greedy"},
             "train");
  vdrl::TrainConfig t;
  t.max_iterations = j.value("max_iterations", t.max_iterations);
  t.discount = j.value("discount", t.discount);
  if (j.contains("value_lr")) t.value_lr = schedule_from(j["value_lr"], t.value_lr);
  if (j.contains("policy_lr")) t.policy_lr = schedule_from(j["policy_lr"], t.policy_lr);
  t.window = j.value("window", t.window);
  t.tolerance = j.value("tolerance", t.tolerance);
  t.stop_on_convergence = j.value("stop_on_convergence", t.stop_on_convergence);
  t.semi_gradient = j.value("semi_gradient", t.semi_gradient);
  t.reward_scale_by_n = j.value("reward_scale_by_n", t.reward_scale_by_n);
  t.target_window = j.value("target_window", t.target_window);
  t.target_greedy = j.value("target_greedy", t.target_greedy);
  return t;
}

json meta_json(const meta::MetaConfig& m) {
  return {{"iterations", m.iterations},
          {"tasks_per_iteration", m.tasks_per_iteration},
          {"inner_value_lr", m.inner_value_lr},
          {"inner_policy_lr", m.inner_policy_lr},
          {"meta_lr", m.meta_lr},
          {"mode", meta::mode_name(m.mode)},
          {"discount", m.discount},
          {"reward_scale_by_n", m.reward_scale_by_n},
          {"policy_loss_sign", m.policy_loss_sign}};
}

meta::MetaConfig meta_from(const json& j) {
  check_keys(j,
             {"iterations", "tasks_per_iteration", "inner_value_lr", "inner_policy_lr", "meta_lr",
              "mode", "discount", "reward_scale_by_n", "policy_loss_sign"},
             "meta");
  meta::MetaConfig m;
  m.iterations = j.value("iterations", m.iterations);
  m.tasks_per_iteration = j.value("tasks_per_iteration", m.tasks_per_iteration);
  m.inner_value_lr = j.value("inner_value_lr", m.inner_value_lr);
  m.inner_policy_lr = j.value("inner_policy_lr", m.inner_policy_lr);
  m.meta_lr = j.value("meta_lr", m.meta_lr);
  m.mode = meta::parse_mode(j.value("mode", std::string(meta::mode_name(m.mode))));
  m.discount = j.value("discount", m.discount);
  m.reward_scale_by_n = j.value("reward_scale_by_n", m.reward_scale_by_n);
  m.policy_loss_sign = j.value("policy_loss_sign", m.policy_loss_sign);
  return m;
}

json eval_json(const EvalConfig& e) {
  return {{"held_out_tasks", e.held_out_tasks}, {"held_out_seed", e.held_out_seed},
          {"threshold", e.threshold},           {"pretrain_tasks", e.pretrain_tasks},
          {"pretrain_iterations", e.pretrain_iterations}, {"max_iterations", e.max_iterations}};
}

EvalConfig eval_from(const json& j) {
  check_keys(j,
             {"held_out_tasks", "held_out_seed", "threshold", "pretrain_tasks",
              "pretrain_iterations", "max_iterations"},
             "eval");
  EvalConfig e;
  e.held_out_tasks = j.value("held_out_tasks", e.held_out_tasks);
  e.held_out_seed = j.value("held_out_seed", e.held_out_seed);
  e.threshold = j.value("threshold", e.threshold);
  e.pretrain_tasks = j.value("pretrain_tasks", e.pretrain_tasks);
  e.pretrain_iterations = j.value("pretrain_iterations", e.pretrain_iterations);
  e.max_iterations = j.value("max_iterations", e.max_iterations);
  return e;
}

// Base world document for {"preset": ...} or {"path": ...}, patched with the
// remaining keys.
world::WorldConfig world_from_spec(const json& j) {
  if (!j.is_object()) throw ConfigError("world must be an object");
  json base;
  if (j.contains("preset")) {
    base = world::to_json(presets::by_name(j["preset"].get<std::string>()).world);
  } else if (j.contains("path")) {
    const auto path = j["path"].get<std::string>();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open world config '" + path + "'");
    try {
      base = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
  } else {
    base = j;
  }
  json patch = j;
  patch.erase("preset");
  patch.erase("path");
  base.merge_patch(patch);
  return world::world_from_json(base);
}

std::string seed_dir(const ExperimentSpec& spec, const std::string& algo, std::uint64_t seed) {
  return (fs::path(spec.out_dir) / algo / ("seed-" + std::to_string(seed))).string();
}

std::ofstream open_out(const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

approx::ParamSet fresh_init(const ExperimentSpec& spec, const world::WorldConfig& w,
                            const std::string& algo, Rng& rng) {
  if (algo == "iac") return baselines::init_shared(w.num_clusters(), spec.network, rng);
  return approx::init_param_set(w.num_dbs, w.num_clusters(), spec.network, rng);
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentSpec::hash() const {
  // Where results go and how many threads make them does not change them.
  json content = resolved;
  content.erase("out");
  content.erase("jobs");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(content.dump())));
  return buf;
}

void ExperimentSpec::validate() const {
  world.validate();
  task.validate(world);
  train.validate();
  meta.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  static const std::set<std::string> algos{"vdrl", "meta", "iac", "pretrain", "oracle"};
  if (!algos.count(algorithm)) throw ConfigError("unknown algorithm '" + algorithm + "'");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (network.hidden.empty()) throw ConfigError("network.hidden needs at least one layer");
  for (int n : fleet_sizes) {
    if (n < 1 || static_cast<std::size_t>(n) > world.altitudes_m.size()) {
      throw ConfigError("fleet size " + std::to_string(n) + " has no altitude");
    }
  }
  if (!(eval.threshold > 0.0 && eval.threshold <= 1.0)) {
    throw ConfigError("eval.threshold must be in (0, 1]");
  }
  if (eval.held_out_tasks < 1) throw ConfigError("eval.held_out_tasks must be >= 1");
}

json default_spec_json(const std::string& name) {
  const auto p = presets::by_name(name);
  vdrl::TrainConfig train;
  meta::MetaConfig meta;
  EvalConfig eval;
  std::vector<std::size_t> hidden{64, 64};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> fleet;
  for (std::size_t n = 1; n <= p.world.altitudes_m.size(); ++n) fleet.push_back(static_cast<int>(n));
  if (name == "paper-tiny") {
    train.max_iterations = 20000;
    train.value_lr = {1.0, 1000.0, 0.6};
    train.policy_lr = {3.0, 1000.0, 0.6};
    seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  } else if (name == "coordination") {
    hidden = {16, 16};
    train.max_iterations = 2000;
    train.value_lr = {0.05, 1.0, 0.6};
    train.policy_lr = {0.5, 1.0, 0.6};
    seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  } else if (name == "paper-like") {
    train.max_iterations = 3000;
    train.value_lr = {1.0, 1000.0, 0.6};
    train.policy_lr = {3.0, 1000.0, 0.6};
  }
  return {{"schema_version", kSchemaVersion},
          {"name", p.name},
          {"world", {{"preset", p.name}}},
          {"task", world::to_json(p.task)},
          {"realization_seed", p.realization_seed},
          {"algorithm", "vdrl"},
          {"network", {{"hidden", hidden}}},
          {"train", train_json(train)},
          {"meta", meta_json(meta)},
          {"eval", eval_json(eval)},
          {"fleet_sizes", fleet},
          {"seeds", seeds},
          {"out", "runs/" + p.name},
          {"jobs", 1},
          {"oracle_cap", 1e7}};
}

json load_spec_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    // Built-in preset names work in place of a file.
    const auto names = presets::names();
    if (std::find(names.begin(), names.end(), path) != names.end()) return default_spec_json(path);
    throw ConfigError("cannot open spec '" + path + "'");
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse spec '" + path + "': " + e.what());
  }
  if (j.contains("base")) {
    json full = default_spec_json(j["base"].get<std::string>());
    j.erase("base");
    full.merge_patch(j);
    j = std::move(full);
  }
  if (j.contains("world") && j["world"].contains("path")) {
    fs::path p = j["world"]["path"].get<std::string>();
    if (p.is_relative()) p = fs::path(path).parent_path() / p;
    if (!fs::exists(p)) throw ConfigError("world file '" + p.string() + "' does not exist");
    j["world"]["path"] = p.string();
  }
  return j;
}

void apply_override(json& spec, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &spec;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path '" + key + "' crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override path '" + key + "' crosses a non-object");
  (*node)[parts.back()] = value;
}

ExperimentSpec spec_from_json(const json& j) {
  try {
    check_keys(j,
               {"schema_version", "name", "world", "task", "realization_seed", "algorithm",
                "network", "train", "meta", "eval", "fleet_sizes", "seeds", "out", "jobs",
                "oracle_cap"},
               "spec");
    if (j.value("schema_version", kSchemaVersion) != kSchemaVersion) {
      throw ConfigError("unsupported spec schema_version");
    }
    ExperimentSpec s;
    s.resolved = j;
    s.name = j.value("name", std::string("experiment"));
    if (!j.contains("world")) throw ConfigError("spec needs a world");
    s.world = world_from_spec(j["world"]);
    if (j.contains("task")) {
      json t = j["task"];
      if (!t.contains("schema_version")) t["schema_version"] = 1;
      s.task = world::task_from_json(t);
    }
    s.realization_seed = j.value("realization_seed", s.realization_seed);
    s.algorithm = j.value("algorithm", s.algorithm);
    if (j.contains("network")) {
      check_keys(j["network"], {"hidden"}, "network");
      s.network.hidden = j["network"].value("hidden", s.network.hidden);
    }
    if (j.contains("train")) s.train = train_from(j["train"]);
    if (j.contains("meta")) s.meta = meta_from(j["meta"]);
    if (j.contains("eval")) s.eval = eval_from(j["eval"]);
    s.fleet_sizes = j.value("fleet_sizes", s.fleet_sizes);
    s.seeds = j.value("seeds", s.seeds);
    s.out_dir = j.value("out", s.out_dir);
    s.jobs = j.value("jobs", s.jobs);
    s.meta.jobs = 1;
    s.oracle_cap = j.value("oracle_cap", s.oracle_cap);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed spec: ") + e.what());
  }
}

void write_preamble(std::ostream& out, const ExperimentSpec& spec) {
  out << "# schema_version " << kSchemaVersion << '\n';
  out << "# spec_hash " << spec.hash() << '\n';
}

world::RequestRealization realization(const ExperimentSpec& spec) {
  Rng rng(spec.realization_seed);
  return world::sample_realization(spec.world, spec.task, rng);
}

RunSummary run_training(const ExperimentSpec& spec, const std::string& algo, std::uint64_t seed) {
  const auto z = realization(spec);
  Rng rng(seed);
  const auto init = fresh_init(spec, spec.world, algo, rng);
  RunSummary s;
  s.algo = algo;
  s.seed = seed;
  s.num_dbs = spec.world.num_dbs;
  if (algo == "vdrl") {
    s.result = vdrl::train(spec.world, z, init, spec.train, rng);
  } else if (algo == "iac") {
    s.result = baselines::iac_train(spec.world, z, init, spec.train, rng);
  } else {
    throw ConfigError("training runs take vdrl or iac, not '" + algo + "'");
  }
  s.final_utility = s.result.final_utility;
  s.greedy_utility = vdrl::greedy_utility(spec.world, z, s.result.params);
  s.converged_at = s.result.converged_at;
  s.episodes = s.result.episodes;
  s.episodes_home = s.result.episodes_home;
  return s;
}

std::vector<RunSummary> run_many(const ExperimentSpec& spec, const std::vector<std::string>& algos) {
  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  for (const auto& a : algos)
    for (auto seed : spec.seeds) jobs.emplace_back(a, seed);
  return parallel_map<RunSummary>(jobs.size(), spec.jobs, [&](std::size_t i) {
    const auto& [algo, seed] = jobs[i];
    auto s = run_training(spec, algo, seed);
    const auto dir = seed_dir(spec, algo, seed);
    auto out = open_out(dir + "/metrics.csv");
    write_preamble(out, spec);
    const int agents = spec.world.num_dbs;
    vdrl::write_metrics_header(out, agents);
    vdrl::write_metrics_rows(out, spec.name, algo, seed, s.result.metrics);
    approx::save_checkpoint(dir + "/final.ckpt", s.result.params);
    return s;
  });
}

std::vector<RunSummary> load_external_runs(const std::string& path, std::size_t window) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open external results '" + path + "'");
  std::map<std::pair<std::string, std::uint64_t>, std::vector<vdrl::IterationMetrics>> rows;
  std::vector<std::pair<std::string, std::uint64_t>> order;
  std::string line;
  bool header = true;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("run_id,algo,seed,iteration,G", 0) != 0) {
        throw ConfigError(path + ": expected a run_id,algo,seed,iteration,G header");
      }
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    try {
      if (cells.size() < 5) throw std::invalid_argument("short row");
      const auto key = std::make_pair(cells[1], static_cast<std::uint64_t>(std::stoull(cells[2])));
      vdrl::IterationMetrics m;
      m.iteration = std::stol(cells[3]);
      m.team_utility = std::stod(cells[4]);
      if (!rows.count(key)) order.push_back(key);
      rows[key].push_back(m);
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  std::vector<RunSummary> out;
  for (const auto& key : order) {
    RunSummary r;
    r.algo = key.first;
    r.seed = key.second;
    r.result.metrics = rows[key];
    r.final_utility = vdrl::trailing_mean(r.result.metrics, window);
    r.greedy_utility = std::numeric_limits<double>::quiet_NaN();
    r.episodes = static_cast<long>(r.result.metrics.size());
    out.push_back(std::move(r));
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void write_compare_table(std::ostream& out, const std::vector<RunSummary>& runs) {
  std::map<std::string, std::vector<const RunSummary*>> by;
  std::vector<std::string> order;
  for (const auto& r : runs) {
    if (!by.count(r.algo)) order.push_back(r.algo);
    by[r.algo].push_back(&r);
  }
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %5s %12s %10s %10s %10s %12s\n", "algo", "runs",
                "median_conv", "G_median", "G_min", "G_max", "greedy_med");
  out << line;
  for (const auto& algo : order) {
    std::vector<double> g, greedy, conv;
    for (const auto* r : by[algo]) {
      g.push_back(r->final_utility);
      if (!std::isnan(r->greedy_utility)) greedy.push_back(r->greedy_utility);
      if (r->converged_at >= 0) conv.push_back(static_cast<double>(r->converged_at));
    }
    const std::string conv_text = conv.empty() ? "-" : num(median(conv));
    char greedy_text[32] = "-";
    if (!greedy.empty()) std::snprintf(greedy_text, sizeof(greedy_text), "%.4f", median(greedy));
    std::snprintf(line, sizeof(line), "%-10s %5zu %12s %10.4f %10.4f %10.4f %12s\n",
                  algo.c_str(), g.size(), conv_text.c_str(), median(g),
                  *std::min_element(g.begin(), g.end()), *std::max_element(g.begin(), g.end()),
                  greedy_text);
    out << line;
  }
}

MetaRun run_meta(const ExperimentSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  MetaRun out;
  out.random_init =
      approx::init_param_set(spec.world.num_dbs, spec.world.num_clusters(), spec.network, rng);
  Rng meta_rng = rng.split();
  out.meta = meta::meta_train(spec.world, spec.task, out.random_init, spec.meta, meta_rng);
  return out;
}

std::vector<AdaptationRecord> eval_adaptation(const ExperimentSpec& spec) {
  Rng held(spec.eval.held_out_seed);
  std::vector<world::RequestRealization> tasks;
  std::vector<double> g_star;
  sim::EnumerateOptions opts;
  opts.cap = spec.oracle_cap;
  for (int t = 0; t < spec.eval.held_out_tasks; ++t) {
    tasks.push_back(world::sample_realization(spec.world, spec.task, held));
    g_star.push_back(sim::enumerate_optimal(spec.world, tasks.back(), opts).best_utility);
  }

  // Per seed: a random init, the meta init trained from it and the pretrained
  // init built on the first meta tasks.
  struct Inits {
    approx::ParamSet random, meta, pretrain;
  };
  const auto inits = parallel_map<Inits>(spec.seeds.size(), spec.jobs, [&](std::size_t i) {
    const auto run = run_meta(spec, spec.seeds[i]);
    const auto& m = run.meta;
    Inits out;
    out.random = run.random_init;
    out.meta = m.params;
    std::vector<world::RequestRealization> pre(
        m.tasks.begin(),
        m.tasks.begin() + std::min<std::ptrdiff_t>(spec.eval.pretrain_tasks,
                                                   static_cast<std::ptrdiff_t>(m.tasks.size())));
    auto pre_cfg = spec.train;
    pre_cfg.max_iterations = spec.eval.pretrain_iterations;
    Rng pre_rng(Rng::mix(spec.seeds[i] ^ 0x5052455452414e31ULL));
    out.pretrain = baselines::pretrain_init(spec.world, pre, out.random, pre_cfg, pre_rng);
    return out;
  });

  struct Job {
    std::size_t seed_index;
    int task;
    std::string init;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < spec.seeds.size(); ++s)
    for (int t = 0; t < spec.eval.held_out_tasks; ++t)
      for (const char* kind : {"meta", "pretrain", "random"}) jobs.push_back({s, t, kind});

  return parallel_map<AdaptationRecord>(jobs.size(), spec.jobs, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& set = inits[job.seed_index];
    const auto& init = job.init == "meta" ? set.meta : job.init == "pretrain" ? set.pretrain
                                                                              : set.random;
    AdaptationRecord r;
    r.seed = spec.seeds[job.seed_index];
    r.task = job.task;
    r.init = job.init;
    r.g_star = g_star[static_cast<std::size_t>(job.task)];
    auto cfg = spec.train;
    cfg.max_iterations = spec.eval.max_iterations;
    cfg.target_utility = spec.eval.threshold * r.g_star;
    cfg.stop_at_target = true;
    // Paired runs: every init sees the same episode stream on a task.
    Rng rng(Rng::mix(r.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(job.task) + 1));
    r.result = vdrl::train(spec.world, tasks[static_cast<std::size_t>(job.task)], init, cfg, rng);
    r.iterations = r.result.reached_target_at;
    return r;
  });
}

double median_iterations(const std::vector<AdaptationRecord>& records, const std::string& init,
                         long budget) {
  std::vector<double> v;
  for (const auto& r : records) {
    if (r.init != init) continue;
    v.push_back(r.iterations < 0 ? static_cast<double>(budget + 1)
                                 : static_cast<double>(r.iterations));
  }
  return median(v);
}

std::vector<FleetPoint> fleet_sweep(const ExperimentSpec& spec) {
  std::vector<int> sizes = spec.fleet_sizes;
  if (sizes.empty())
    for (std::size_t n = 1; n <= spec.world.altitudes_m.size(); ++n) sizes.push_back(static_cast<int>(n));
  std::vector<std::pair<int, std::uint64_t>> jobs;
  for (int n : sizes)
    for (auto seed : spec.seeds) jobs.emplace_back(n, seed);
  struct Cell {
    double g = 0.0;
    long episodes = 0, home = 0;
  };
  const auto cells = parallel_map<Cell>(jobs.size(), spec.jobs, [&](std::size_t i) {
    ExperimentSpec s = spec;
    s.world.num_dbs = jobs[i].first;
    const auto r = run_training(s, "vdrl", jobs[i].second);
    return Cell{r.final_utility, r.episodes, r.episodes_home};
  });
  std::vector<FleetPoint> out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (out.empty() || out.back().num_dbs != jobs[i].first) out.push_back({jobs[i].first, {}, 0.0});
    out.back().utilities.push_back(cells[i].g);
    out.back().episodes += cells[i].episodes;
    out.back().episodes_home += cells[i].home;
  }
  for (auto& p : out) p.median = median(p.utilities);
  return out;
}

std::vector<std::string> emit_plot_data(const ExperimentSpec& spec, const std::string& kind,
                                        const std::string& dir, std::vector<std::string>* warnings) {
  static const std::set<std::string> kinds{"fig4", "fig5", "fig7", "fig9", "fig10"};
  if (!kinds.count(kind)) throw ConfigError("unknown figure kind '" + kind + "'");
  auto warn = [&](const std::string& w) {
    if (warnings != nullptr) warnings->push_back(w);
  };
  std::vector<std::string> files;
  auto file = [&](const std::string& name) {
    const auto path = (fs::path(dir) / name).string();
    files.push_back(path);
    auto out = open_out(path);
    write_preamble(out, spec);
    return out;
  };
  const auto seed = spec.seeds.front();

  if (kind == "fig4" || kind == "fig5") {
    const auto run = run_training(spec, "vdrl", seed);
    if (run.result.metrics.empty()) warn(kind + ": training produced no metrics");
    if (kind == "fig5") {
      auto out = file("fig5_value_decomposition.csv");
      out << "iteration,G,V0_sum";
      for (int n = 0; n < spec.world.num_dbs; ++n) out << ",V0_" << n;
      for (int n = 0; n < spec.world.num_dbs; ++n) out << ",U_" << n;
      out << '\n';
      for (const auto& m : run.result.metrics) {
        double sum = 0.0;
        for (double v : m.initial_values) sum += v;
        out << m.iteration << ',' << num(m.team_utility) << ',' << num(sum);
        for (double v : m.initial_values) out << ',' << num(v);
        for (double u : m.dbs_utility) out << ',' << num(u);
        out << '\n';
      }
      return files;
    }
    const auto z = realization(spec);
    const auto links = world::make_link_table(spec.world);
    std::vector<const approx::ParamVector*> policies;
    for (const auto& a : run.result.params.agents) policies.push_back(&a.policy);
    const auto ro = sim::greedy_rollout(spec.world, z, links, policies);
    auto out = file("fig4_service_rate.csv");
    out << "dbs,time_s,step,cluster,mu,cumulative_mu\n";
    std::vector<double> cumulative(static_cast<std::size_t>(spec.world.num_dbs), 0.0);
    for (int n = 0; n < spec.world.num_dbs; ++n) out << n << ",0,-1,-1,0,0\n";
    for (const auto& e : ro.outcome.events) {
      cumulative[static_cast<std::size_t>(e.dbs)] += e.mu;
      out << e.dbs << ',' << num(e.time_s) << ',' << e.step << ',' << e.cluster << ','
          << num(e.mu) << ',' << num(cumulative[static_cast<std::size_t>(e.dbs)]) << '\n';
    }
    if (ro.outcome.events.empty()) warn("fig4: the greedy trajectory has no arrivals");
    return files;
  }

  if (kind == "fig7") {
    const auto runs = run_many(spec, {"vdrl", "iac"});
    auto out = file("fig7_learning_curves.csv");
    out << "iteration,vdrl_median_G,iac_median_G\n";
    std::size_t len = 0;
    for (const auto& r : runs) len = std::max(len, r.result.metrics.size());
    if (len == 0) warn("fig7: no iterations were run");
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> v, c;
      for (const auto& r : runs) {
        if (i >= r.result.metrics.size()) continue;
        (r.algo == "vdrl" ? v : c).push_back(r.result.metrics[i].team_utility);
      }
      out << i << ',' << num(median(v)) << ',' << num(median(c)) << '\n';
    }
    return files;
  }

  if (kind == "fig9") {
    const auto records = eval_adaptation(spec);
    auto curves = file("fig9_adaptation_curves.csv");
    curves << "init,seed,task,iteration,G\n";
    for (const auto& r : records)
      for (const auto& m : r.result.metrics)
        curves << r.init << ',' << r.seed << ',' << r.task << ',' << m.iteration << ','
               << num(m.team_utility) << '\n';
    auto summary = file("fig9_iterations_to_threshold.csv");
    summary << "init,seed,task,g_star,iterations\n";
    for (const auto& r : records)
      summary << r.init << ',' << r.seed << ',' << r.task << ',' << num(r.g_star) << ','
              << r.iterations << '\n';
    if (records.empty()) warn("fig9: no adaptation runs");
    return files;
  }

  const auto points = fleet_sweep(spec);
  auto out = file("fig10_fleet_size.csv");
  out << "num_dbs,median_G,min_G,max_G\n";
  for (const auto& p : points) {
    out << p.num_dbs << ',' << num(p.median) << ','
        << num(*std::min_element(p.utilities.begin(), p.utilities.end())) << ','
        << num(*std::max_element(p.utilities.begin(), p.utilities.end())) << '\n';
  }
  if (points.empty()) warn("fig10: no fleet sizes");
  return files;
}

}  // namespace dbsrl::harness
