// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "dbsrl/baselines.hpp"
#include "dbsrl/harness.hpp"
#include "dbsrl/presets.hpp"
#include "dbsrl/sim.hpp"

using namespace dbsrl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Feasibility tally over every training episode run below.
struct Feasibility {
  long episodes = 0;
  long home = 0;
  void add(const vdrl::TrainResult& r) {
    episodes += r.episodes;
    home += r.episodes_home;
  }
} feasibility;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

harness::ExperimentSpec spec_with(const std::string& preset, const std::vector<std::string>& overrides) {
  auto j = harness::default_spec_json(preset);
  for (const auto& o : overrides) harness::apply_override(j, o);
  return harness::spec_from_json(j);
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// 1. VD-RL reaches the enumerated optimum on the tiny world.
Verdict oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const auto spec = spec_with("paper-tiny", {});
  const auto z = harness::realization(spec);
  const auto best = sim::enumerate_optimal(spec.world, z);
  const double g_star = best.best_utility;
  int hits = 0;
  std::string reached;
  for (auto seed : spec.seeds) {
    Rng rng(seed);
    const auto init =
        approx::init_param_set(spec.world.num_dbs, spec.world.num_clusters(), spec.network, rng);
    auto cfg = spec.train;
    cfg.target_utility = 0.98 * g_star;
    cfg.target_greedy = true;
    cfg.stop_at_target = true;
    const auto r = vdrl::train(spec.world, z, init, cfg, rng);
    feasibility.add(r);
    const bool hit = r.reached_target_at >= 0;
    hits += hit;
    reached += hit ? fmt(" %ld", r.reached_target_at) : std::string(" -");
  }
  const double secs = elapsed_s(start);
  const bool pass = hits >= 8 && secs < 300.0 && best.evaluated <= 4096;
  return {pass, fmt("%d/10 seeds within 2%% of G*=%.4f (%llu trajectories enumerated), "
                    "iterations:%s, %.0f s",
                    hits, g_star, static_cast<unsigned long long>(best.evaluated), reached.c_str(),
                    secs)};
}

// Random parameters and experiences from rollouts on a tiny world variant.
struct Draw {
  world::WorldConfig world;
  approx::ParamSet params;
  std::vector<sim::Experience> experiences;
};

Draw random_draw(Rng& rng) {
  Draw d;
  auto p = presets::paper_tiny();
  d.world = p.world;
  d.world.num_dbs = 1 + static_cast<int>(rng.next() % 2);
  d.world.max_steps = 1 + static_cast<int>(rng.next() % 3);
  approx::NetworkConfig net;
  net.hidden.assign(1 + rng.next() % 2, 2 + rng.next() % 6);
  d.params = approx::init_param_set(d.world.num_dbs, d.world.num_clusters(), net, rng);
  const auto z = world::sample_realization(d.world, p.task, rng);
  d.experiences = sim::rollout(d.world, z, d.params, rng).experiences;
  return d;
}

// 2. Sum of individual advantages equals the team advantage.
Verdict decomposition_identity() {
  Rng rng(2);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto d = random_draw(rng);
    std::vector<const approx::ParamVector*> values;
    for (const auto& a : d.params.agents) values.push_back(&a.value);
    const double gamma = rng.uniform(0.0, 1.0);
    const auto adv = vdrl::team_advantage(d.experiences, values, d.world, gamma, true);
    for (std::size_t k = 0; k < adv.team.size(); ++k) {
      double sum = 0.0;
      for (const auto& ind : adv.individual) sum += ind[k];
      worst = std::max(worst, std::abs(sum - adv.team[k]));
    }
  }
  return {worst <= 1e-12, fmt("max |sum_n A~ - A| = %.3g over 1000 draws", worst)};
}

// One cluster, two DBSs and one-unit hidden layers: 8 policy and 6 value
// parameters per DBS.
struct Toy {
  world::WorldConfig world;
  world::RequestRealization z;
  Toy() {
    world = presets::make_world({{300.0, 0.0}}, {6}, 40.0, 21);
    world.num_dbs = 2;
    world.altitudes_m = {100.0, 120.0};
    world.period_s = 60.0;
    world.max_steps = 2;
    world::TaskDistribution task;
    task.p_active = 1.0;
    task.bits_min = 1e7;
    task.bits_max = 5e7;
    task.t_max_s = 20.0;
    Rng zr(5);
    z = world::sample_realization(world, task, zr);
  }
};

// 3. Analytic gradients against central differences.
Verdict gradient_correctness() {
  Rng rng(3);
  double worst_policy = 0.0;
  double worst_value = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto d = random_draw(rng);
    const auto& e = d.experiences[rng.next() % d.experiences.size()];
    const std::size_t k = rng.next() % e.length();
    const auto enc = sim::encode(e.states[k], d.world);
    const auto& pol = d.params.agents[0].policy;
    const auto& val = d.params.agents[0].value;
    const int a = e.actions[k];
    const auto gp = approx::grad_log_prob(pol, enc, e.masks[k], a);
    worst_policy = std::max(worst_policy, approx::finite_diff_check(
                                              [&](std::span<const double> x) {
                                                approx::ParamVector q{pol.shape, {x.begin(), x.end()}};
                                                return approx::log_prob(q, enc, e.masks[k], a);
                                              },
                                              pol.values, gp));
    const auto gv = approx::grad_value(val, enc);
    worst_value = std::max(worst_value, approx::finite_diff_check(
                                            [&](std::span<const double> x) {
                                              approx::ParamVector q{val.shape, {x.begin(), x.end()}};
                                              return approx::forward_value(q, enc);
                                            },
                                            val.values, gv));
  }

  Toy toy;
  meta::MetaConfig cfg;
  cfg.mode = meta::GradientMode::Exact;
  cfg.inner_value_lr = 0.3;
  cfg.inner_policy_lr = 0.4;
  cfg.discount = 0.9;
  cfg.tasks_per_iteration = 1;
  double worst_meta = 0.0;
  std::size_t params_per_dbs = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng init_rng(seed);
    approx::NetworkConfig net;
    net.hidden = {1};
    const auto init = approx::init_param_set(2, 1, net, init_rng);
    params_per_dbs = init.agents[0].policy.size() + init.agents[0].value.size();
    const std::vector<world::RequestRealization> tasks{toy.z};
    const std::vector<Rng> rngs{Rng(40 + seed)};
    const auto exact = meta::meta_gradient(init, toy.world, tasks, cfg, rngs);
    for (std::size_t n = 0; n < 2; ++n) {
      for (bool value_part : {true, false}) {
        const auto& theta = value_part ? init.agents[n].value : init.agents[n].policy;
        auto fn = [&](std::span<const double> x) {
          approx::ParamSet p = init;
          auto& target = value_part ? p.agents[n].value : p.agents[n].policy;
          target.values.assign(x.begin(), x.end());
          const auto g = meta::meta_gradient(p, toy.world, tasks, cfg, rngs);
          return value_part ? g.value_loss : g.policy_loss;
        };
        const auto& grad = value_part ? exact.grad.agents[n].value.values
                                      : exact.grad.agents[n].policy.values;
        worst_meta = std::max(worst_meta, approx::finite_diff_check(fn, theta.values, grad, 1e-5));
      }
    }
  }
  const bool pass = worst_policy < 1e-5 && worst_value < 1e-5 && worst_meta < 1e-4;
  return {pass, fmt("grad log pi %.2g, grad V %.2g over 100 draws; exact meta-gradient %.2g "
                    "(%zu parameters per DBS, 5 inits)",
                    worst_policy, worst_value, worst_meta, params_per_dbs)};
}

// 4. Window partition, reward bookkeeping and single service on random episodes.
Verdict episode_semantics() {
  Rng rng(4);
  long window_faults = 0, sum_faults = 0, double_served = 0, inactive_served = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int C = 1 + static_cast<int>(rng.next() % 4);
    const int N = 1 + static_cast<int>(rng.next() % 3);
    std::vector<world::Point> centers;
    std::vector<int> sizes;
    for (int c = 0; c < C; ++c) {
      centers.push_back({rng.uniform(-800, 800), rng.uniform(-800, 800)});
      sizes.push_back(1 + static_cast<int>(rng.next() % 6));
    }
    auto w = presets::make_world(centers, sizes, 40.0, rng.next());
    w.num_dbs = N;
    w.altitudes_m.clear();
    for (int n = 0; n < N; ++n) w.altitudes_m.push_back(80.0 + 25.0 * n);
    w.period_s = rng.uniform(40.0, 200.0);
    w.max_steps = 1 + static_cast<int>(rng.next() % 4);
    world::TaskDistribution task;
    task.t_max_s = rng.uniform(0.0, w.period_s);
    task.bits_max = 4e8;
    const auto z = world::sample_realization(w, task, rng);
    const auto links = world::make_link_table(w);
    Rng pick = rng.split();
    const auto out = sim::simulate(w, z, links, [&](int, const sim::DbsState&, const approx::ActionMask& mask) {
      std::vector<int> options;
      for (std::size_t a = 0; a < mask.size(); ++a)
        if (mask[a]) options.push_back(static_cast<int>(a));
      return options[pick.next() % options.size()];
    });
    if (!out) {
      ++window_faults;
      continue;
    }
    std::vector<double> last_hi(static_cast<std::size_t>(C), -1.0);
    for (const auto& ev : out->events) {
      auto& hi = last_hi[static_cast<std::size_t>(ev.cluster)];
      const bool ok = hi < 0.0 ? (ev.first_at_cluster && ev.window_lo_s == 0.0)
                               : (!ev.first_at_cluster && ev.window_lo_s == hi);
      window_faults += !ok || ev.window_hi_s < ev.window_lo_s;
      hi = ev.window_hi_s;
    }
    double sum_r = 0.0;
    for (double r : out->rewards) sum_r += r;
    sum_faults += sum_r != out->team_utility;
    std::set<int> seen;
    for (const auto& per_dbs : out->served)
      for (const auto& s : per_dbs)
        for (int u : s) {
          double_served += !seen.insert(u).second;
          inactive_served += !z.active(u);
        }
    feasibility.episodes += 1;
    feasibility.home += out->returned_home();
  }
  const bool pass = window_faults == 0 && sum_faults == 0 && double_served == 0 && inactive_served == 0;
  return {pass, fmt("10000 episodes: %ld window gaps/overlaps, %ld sum(r) != G, %ld double-served, "
                    "%ld inactive served",
                    window_faults, sum_faults, double_served, inactive_served)};
}

// 5. VD-RL against independent actor-critic on the symmetric world.
Verdict vdrl_vs_iac() {
  const auto spec = spec_with("coordination", {});
  std::vector<double> vd, iac;
  const auto z = harness::realization(spec);
  for (auto seed : spec.seeds) {
    const auto a = harness::run_training(spec, "vdrl", seed);
    const auto b = harness::run_training(spec, "iac", seed);
    feasibility.add(a.result);
    feasibility.add(b.result);
    vd.push_back(a.final_utility);
    iac.push_back(b.final_utility);
  }
  const double mv = harness::median(vd);
  const double mi = harness::median(iac);
  const double gap = (mv - mi) / mi;
  return {mv > mi && gap >= 0.10,
          fmt("median final G over 10 seeds: VD-RL %.4f, IAC %.4f, gap %.1f%%", mv, mi, 100 * gap)};
}

// 6. Meta-trained initialization adapts faster than random and pretrained ones.
Verdict meta_speedup() {
  const auto spec = spec_with("paper-tiny", {
                                                "seeds=[1,2,3,4,5]",
                                                "eval.held_out_tasks=5",
                                                "train.target_greedy=true",
                                                "meta.policy_loss_sign=-1",
                                                "task.t_max_s=20",
                                                "meta.iterations=100",
                                                "meta.meta_lr=0.05",
                                                "eval.pretrain_iterations=200",
                                            });
  const auto records = harness::eval_adaptation(spec);
  for (const auto& r : records) feasibility.add(r.result);
  const long budget = spec.eval.max_iterations;
  const double m = harness::median_iterations(records, "meta", budget);
  const double p = harness::median_iterations(records, "pretrain", budget);
  const double r = harness::median_iterations(records, "random", budget);
  auto reached = [&](const char* init) {
    int c = 0;
    for (const auto& rec : records) c += rec.init == init && rec.iterations >= 0;
    return c;
  };
  const double speedup = 1.0 - m / r;
  const bool pass = speedup >= 0.30 && m <= p && p <= r;
  return {pass, fmt("median iterations to 95%% G* (budget %ld, censored = %ld): meta %.0f (%d/25 "
                    "reached), pretrain %.0f (%d/25), random %.0f (%d/25); meta %.1f%% faster",
                    budget, budget + 1, m, reached("meta"), p, reached("pretrain"), r,
                    reached("random"), 100 * speedup)};
}

// 7. Coverage grows with the fleet, with shrinking gains. Run without the N
// factor on the team reward; with it, G falls as N grows (see README).
Verdict fleet_monotonicity() {
  const auto spec =
      spec_with("paper-like", {"train.max_iterations=10000", "train.reward_scale_by_n=false"});
  const auto points = harness::fleet_sweep(spec);
  for (const auto& p : points) {
    feasibility.episodes += p.episodes;
    feasibility.home += p.episodes_home;
  }
  bool monotone = true;
  bool diminishing = true;
  std::string series;
  for (std::size_t i = 0; i < points.size(); ++i) {
    series += fmt(" N=%d:%.4f", points[i].num_dbs, points[i].median);
    if (i >= 1 && points[i].median < points[i - 1].median) monotone = false;
    if (i >= 2) {
      const double prev = points[i - 1].median - points[i - 2].median;
      const double cur = points[i].median - points[i - 1].median;
      if (cur > prev + 0.02) diminishing = false;
    }
  }
  return {monotone && diminishing && points.size() == 5,
          fmt("median final G%s; nondecreasing %s, increments shrinking within 0.02 %s",
              series.c_str(), monotone ? "yes" : "no", diminishing ? "yes" : "no")};
}

// 8. Same spec and seed give the same bytes.
Verdict determinism() {
  std::string first;
  bool same = true;
  std::size_t bytes = 0;
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = fs::temp_directory_path() / ("dbsrl-acceptance-det-" + std::to_string(rep));
    fs::remove_all(dir);
    auto spec = spec_with("paper-tiny", {"train.max_iterations=500", "seeds=[3]", "out=" + dir.string()});
    if (rep == 1) spec.jobs = 2;
    const auto runs = harness::run_many(spec, {"vdrl", "iac"});
    for (const auto& r : runs) feasibility.add(r.result);
    harness::emit_plot_data(spec, "fig4", (dir / "plots").string());
    std::string all;
    for (const char* rel : {"vdrl/seed-3/metrics.csv", "iac/seed-3/metrics.csv", "plots/fig4_service_rate.csv"}) {
      std::ifstream in(dir / rel);
      std::stringstream ss;
      ss << in.rdbuf();
      all += ss.str();
    }
    bytes = all.size();
    if (rep == 0) first = all;
    else same = all == first;
    fs::remove_all(dir);
  }
  return {same && bytes > 0, fmt("two runs (1 and 2 worker threads): %zu bytes of CSV, %s", bytes,
                                 same ? "identical" : "different")};
}

}  // namespace

int main() {
  struct Item {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Item> items{
      {1, "oracle equivalence", oracle_equivalence},
      {2, "decomposition identity", decomposition_identity},
      {3, "gradient correctness", gradient_correctness},
      {4, "episode semantics", episode_semantics},
      {5, "VD-RL vs IAC", vdrl_vs_iac},
      {6, "meta adaptation speedup", meta_speedup},
      {7, "fleet-size monotonicity", fleet_monotonicity},
      {8, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& item : items) {
    Verdict v;
    try {
      v = item.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[%s] %d %s: %s\n", v.pass ? "PASS" : "FAIL", item.id, item.name, v.detail.c_str());
    std::fflush(stdout);
  }
  const bool feasible = feasibility.episodes > 0 && feasibility.home == feasibility.episodes;
  failed += !feasible;
  std::printf("[%s] 9 feasibility: %ld of %ld episodes ended at the origin with nonnegative budget\n",
              feasible ? "PASS" : "FAIL", feasibility.home, feasibility.episodes);
  return failed == 0 ? 0 : 1;
}
