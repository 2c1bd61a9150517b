#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dbsrl/baselines.hpp"
#include "dbsrl/presets.hpp"

using namespace dbsrl;

namespace {

world::RequestRealization realize(const presets::Preset& p) {
  Rng zr(p.realization_seed);
  return world::sample_realization(p.world, p.task, zr);
}

}  // namespace

TEST_CASE("kinds") {
  CHECK(baselines::parse_kind("iac") == baselines::BaselineKind::IAC);
  CHECK(std::string(baselines::kind_name(baselines::BaselineKind::PretrainedVDRL)) == "pretrain");
  CHECK_THROWS_AS(baselines::parse_kind("qmix"), ConfigError);
}

TEST_CASE("single DBS: IAC and VD-RL coincide") {
  auto p = presets::paper_tiny();
  p.world.num_dbs = 1;
  p.world.altitudes_m = {100.0};
  const auto z = realize(p);
  approx::NetworkConfig net;
  net.hidden = {16, 16};
  Rng init_rng(1);
  const auto init = approx::init_param_set(1, 3, net, init_rng);
  vdrl::TrainConfig cfg;
  cfg.max_iterations = 100;
  cfg.value_lr = {0.05, 1.0, 0.6};
  cfg.policy_lr = {0.1, 1.0, 0.6};
  Rng a(3), b(3);
  const auto v = vdrl::train(p.world, z, init, cfg, a);
  const auto i = baselines::iac_train(p.world, z, init, cfg, b);
  CHECK(v.params == i.params);
  for (std::size_t k = 0; k < v.metrics.size(); ++k)
    CHECK(v.metrics[k].team_utility == i.metrics[k].team_utility);
}

TEST_CASE("IAC uses individual rewards and one parameter pair") {
  const auto p = presets::paper_tiny();
  const auto z = realize(p);
  const auto links = world::make_link_table(p.world);
  approx::NetworkConfig net;
  net.hidden = {8, 8};
  Rng init_rng(2);
  auto shared = baselines::init_shared(3, net, init_rng);
  const auto before = shared;
  Rng rng(4);
  const auto step =
      baselines::iac_iteration(shared, p.world, z, links, 0.9, 0.01, 0.02, false, 0, rng);
  REQUIRE(shared.agents.size() == 1);
  CHECK_FALSE(shared == before);

  // Recompute the summed update from individual service rates.
  const auto& out = step.rollout.outcome;
  std::vector<double> gp(before.agents[0].policy.size(), 0.0);
  for (std::size_t n = 0; n < 2; ++n) {
    auto e = step.rollout.experiences[n];
    e.rewards = out.mu[n];
    const auto adv = vdrl::team_advantage({e}, {&before.agents[0].value}, p.world, 0.9, false);
    CHECK(adv.individual[0] == step.advantages.individual[n]);
    const auto g = vdrl::policy_gradient(before.agents[0].policy, e, adv.individual[0], p.world);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[i];
  }
  for (std::size_t i = 0; i < gp.size(); ++i)
    CHECK(shared.agents[0].policy.values[i] ==
          doctest::Approx(before.agents[0].policy.values[i] + 0.02 * gp[i]).epsilon(1e-12));

  vdrl::TrainConfig cfg;
  cfg.max_iterations = 50;
  Rng a(5), b(5);
  const auto ra = baselines::iac_train(p.world, z, before, cfg, a);
  const auto rb = baselines::iac_train(p.world, z, before, cfg, b);
  CHECK(ra.params == rb.params);
  CHECK(ra.params.agents.size() == 1);
  CHECK(ra.episodes_home == 50);

  Rng c(1);
  CHECK_THROWS_AS(baselines::iac_train(p.world, z, approx::init_param_set(2, 3, net, c), cfg, a),
                  ConfigError);
}

TEST_CASE("shared policy cannot split the fleet on the symmetric world") {
  // Both DBSs leave the origin in the same state, so a shared policy sends
  // them to the same cluster whenever its draws agree. Separate VD-RL
  // policies can split deterministically.
  const auto p = presets::coordination();
  const auto z = realize(p);
  const auto links = world::make_link_table(p.world);
  const auto best = sim::enumerate_optimal(p.world, z);
  approx::NetworkConfig net;
  net.hidden = {16, 16};
  vdrl::TrainConfig cfg;
  cfg.max_iterations = 2000;
  cfg.value_lr = {0.05, 1.0, 0.6};
  cfg.policy_lr = {0.5, 1.0, 0.6};
  Rng init_rng(6);
  const auto shared = baselines::init_shared(2, net, init_rng);
  Rng rng(7);
  const auto iac = baselines::iac_train(p.world, z, shared, cfg, rng);
  int same = 0;
  Rng eval(8);
  for (int t = 0; t < 500; ++t) {
    const auto ro = sim::rollout(p.world, z, links, {&iac.params.agents[0].policy}, eval);
    const auto& paths = ro.outcome.trajectory.paths;
    same += paths[0][0] == paths[1][0] && paths[0][0] != sim::kOrigin;
  }
  CHECK(same > 150);
  CHECK(iac.final_utility < 0.9 * best.best_utility);

  Rng vinit(6);
  const auto separate = approx::init_param_set(2, 2, net, vinit);
  Rng vrng(7);
  const auto vd = vdrl::train(p.world, z, separate, cfg, vrng);
  CHECK(vdrl::greedy_utility(p.world, z, vd.params) == best.best_utility);
  CHECK(vd.final_utility > iac.final_utility);
}

TEST_CASE("pretrained initialization") {
  const auto p = presets::paper_tiny();
  approx::NetworkConfig net;
  net.hidden = {8, 8};
  Rng init_rng(9);
  const auto init = approx::init_param_set(2, 3, net, init_rng);
  vdrl::TrainConfig cfg;
  cfg.max_iterations = 30;
  Rng r0(1);
  CHECK(baselines::pretrain_init(p.world, {}, init, cfg, r0) == init);

  const auto z = realize(p);
  Rng a(2), b(2);
  CHECK(baselines::pretrain_init(p.world, {z}, init, cfg, a) ==
        vdrl::train(p.world, z, init, cfg, b).params);

  Rng tr(3);
  const std::vector<world::RequestRealization> tasks{world::sample_realization(p.world, p.task, tr),
                                                     world::sample_realization(p.world, p.task, tr)};
  Rng c(4), d(4);
  const auto first = vdrl::train(p.world, tasks[0], init, cfg, d).params;
  CHECK(baselines::pretrain_init(p.world, tasks, init, cfg, c) ==
        vdrl::train(p.world, tasks[1], first, cfg, d).params);
}
