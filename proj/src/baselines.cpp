#include "dbsrl/baselines.hpp"

#include <cmath>

namespace dbsrl::baselines {

using approx::ParamSet;
using approx::ParamVector;

const char* kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::IAC: return "iac";
    case BaselineKind::PretrainedVDRL: return "pretrain";
    case BaselineKind::RandomInitVDRL: return "vdrl";
  }
  return "?";
}

BaselineKind parse_kind(const std::string& s) {
  if (s == "iac") return BaselineKind::IAC;
  if (s == "pretrain") return BaselineKind::PretrainedVDRL;
  if (s == "vdrl") return BaselineKind::RandomInitVDRL;
  throw ConfigError("unknown baseline '" + s + "'");
}

ParamSet init_shared(int num_clusters, const approx::NetworkConfig& net, Rng& rng) {
  return approx::init_param_set(1, num_clusters, net, rng);
}

vdrl::StepOutput iac_iteration(ParamSet& shared, const world::WorldConfig& world,
                               const world::RequestRealization& z, const world::LinkTable& links,
                               double discount, double value_alpha, double policy_alpha,
                               bool semi_gradient, long iteration, Rng& rng) {
  if (shared.agents.size() != 1) throw ContractError("IAC keeps one shared parameter pair");
  auto& theta = shared.agents.front();
  vdrl::StepOutput out;
  out.rollout = sim::rollout(world, z, links, {&theta.policy}, rng);
  const auto& outcome = out.rollout.outcome;
  const std::size_t N = out.rollout.experiences.size();

  // Each DBS sees its own service rate as its reward.
  std::vector<sim::Experience> own = out.rollout.experiences;
  for (std::size_t n = 0; n < N; ++n) own[n].rewards = outcome.mu[n];

  auto& adv = out.advantages;
  adv.team.assign(own.front().length(), 0.0);
  adv.individual.assign(N, {});
  adv.values.assign(N, {});
  std::vector<double> gv(theta.value.size(), 0.0);
  std::vector<double> gp(theta.policy.size(), 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const auto single = vdrl::team_advantage({own[n]}, {&theta.value}, world, discount, false);
    adv.individual[n] = single.individual[0];
    adv.values[n] = single.values[0];
    for (std::size_t k = 0; k < adv.team.size(); ++k) adv.team[k] += single.team[k];
    const auto v = vdrl::value_gradient(theta.value, own[n], single.individual[0], world, discount,
                                        semi_gradient);
    const auto p = vdrl::policy_gradient(theta.policy, own[n], single.individual[0], world);
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += v[i];
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += p[i];
  }
  for (std::size_t i = 0; i < gv.size(); ++i) theta.value.values[i] -= 2.0 * value_alpha * gv[i];
  for (std::size_t i = 0; i < gp.size(); ++i) theta.policy.values[i] += policy_alpha * gp[i];
  for (double x : theta.value.values)
    if (!std::isfinite(x))
      throw NumericError("non-finite value update at iteration " + std::to_string(iteration));
  for (double x : theta.policy.values)
    if (!std::isfinite(x))
      throw NumericError("non-finite policy update at iteration " + std::to_string(iteration));
  return out;
}

vdrl::TrainResult iac_train(const world::WorldConfig& world, const world::RequestRealization& z,
                            const ParamSet& init, const vdrl::TrainConfig& cfg, Rng& rng) {
  if (init.agents.size() != 1) throw ConfigError("IAC needs exactly one shared parameter pair");
  return vdrl::run_training(world, z, init, cfg, rng,
                            [&](ParamSet& params, const world::RequestRealization& current,
                                const world::LinkTable& links, double value_alpha,
                                double policy_alpha, long iteration, Rng& r) {
                              return iac_iteration(params, world, current, links, cfg.discount,
                                                   value_alpha, policy_alpha, cfg.semi_gradient,
                                                   iteration, r);
                            });
}

ParamSet pretrain_init(const world::WorldConfig& world,
                       const std::vector<world::RequestRealization>& tasks, const ParamSet& init,
                       const vdrl::TrainConfig& cfg, Rng& rng) {
  ParamSet params = init;
  for (const auto& z : tasks) params = vdrl::train(world, z, params, cfg, rng).params;
  return params;
}

}  // namespace dbsrl::baselines
