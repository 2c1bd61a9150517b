#include "dbsrl/vdrl.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "dbsrl/mlp_kernel.hpp"

namespace dbsrl::vdrl {

using approx::ParamVector;
using sim::Experience;
using world::WorldConfig;

double StepSchedule::at(long iteration) const {
  return a / std::pow(b + static_cast<double>(iteration), p);
}

void StepSchedule::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("step schedule needs a > 0");
  if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("step schedule needs b > 0");
  if (!(p > 0.5 && p <= 1.0)) throw ConfigError("step schedule exponent must be in (0.5, 1]");
}

void validate_schedule(const std::function<double(long)>& alpha, long horizon) {
  double prev = std::numeric_limits<double>::infinity();
  for (long i = 0; i < horizon; ++i) {
    const double v = alpha(i);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("step size must be positive at iteration " + std::to_string(i));
    }
    if (v > prev) throw ConfigError("step size increases at iteration " + std::to_string(i));
    prev = v;
  }
}

void TrainConfig::validate() const {
  if (max_iterations < 0) throw ConfigError("train.max_iterations must be >= 0");
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("train.discount must be in (0, 1]");
  value_lr.validate();
  policy_lr.validate();
  if (window < 1) throw ConfigError("train.window must be >= 1");
  if (!(tolerance >= 0.0)) throw ConfigError("train.tolerance must be >= 0");
  if (target_window < 1) throw ConfigError("train.target_window must be >= 1");
}

namespace {

void check_lengths(const std::vector<Experience>& ex) {
  for (const auto& e : ex) {
    if (e.actions.size() != ex.front().actions.size() || e.states.size() != e.actions.size() + 1 ||
        e.rewards.size() != e.actions.size() || e.masks.size() != e.actions.size()) {
      throw ContractError("experiences are not aligned to K steps");
    }
  }
}

void check_finite(const ParamVector& p, const char* what, long iteration) {
  for (double v : p.values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite ") + what + " update at iteration " +
                         std::to_string(iteration));
    }
  }
}

}  // namespace

Advantages team_advantage(const std::vector<Experience>& experiences,
                          const std::vector<const ParamVector*>& value_params,
                          const WorldConfig& world, double discount, bool scale_by_n) {
  if (experiences.empty()) throw ContractError("no experiences");
  if (value_params.size() != experiences.size()) {
    throw ContractError("one value network per experience");
  }
  check_lengths(experiences);
  const std::size_t N = experiences.size();
  const std::size_t K = experiences.front().length();
  Advantages adv;
  adv.values.assign(N, std::vector<double>(K + 1, 0.0));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto& s = experiences[n].states[k];
      if (sim::is_terminal(s, world.max_steps)) continue;
      adv.values[n][k] = approx::forward_value(*value_params[n], sim::encode(s, world));
    }
  }
  const double scale = scale_by_n ? static_cast<double>(N) : 1.0;
  adv.team.assign(K, 0.0);
  adv.individual.assign(N, std::vector<double>(K, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    const double r = experiences.front().rewards[k];
    double next_sum = 0.0;
    double cur_sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      if (experiences[n].rewards[k] != r) throw ContractError("team rewards differ across DBSs");
      next_sum += adv.values[n][k + 1];
      cur_sum += adv.values[n][k];
      adv.individual[n][k] = r + discount * adv.values[n][k + 1] - adv.values[n][k];
    }
    adv.team[k] = scale * r + discount * next_sum - cur_sum;
  }
  return adv;
}

std::vector<double> value_gradient(const ParamVector& theta, const Experience& e,
                                   std::span<const double> adv, const WorldConfig& world,
                                   double discount, bool semi_gradient) {
  theta.check();
  const std::size_t K = e.length();
  if (adv.size() != K) throw ContractError("advantage list length differs from the experience");
  std::vector<double> g(theta.size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    if (adv[k] == 0.0 || sim::is_terminal(e.states[k], world.max_steps)) continue;
    if (!semi_gradient && !sim::is_terminal(e.states[k + 1], world.max_steps)) {
      approx::kernel::accumulate_grad_value<double>(
          theta.shape, theta.values, sim::encode(e.states[k + 1], world).features,
          adv[k] * discount, g);
    }
    approx::kernel::accumulate_grad_value<double>(
        theta.shape, theta.values, sim::encode(e.states[k], world).features, -adv[k], g);
  }
  return g;
}

std::vector<double> policy_gradient(const ParamVector& theta, const Experience& e,
                                    std::span<const double> adv, const WorldConfig& world) {
  theta.check();
  const std::size_t K = e.length();
  if (adv.size() != K) throw ContractError("advantage list length differs from the experience");
  std::vector<double> g(theta.size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    if (adv[k] == 0.0) continue;
    const auto& mask = e.masks[k];
    const int a = e.actions[k];
    if (a < 0 || a >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(a)]) {
      throw DomainError("recorded action outside its mask");
    }
    approx::kernel::accumulate_grad_log_prob<double>(
        theta.shape, theta.values, sim::encode(e.states[k], world).features, mask, a, adv[k], g);
  }
  return g;
}

ParamVector value_step(const ParamVector& theta, const Experience& e,
                       std::span<const double> team_adv, double alpha, const WorldConfig& world,
                       double discount, bool semi_gradient, long iteration) {
  const auto g = value_gradient(theta, e, team_adv, world, discount, semi_gradient);
  ParamVector out = theta;
  for (std::size_t i = 0; i < g.size(); ++i) out.values[i] -= 2.0 * alpha * g[i];
  check_finite(out, "value", iteration);
  return out;
}

ParamVector policy_step(const ParamVector& theta, const Experience& e,
                        std::span<const double> own_adv, double alpha, const WorldConfig& world,
                        long iteration) {
  const auto g = policy_gradient(theta, e, own_adv, world);
  ParamVector out = theta;
  for (std::size_t i = 0; i < g.size(); ++i) out.values[i] += alpha * g[i];
  check_finite(out, "policy", iteration);
  return out;
}

StepOutput train_iteration(approx::ParamSet& params, const WorldConfig& world,
                           const world::RequestRealization& z, const world::LinkTable& links,
                           double discount, double value_alpha, double policy_alpha,
                           bool semi_gradient, bool scale_by_n, long iteration, Rng& rng,
                           const UpdateObserver& observer) {
  std::vector<const ParamVector*> policies;
  std::vector<const ParamVector*> values;
  for (const auto& a : params.agents) {
    policies.push_back(&a.policy);
    values.push_back(&a.value);
  }
  StepOutput out;
  out.rollout = sim::rollout(world, z, links, policies, rng);
  out.advantages = team_advantage(out.rollout.experiences, values, world, discount, scale_by_n);
  for (std::size_t n = 0; n < params.agents.size(); ++n) {
    const auto& e = out.rollout.experiences[n];
    if (observer) {
      observer(UpdateCall{static_cast<int>(n), iteration, &e, out.advantages.team,
                          out.advantages.individual[n]});
    }
    auto& agent = params.agents[n];
    agent.value = value_step(agent.value, e, out.advantages.team, value_alpha, world, discount,
                             semi_gradient, iteration);
    agent.policy =
        policy_step(agent.policy, e, out.advantages.individual[n], policy_alpha, world, iteration);
  }
  return out;
}

namespace {

double mean_entropy(const approx::ParamSet& params, const std::vector<Experience>& ex,
                    const WorldConfig& world) {
  double total = 0.0;
  int count = 0;
  for (std::size_t n = 0; n < ex.size(); ++n) {
    const auto& policy = params.agents[params.agents.size() == 1 ? 0 : n].policy;
    for (std::size_t k = 0; k < ex[n].length(); ++k) {
      const auto probs = approx::forward_policy(policy, sim::encode(ex[n].states[k], world),
                                                ex[n].masks[k]);
      total += approx::entropy(probs);
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

}  // namespace

double trailing_mean(const std::vector<IterationMetrics>& m, std::size_t window) {
  if (m.empty() || window == 0) return 0.0;
  const std::size_t w = std::min(window, m.size());
  double s = 0.0;
  for (std::size_t i = m.size() - w; i < m.size(); ++i) s += m[i].team_utility;
  return s / static_cast<double>(w);
}

TrainResult train(const WorldConfig& world, const world::RequestRealization& z,
                  const approx::ParamSet& init, const TrainConfig& cfg, Rng& rng,
                  const UpdateObserver& observer) {
  if (init.agents.size() != static_cast<std::size_t>(world.num_dbs)) {
    throw ConfigError("initial parameters must cover every DBS");
  }
  return run_training(world, z, init, cfg, rng,
                      [&](approx::ParamSet& params, const world::RequestRealization& current,
                          const world::LinkTable& links, double value_alpha, double policy_alpha,
                          long iteration, Rng& r) {
                        return train_iteration(params, world, current, links, cfg.discount,
                                               value_alpha, policy_alpha, cfg.semi_gradient,
                                               cfg.reward_scale_by_n, iteration, r, observer);
                      });
}

TrainResult run_training(const WorldConfig& world, const world::RequestRealization& z,
                         const approx::ParamSet& init, const TrainConfig& cfg, Rng& rng,
                         const IterationFn& step_fn) {
  cfg.validate();
  world.validate();
  TrainResult result;
  result.params = init;
  const bool sampled = world.radio.shadow_mode == world::ShadowMode::SampledPerLinkPerEpisode;
  world::LinkTable fixed_links;
  if (!sampled) fixed_links = world::make_link_table(world);
  world::RequestRealization current = z;
  const auto w = static_cast<std::size_t>(cfg.window);
  const bool greedy_target = cfg.target_utility > 0.0 && cfg.target_greedy;
  std::vector<IterationMetrics> greedy_track;

  for (long i = 0; i < cfg.max_iterations; ++i) {
    if (cfg.resample) current = world::sample_realization(world, *cfg.resample, rng);
    world::LinkTable episode_links;
    if (sampled) {
      Rng link_rng = rng.split();
      episode_links = world::make_link_table(world, &link_rng);
    }
    const auto& links = sampled ? episode_links : fixed_links;
    const approx::ParamSet before = result.params;
    auto step = step_fn(result.params, current, links, cfg.value_lr.at(i), cfg.policy_lr.at(i), i, rng);

    const auto& outcome = step.rollout.outcome;
    ++result.episodes;
    if (outcome.returned_home()) ++result.episodes_home;

    IterationMetrics m;
    m.iteration = i;
    m.team_utility = outcome.team_utility;
    for (double r : outcome.rewards) m.reward_sum += r;
    for (const auto& v : step.advantages.values) m.initial_values.push_back(v.front());
    for (double a : step.advantages.team) m.advantage_l2 += a * a;
    m.advantage_l2 = std::sqrt(m.advantage_l2);
    m.entropy = mean_entropy(before, step.rollout.experiences, world);
    for (const auto& row : outcome.mu) {
      double u = 0.0;
      for (double x : row) u += x;
      m.dbs_utility.push_back(u);
    }
    result.metrics.push_back(std::move(m));

    const std::size_t done = result.metrics.size();
    if (!result.converged && done >= 2 * w) {
      double recent = 0.0;
      double earlier = 0.0;
      for (std::size_t j = done - w; j < done; ++j) recent += result.metrics[j].team_utility;
      for (std::size_t j = done - 2 * w; j < done - w; ++j) earlier += result.metrics[j].team_utility;
      if (std::abs(recent - earlier) / static_cast<double>(w) < cfg.tolerance) {
        result.converged = true;
        result.converged_at = i + 1;
      }
    }
    if (greedy_target) {
      IterationMetrics g;
      g.team_utility = greedy_utility(world, current, result.params);
      greedy_track.push_back(g);
    }
    const auto& tracked = greedy_target ? greedy_track : result.metrics;
    if (cfg.target_utility > 0.0 && result.reached_target_at < 0 &&
        done >= static_cast<std::size_t>(cfg.target_window) &&
        trailing_mean(tracked, static_cast<std::size_t>(cfg.target_window)) >=
            cfg.target_utility) {
      result.reached_target_at = i + 1;
    }
    if (cfg.stop_on_convergence && result.converged) break;
    if (cfg.stop_at_target && result.reached_target_at >= 0) break;
  }
  result.final_utility = trailing_mean(result.metrics, w);
  return result;
}

double greedy_utility(const WorldConfig& world, const world::RequestRealization& z,
                      const approx::ParamSet& params) {
  std::vector<const ParamVector*> policies;
  for (const auto& a : params.agents) policies.push_back(&a.policy);
  WorldConfig mean_world = world;
  mean_world.radio.shadow_mode = world::ShadowMode::MeanOnly;
  return sim::greedy_rollout(world, z, world::make_link_table(mean_world), policies)
      .outcome.team_utility;
}

void write_metrics_header(std::ostream& out, int num_dbs) {
  out << "run_id,algo,seed,iteration,G,r_sum,adv_l2,entropy";
  for (int n = 0; n < num_dbs; ++n) out << ",V0_" << n;
  for (int n = 0; n < num_dbs; ++n) out << ",U_" << n;
  out << '\n';
}

void write_metrics_rows(std::ostream& out, const std::string& run_id, const std::string& algo,
                        std::uint64_t seed, const std::vector<IterationMetrics>& metrics) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& m : metrics) {
    out << run_id << ',' << algo << ',' << seed << ',' << m.iteration << ',' << num(m.team_utility)
        << ',' << num(m.reward_sum) << ',' << num(m.advantage_l2) << ',' << num(m.entropy);
    for (double v : m.initial_values) out << ',' << num(v);
    for (double u : m.dbs_utility) out << ',' << num(u);
    out << '\n';
  }
}

}  // namespace dbsrl::vdrl
