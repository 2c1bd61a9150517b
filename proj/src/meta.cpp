#include "dbsrl/meta.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "dbsrl/mlp_kernel.hpp"

namespace dbsrl::meta {

using approx::ParamSet;
using approx::ParamVector;
using sim::Experience;
using world::WorldConfig;

void MetaConfig::validate() const {
  if (iterations < 0) throw ConfigError("meta.iterations must be >= 0");
  if (tasks_per_iteration < 1) throw ConfigError("meta.tasks_per_iteration must be >= 1");
  if (!(meta_lr > 0.0) || !std::isfinite(meta_lr)) throw ConfigError("meta.meta_lr must be > 0");
  if (!(inner_value_lr >= 0.0) || !(inner_policy_lr >= 0.0)) {
    throw ConfigError("meta inner step sizes must be >= 0");
  }
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("meta.discount must be in (0, 1]");
  if (policy_loss_sign != 1.0 && policy_loss_sign != -1.0) {
    throw ConfigError("meta.policy_loss_sign must be +1 or -1");
  }
  if (jobs < 1) throw ConfigError("meta.jobs must be >= 1");
}

GradientMode parse_mode(const std::string& s) {
  if (s == "first_order") return GradientMode::FirstOrder;
  if (s == "exact") return GradientMode::Exact;
  throw ConfigError("unknown meta gradient mode '" + s + "'");
}

const char* mode_name(GradientMode m) {
  return m == GradientMode::FirstOrder ? "first_order" : "exact";
}

Adaptation inner_adapt(const ParamSet& init, const WorldConfig& world,
                       const world::RequestRealization& z, const world::LinkTable& links,
                       const MetaConfig& cfg, Rng& rng) {
  Adaptation out;
  out.params = init;
  out.step = vdrl::train_iteration(out.params, world, z, links, cfg.discount, cfg.inner_value_lr,
                                   cfg.inner_policy_lr, false, cfg.reward_scale_by_n, 0, rng);
  return out;
}

TaskLosses meta_losses(const ParamSet& adapted, const WorldConfig& world,
                       const world::RequestRealization& z, const world::LinkTable& links,
                       const MetaConfig& cfg, Rng& rng) {
  std::vector<const ParamVector*> policies;
  std::vector<const ParamVector*> values;
  for (const auto& a : adapted.agents) {
    policies.push_back(&a.policy);
    values.push_back(&a.value);
  }
  TaskLosses out;
  out.rollout = sim::rollout(world, z, links, policies, rng);
  // Unscaled rewards: the per-DBS deltas are exactly the individual advantages.
  const auto adv = vdrl::team_advantage(out.rollout.experiences, values, world, cfg.discount, false);
  const std::size_t N = adapted.agents.size();
  out.deltas = adv.individual;
  out.value_loss.assign(N, 0.0);
  out.policy_loss.assign(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const auto& e = out.rollout.experiences[n];
    for (std::size_t k = 0; k < e.length(); ++k) {
      const double d = out.deltas[n][k];
      out.value_loss[n] += d * d;
      out.policy_loss[n] += cfg.policy_loss_sign * d *
                            approx::log_prob(adapted.agents[n].policy, sim::encode(e.states[k], world),
                                             e.masks[k], e.actions[k]);
    }
  }
  return out;
}

namespace {

// sum_k adv_k grad(g V(s_{k+1}) - V(s_k)) with scalar type T.
template <class T>
std::vector<T> value_grad_t(const approx::MlpShape& shape, std::span<const T> p, const Experience& e,
                            std::span<const double> adv, const WorldConfig& world, double discount) {
  std::vector<T> g(p.size(), T(0.0));
  for (std::size_t k = 0; k < e.length(); ++k) {
    if (adv[k] == 0.0 || sim::is_terminal(e.states[k], world.max_steps)) continue;
    if (!sim::is_terminal(e.states[k + 1], world.max_steps)) {
      approx::kernel::accumulate_grad_value<T>(shape, p, sim::encode(e.states[k + 1], world).features,
                                               T(adv[k] * discount), g);
    }
    approx::kernel::accumulate_grad_value<T>(shape, p, sim::encode(e.states[k], world).features,
                                             T(-adv[k]), g);
  }
  return g;
}

template <class T>
std::vector<T> policy_grad_t(const approx::MlpShape& shape, std::span<const T> p, const Experience& e,
                             std::span<const double> adv, const WorldConfig& world) {
  std::vector<T> g(p.size(), T(0.0));
  for (std::size_t k = 0; k < e.length(); ++k) {
    if (adv[k] == 0.0) continue;
    approx::kernel::accumulate_grad_log_prob<T>(shape, p, sim::encode(e.states[k], world).features,
                                                e.masks[k], e.actions[k], T(adv[k]), g);
  }
  return g;
}

// Directional derivative of a gradient field at theta along v.
template <class F>
std::vector<double> tangent(const ParamVector& theta, const std::vector<double>& v, F&& field) {
  std::vector<Dual> p(theta.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = Dual(theta.values[i], v[i]);
  const auto g = field(std::span<const Dual>(p));
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].d;
  return out;
}

// Gradient of h_k = g V(s_{k+1}) - V(s_k) for one step, as a plain vector.
std::vector<double> step_value_grad(const ParamVector& theta, const Experience& e, std::size_t k,
                                    const WorldConfig& world, double discount) {
  std::vector<double> adv(e.length(), 0.0);
  adv[k] = 1.0;
  return value_grad_t<double>(theta.shape, theta.values, e, adv, world, discount);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_into(ParamSet& acc, const ParamSet& g) {
  for (std::size_t n = 0; n < acc.agents.size(); ++n) {
    auto& a = acc.agents[n];
    const auto& b = g.agents[n];
    for (std::size_t i = 0; i < a.value.size(); ++i) a.value.values[i] += b.value.values[i];
    for (std::size_t i = 0; i < a.policy.size(); ++i) a.policy.values[i] += b.policy.values[i];
  }
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z = p;
  for (auto& a : z.agents) {
    a.value = approx::zero_params(a.value.shape);
    a.policy = approx::zero_params(a.policy.shape);
  }
  return z;
}

world::LinkTable task_links(const WorldConfig& world, Rng& rng) {
  if (world.radio.shadow_mode == world::ShadowMode::SampledPerLinkPerEpisode) {
    Rng link_rng = rng.split();
    return world::make_link_table(world, &link_rng);
  }
  return world::make_link_table(world);
}

}  // namespace

MetaGradient task_gradient(const ParamSet& init, const Adaptation& adapted, const TaskLosses& losses,
                           const WorldConfig& world, const MetaConfig& cfg) {
  const std::size_t N = init.agents.size();
  MetaGradient out;
  out.grad = zeros_like(init);
  for (std::size_t n = 0; n < N; ++n) {
    out.value_loss += losses.value_loss[n];
    out.policy_loss += losses.policy_loss[n];
  }

  // Gradients at the adapted parameters.
  std::vector<std::vector<double>> v_value(N), v_policy(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto& e = losses.rollout.experiences[n];
    const auto& a = adapted.params.agents[n];
    auto gv = value_grad_t<double>(a.value.shape, a.value.values, e, losses.deltas[n], world,
                                   cfg.discount);
    for (auto& x : gv) x *= 2.0;
    std::vector<double> w(losses.deltas[n]);
    for (auto& x : w) x *= cfg.policy_loss_sign;
    v_value[n] = std::move(gv);
    v_policy[n] = policy_grad_t<double>(a.policy.shape, a.policy.values, e, w, world);
  }

  if (cfg.mode == GradientMode::FirstOrder) {
    for (std::size_t n = 0; n < N; ++n) {
      out.grad.agents[n].value.values = v_value[n];
      out.grad.agents[n].policy.values = v_policy[n];
    }
    return out;
  }

  // Exact: pull back through theta' = theta - 2 a_c sum_k A_k grad h_k(theta),
  // where A_k itself depends on every DBS's theta through sum_m h_{m,k}, and
  // through theta_a' = theta_a + a_a sum_k A~_k grad log pi(theta_a).
  const auto& inner = adapted.step;
  const std::size_t K = inner.advantages.team.size();
  const double ac = cfg.inner_value_lr;
  const double aa = cfg.inner_policy_lr;
  std::vector<std::vector<std::vector<double>>> gk(N);  // [n][k] grad h_{n,k} at init
  std::vector<double> c(K, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const auto& e = inner.rollout.experiences[n];
    for (std::size_t k = 0; k < K; ++k) {
      gk[n].push_back(step_value_grad(init.agents[n].value, e, k, world, cfg.discount));
      c[k] += dot(gk[n][k], v_value[n]);
    }
  }
  for (std::size_t n = 0; n < N; ++n) {
    const auto& e = inner.rollout.experiences[n];
    const auto& theta_c = init.agents[n].value;
    const auto hv = tangent(theta_c, v_value[n], [&](std::span<const Dual> p) {
      return value_grad_t<Dual>(theta_c.shape, p, e, inner.advantages.team, world, cfg.discount);
    });
    auto& gv = out.grad.agents[n].value.values;
    gv = v_value[n];
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] -= 2.0 * ac * hv[i];
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] -= 2.0 * ac * c[k] * gk[n][k][i];

    const auto& theta_a = init.agents[n].policy;
    const auto hp = tangent(theta_a, v_policy[n], [&](std::span<const Dual> p) {
      return policy_grad_t<Dual>(theta_a.shape, p, e, inner.advantages.individual[n], world);
    });
    auto& gp = out.grad.agents[n].policy.values;
    gp = v_policy[n];
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += aa * hp[i];
  }
  return out;
}

MetaGradient meta_gradient(const ParamSet& init, const WorldConfig& world,
                           const std::vector<world::RequestRealization>& tasks,
                           const MetaConfig& cfg, std::vector<Rng> rngs) {
  if (rngs.size() != tasks.size()) throw ContractError("one random stream per task");
  std::vector<MetaGradient> per(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  auto run = [&](std::size_t j) {
    try {
      Rng& rng = rngs[j];
      const auto links = task_links(world, rng);
      const auto adapted = inner_adapt(init, world, tasks[j], links, cfg, rng);
      const auto losses = meta_losses(adapted.params, world, tasks[j], links, cfg, rng);
      per[j] = task_gradient(init, adapted, losses, world, cfg);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };
  const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), tasks.size());
  if (jobs <= 1) {
    for (std::size_t j = 0; j < tasks.size(); ++j) run(j);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < tasks.size(); j += jobs) run(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  MetaGradient total;
  total.grad = zeros_like(init);
  for (const auto& g : per) {
    add_into(total.grad, g.grad);
    total.value_loss += g.value_loss;
    total.policy_loss += g.policy_loss;
  }
  return total;
}

ParamSet meta_step(const ParamSet& init, const WorldConfig& world,
                   const std::vector<world::RequestRealization>& tasks, const MetaConfig& cfg,
                   std::vector<Rng> rngs, MetaGradient* out) {
  auto g = meta_gradient(init, world, tasks, cfg, std::move(rngs));
  ParamSet next = init;
  for (std::size_t n = 0; n < next.agents.size(); ++n) {
    auto& a = next.agents[n];
    const auto& d = g.grad.agents[n];
    for (std::size_t i = 0; i < a.value.size(); ++i) a.value.values[i] -= cfg.meta_lr * d.value.values[i];
    for (std::size_t i = 0; i < a.policy.size(); ++i)
      a.policy.values[i] -= cfg.meta_lr * d.policy.values[i];
    for (double v : a.value.values)
      if (!std::isfinite(v)) throw NumericError("non-finite meta update of value parameters");
    for (double v : a.policy.values)
      if (!std::isfinite(v)) throw NumericError("non-finite meta update of policy parameters");
  }
  if (out != nullptr) *out = std::move(g);
  return next;
}

MetaResult meta_train(const WorldConfig& world, const world::TaskDistribution& tasks,
                      const ParamSet& init, const MetaConfig& cfg, Rng& rng) {
  cfg.validate();
  world.validate();
  if (init.agents.size() != static_cast<std::size_t>(world.num_dbs)) {
    throw ConfigError("initial parameters must cover every DBS");
  }
  MetaResult result;
  result.params = init;
  for (long i = 0; i < cfg.iterations; ++i) {
    std::vector<world::RequestRealization> batch;
    std::vector<Rng> rngs;
    for (int j = 0; j < cfg.tasks_per_iteration; ++j) {
      batch.push_back(world::sample_realization(world, tasks, rng));
      rngs.push_back(rng.split());
    }
    MetaGradient g;
    try {
      result.params = meta_step(result.params, world, batch, cfg, std::move(rngs), &g);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at meta iteration " + std::to_string(i));
    }
    result.history.push_back({i, g.value_loss, g.policy_loss});
    for (auto& z : batch) result.tasks.push_back(std::move(z));
  }
  return result;
}

long iterations_to_threshold(const WorldConfig& world, const world::RequestRealization& z,
                             const ParamSet& init, vdrl::TrainConfig cfg, double threshold,
                             Rng& rng) {
  cfg.target_utility = threshold;
  cfg.stop_at_target = true;
  return vdrl::train(world, z, init, cfg, rng).reached_target_at;
}

void write_history_header(std::ostream& out) {
  out << "run_id,algo,seed,iteration,value_loss,policy_loss\n";
}

void write_history(std::ostream& out, const std::string& run_id, std::uint64_t seed,
                   const std::vector<MetaIterationMetrics>& history) {
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g", h.iteration, h.value_loss, h.policy_loss);
    out << run_id << ",meta," << seed << ',' << buf << '\n';
  }
}

}  // namespace dbsrl::meta
