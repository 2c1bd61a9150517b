#include "dbsrl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace dbsrl::sim {

using world::LinkTable;
using world::Point;
using world::RequestRealization;
using world::WorldConfig;

namespace {

Point where(const WorldConfig& world, int location) {
  return location == kOrigin ? world.origin
                             : world.clusters[static_cast<std::size_t>(location)].center;
}

}  // namespace

approx::StateEncoding encode(const DbsState& s, const WorldConfig& world) {
  return approx::encode_state(slot_of(s.location), world.num_clusters() + 1,
                              s.remaining_time_s / world.period_s);
}

void check_shape(const JointTrajectory& traj, const WorldConfig& world) {
  if (traj.paths.size() != static_cast<std::size_t>(world.num_dbs)) {
    throw ContractError("trajectory must list one path per DBS");
  }
  for (std::size_t n = 0; n < traj.paths.size(); ++n) {
    const auto& path = traj.paths[n];
    if (path.size() != static_cast<std::size_t>(world.max_steps)) {
      throw ContractError("path of DBS " + std::to_string(n) + " must have exactly K entries");
    }
    bool home = false;
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (path[k] < kOrigin || path[k] >= world.num_clusters()) {
        throw ContractError("unknown location at (" + std::to_string(n) + ", " +
                            std::to_string(k) + ")");
      }
      if (home && path[k] != kOrigin) {
        throw ContractError("path of DBS " + std::to_string(n) + " leaves the origin again at step " +
                            std::to_string(k));
      }
      home = home || path[k] == kOrigin;
    }
  }
}

bool EpisodeOutcome::returned_home() const {
  for (std::size_t n = 0; n < final_remaining_s.size(); ++n) {
    if (!(final_remaining_s[n] >= 0.0)) return false;
  }
  return final_remaining_s.size() == static_cast<std::size_t>(num_dbs);
}

approx::ActionMask feasible_actions(const DbsState& state, const WorldConfig& world) {
  approx::ActionMask mask(static_cast<std::size_t>(world.num_clusters()) + 1, false);
  mask[0] = true;
  if (state.step_index >= world.max_steps) return mask;
  if (state.location == kOrigin && state.step_index > 0) return mask;
  const Point here = where(world, state.location);
  for (int c = 0; c < world.num_clusters(); ++c) {
    const Point center = world.clusters[static_cast<std::size_t>(c)].center;
    const double need =
        world.travel_time(here, center) + world.pass_time() + world.travel_time(center, world.origin);
    mask[static_cast<std::size_t>(slot_of(c))] = need <= state.remaining_time_s;
  }
  return mask;
}

std::optional<EpisodeOutcome> simulate(const WorldConfig& world, const RequestRealization& z,
                                       const LinkTable& links, const Chooser& chooser) {
  const int N = world.num_dbs;
  const int K = world.max_steps;
  const double T = world.period_s;
  const auto nN = static_cast<std::size_t>(N);
  const auto nK = static_cast<std::size_t>(K);

  EpisodeOutcome out;
  out.num_dbs = N;
  out.max_steps = K;
  out.active_users = z.active_count();
  out.mu.assign(nN, std::vector<double>(nK, 0.0));
  out.tau.assign(nN, std::vector<double>(nK, 0.0));
  out.served.assign(nN, std::vector<std::vector<int>>(nK));
  out.states.assign(nN, std::vector<DbsState>(nK + 1));
  out.final_remaining_s.assign(nN, 0.0);
  out.trajectory.paths.assign(nN, std::vector<int>(nK, kOrigin));

  struct Runner {
    DbsState state;
    bool pending = false;
    int cluster = 0;
    double arrival_budget = 0.0;
    double arrival_time = 0.0;
  };
  std::vector<Runner> run(nN);

  // Advances DBS n through decisions until it schedules an arrival or finishes.
  auto decide = [&](int n) -> bool {
    auto& r = run[static_cast<std::size_t>(n)];
    auto& path = out.trajectory.paths[static_cast<std::size_t>(n)];
    while (r.state.step_index < K) {
      const auto k = static_cast<std::size_t>(r.state.step_index);
      out.states[static_cast<std::size_t>(n)][k] = r.state;
      const auto mask = feasible_actions(r.state, world);
      const int slot = chooser(n, r.state, mask);
      if (slot < 0 || slot >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(slot)]) {
        return false;
      }
      const int target = location_of(slot);
      path[k] = target;
      const Point here = where(world, r.state.location);
      if (target == kOrigin) {
        const double left =
            std::max(0.0, r.state.remaining_time_s - world.travel_time(here, world.origin));
        out.tau[static_cast<std::size_t>(n)][k] = left;
        r.state = DbsState{kOrigin, left, r.state.step_index + 1};
        continue;
      }
      const Point dest = world.clusters[static_cast<std::size_t>(target)].center;
      r.arrival_budget = r.state.remaining_time_s - world.travel_time(here, dest);
      r.arrival_time = T - r.arrival_budget;
      r.cluster = target;
      r.pending = true;
      return true;
    }
    out.states[static_cast<std::size_t>(n)][nK] = r.state;
    const Point here = where(world, r.state.location);
    out.final_remaining_s[static_cast<std::size_t>(n)] =
        std::max(0.0, r.state.remaining_time_s - world.travel_time(here, world.origin));
    return true;
  };

  for (int n = 0; n < N; ++n) {
    run[static_cast<std::size_t>(n)].state = DbsState{kOrigin, T, 0};
    if (!decide(n)) return std::nullopt;
  }

  const auto owner = world.user_clusters();
  std::vector<std::optional<double>> last_arrival(static_cast<std::size_t>(world.num_clusters()));
  const double inv_active = out.active_users > 0 ? 1.0 / out.active_users : 0.0;
  std::vector<double> delays;

  for (;;) {
    int next = -1;
    for (int n = 0; n < N; ++n) {
      const auto& r = run[static_cast<std::size_t>(n)];
      if (!r.pending) continue;
      if (next < 0 || r.arrival_time < run[static_cast<std::size_t>(next)].arrival_time) next = n;
    }
    if (next < 0) break;
    auto& r = run[static_cast<std::size_t>(next)];
    r.pending = false;
    const int c = r.cluster;
    const auto k = static_cast<std::size_t>(r.state.step_index);
    const auto& cluster = world.clusters[static_cast<std::size_t>(c)];
    const Point center = cluster.center;

    ArrivalEvent ev;
    ev.time_s = r.arrival_time;
    ev.dbs = next;
    ev.step = r.state.step_index;
    ev.cluster = c;
    auto& prev = last_arrival[static_cast<std::size_t>(c)];
    ev.first_at_cluster = !prev.has_value();
    ev.window_lo_s = prev.value_or(0.0);
    ev.window_hi_s = r.arrival_time;

    // Energy cap: the DBS must keep enough budget to fly home.
    const double max_dwell = r.arrival_budget - world.travel_time(center, world.origin);
    auto& served = out.served[static_cast<std::size_t>(next)][k];
    delays.clear();
    for (int u : cluster.users) {
      if (!z.active(u)) continue;
      const double t = z.activate_at[static_cast<std::size_t>(u)];
      const bool in_window = (ev.first_at_cluster ? t >= ev.window_lo_s : t > ev.window_lo_s) &&
                             t <= ev.window_hi_s;
      if (!in_window) continue;
      const double d = world::transmission_delay(z.bits[static_cast<std::size_t>(u)],
                                                 links.rate(next, u));
      if (d > max_dwell) continue;
      served.push_back(u);
      delays.push_back(d);
    }
    prev = r.arrival_time;

    ev.hover_s = world::hover_time(delays, world.speed_mps, world.service_radius_m);
    ev.served = static_cast<int>(served.size());
    ev.mu = ev.served * inv_active;
    out.served_users += ev.served;
    out.mu[static_cast<std::size_t>(next)][k] = ev.mu;
    out.tau[static_cast<std::size_t>(next)][k] = r.arrival_budget;
    out.events.push_back(ev);

    const double leave = r.arrival_budget - world.pass_time() - ev.hover_s;
    r.state = DbsState{c, std::max(0.0, leave), r.state.step_index + 1};
    if (!decide(next)) return std::nullopt;
  }

  out.rewards = team_stage_rewards(out);
  out.team_utility = 0.0;
  for (double rk : out.rewards) out.team_utility += rk;
  return out;
}

EpisodeOutcome run_episode(const WorldConfig& world, const RequestRealization& z,
                           const JointTrajectory& traj, const LinkTable* links) {
  check_shape(traj, world);
  LinkTable own;
  if (links == nullptr) {
    own = world::make_link_table(world);
    links = &own;
  }
  int bad_n = -1;
  int bad_k = -1;
  auto chooser = [&](int n, const DbsState& s, const approx::ActionMask& mask) {
    const int slot = slot_of(traj.paths[static_cast<std::size_t>(n)][static_cast<std::size_t>(s.step_index)]);
    if (!mask[static_cast<std::size_t>(slot)]) {
      bad_n = n;
      bad_k = s.step_index;
    }
    return slot;
  };
  auto out = simulate(world, z, *links, chooser);
  if (!out) {
    throw ContractError("infeasible trajectory at (n=" + std::to_string(bad_n) +
                        ", k=" + std::to_string(bad_k) + ")");
  }
  return std::move(*out);
}

std::vector<double> team_stage_rewards(const EpisodeOutcome& outcome) {
  std::vector<double> r(static_cast<std::size_t>(outcome.max_steps), 0.0);
  for (std::size_t k = 0; k < r.size(); ++k) {
    for (const auto& row : outcome.mu) r[k] += row[k];
  }
  return r;
}

std::vector<Experience> experiences(const EpisodeOutcome& outcome, const WorldConfig& world) {
  std::vector<Experience> all(static_cast<std::size_t>(outcome.num_dbs));
  for (std::size_t n = 0; n < all.size(); ++n) {
    auto& e = all[n];
    e.states = outcome.states[n];
    e.rewards = outcome.rewards;
    for (std::size_t k = 0; k < static_cast<std::size_t>(outcome.max_steps); ++k) {
      e.masks.push_back(feasible_actions(e.states[k], world));
      e.actions.push_back(slot_of(outcome.trajectory.paths[n][k]));
    }
  }
  return all;
}

namespace {

const approx::ParamVector& policy_for(const std::vector<const approx::ParamVector*>& policies,
                                      int n) {
  return *policies[policies.size() == 1 ? 0 : static_cast<std::size_t>(n)];
}

void check_policies(const std::vector<const approx::ParamVector*>& policies,
                    const WorldConfig& world) {
  if (policies.size() != 1 && policies.size() != static_cast<std::size_t>(world.num_dbs)) {
    throw ContractError("rollout needs one policy per DBS or a single shared policy");
  }
}

Rollout finish(std::optional<EpisodeOutcome> out, const WorldConfig& world) {
  if (!out) throw ContractError("policy selected an infeasible action");
  Rollout r;
  r.experiences = experiences(*out, world);
  r.outcome = std::move(*out);
  return r;
}

}  // namespace

Rollout rollout(const WorldConfig& world, const RequestRealization& z, const LinkTable& links,
                const std::vector<const approx::ParamVector*>& policies, Rng& rng) {
  check_policies(policies, world);
  std::vector<Rng> streams;
  for (int n = 0; n < world.num_dbs; ++n) streams.push_back(rng.split());
  auto chooser = [&](int n, const DbsState& s, const approx::ActionMask& mask) {
    const auto probs = approx::forward_policy(policy_for(policies, n), encode(s, world), mask);
    const double u = streams[static_cast<std::size_t>(n)].uniform();
    double acc = 0.0;
    int last = 0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
      if (!mask[a]) continue;
      last = static_cast<int>(a);
      acc += probs[a];
      if (u < acc) return last;
    }
    return last;
  };
  return finish(simulate(world, z, links, chooser), world);
}

Rollout rollout(const WorldConfig& world, const RequestRealization& z,
                const approx::ParamSet& params, Rng& rng) {
  LinkTable links;
  if (world.radio.shadow_mode == world::ShadowMode::SampledPerLinkPerEpisode) {
    Rng link_rng = rng.split();
    links = world::make_link_table(world, &link_rng);
  } else {
    links = world::make_link_table(world);
  }
  std::vector<const approx::ParamVector*> policies;
  for (const auto& a : params.agents) policies.push_back(&a.policy);
  return rollout(world, z, links, policies, rng);
}

Rollout greedy_rollout(const WorldConfig& world, const RequestRealization& z,
                       const LinkTable& links,
                       const std::vector<const approx::ParamVector*>& policies) {
  check_policies(policies, world);
  auto chooser = [&](int n, const DbsState& s, const approx::ActionMask& mask) {
    const auto probs = approx::forward_policy(policy_for(policies, n), encode(s, world), mask);
    int best = -1;
    for (std::size_t a = 0; a < probs.size(); ++a) {
      if (!mask[a]) continue;
      if (best < 0 || probs[a] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
    }
    return best;
  };
  return finish(simulate(world, z, links, chooser), world);
}

// ---------------------------------------------------------------------------
// Brute-force oracle

namespace {

// Absorbing paths that are feasible for a DBS flying alone without hovering.
std::vector<std::vector<int>> candidate_paths(const WorldConfig& world) {
  std::vector<std::vector<int>> paths;
  std::vector<int> cur;
  const int K = world.max_steps;
  std::function<void(const DbsState&)> grow = [&](const DbsState& s) {
    if (static_cast<int>(cur.size()) == K) {
      paths.push_back(cur);
      return;
    }
    const auto mask = feasible_actions(s, world);
    for (std::size_t slot = 0; slot < mask.size(); ++slot) {
      if (!mask[slot]) continue;
      const int loc = location_of(static_cast<int>(slot));
      const Point here = where(world, s.location);
      DbsState next{loc, 0.0, s.step_index + 1};
      if (loc == kOrigin) {
        next.remaining_time_s =
            std::max(0.0, s.remaining_time_s - world.travel_time(here, world.origin));
      } else {
        next.remaining_time_s = s.remaining_time_s - world.travel_time(here, where(world, loc)) -
                                world.pass_time();
      }
      cur.push_back(loc);
      grow(next);
      cur.pop_back();
    }
  };
  grow(DbsState{kOrigin, world.period_s, 0});
  return paths;
}

struct Shard {
  int best = -1;
  std::vector<JointTrajectory> maximizers;
  std::uint64_t evaluated = 0;
};

}  // namespace

OptimalSet enumerate_optimal(const WorldConfig& world, const RequestRealization& z,
                             const EnumerateOptions& opts, const LinkTable* links) {
  const double space = std::pow(static_cast<double>(world.num_clusters() + 1),
                                static_cast<double>(world.num_dbs) * world.max_steps);
  if (space > opts.cap) {
    throw CapExceededError("enumeration needs " + std::to_string(static_cast<long double>(space)) +
                               " joint trajectories, cap is " + std::to_string(opts.cap),
                           space);
  }
  LinkTable own;
  if (links == nullptr) {
    own = world::make_link_table(world);
    links = &own;
  }
  const auto paths = candidate_paths(world);
  const std::size_t P = paths.size();
  const std::size_t N = static_cast<std::size_t>(world.num_dbs);
  const int jobs = std::max(1, opts.jobs);

  auto work = [&](int shard_id, Shard& shard) {
    std::vector<std::size_t> idx(N, 0);
    JointTrajectory traj;
    traj.paths.resize(N);
    for (;;) {
      if (static_cast<int>(idx[0] % static_cast<std::size_t>(jobs)) == shard_id) {
        for (std::size_t n = 0; n < N; ++n) traj.paths[n] = paths[idx[n]];
        auto chooser = [&](int n, const DbsState& s, const approx::ActionMask&) {
          return slot_of(traj.paths[static_cast<std::size_t>(n)][static_cast<std::size_t>(s.step_index)]);
        };
        auto out = simulate(world, z, *links, chooser);
        if (out) {
          ++shard.evaluated;
          if (out->served_users > shard.best) {
            shard.best = out->served_users;
            shard.maximizers.clear();
          }
          if (out->served_users == shard.best) shard.maximizers.push_back(traj);
        }
      }
      std::size_t d = N;
      while (d > 0) {
        --d;
        if (++idx[d] < P) break;
        idx[d] = 0;
        if (d == 0) return;
      }
    }
  };

  std::vector<Shard> shards(static_cast<std::size_t>(jobs));
  if (jobs == 1) {
    work(0, shards[0]);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work, j, std::ref(shards[static_cast<std::size_t>(j)]));
    for (auto& t : pool) t.join();
  }

  OptimalSet result;
  int best = -1;
  for (const auto& s : shards) best = std::max(best, s.best);
  for (auto& s : shards) {
    result.evaluated += s.evaluated;
    if (s.best == best) {
      result.maximizers.insert(result.maximizers.end(), s.maximizers.begin(), s.maximizers.end());
    }
  }
  std::sort(result.maximizers.begin(), result.maximizers.end());
  result.best_served = std::max(best, 0);
  if (!result.maximizers.empty()) {
    result.best_utility = run_episode(world, z, result.maximizers.front(), links).team_utility;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Event log

void write_event_log(std::ostream& out, const EpisodeOutcome& outcome) {
  out << "# dbsrl-events 1\n";
  out << "num_dbs " << outcome.num_dbs << " max_steps " << outcome.max_steps << " active "
      << outcome.active_users << " events " << outcome.events.size() << '\n';
  char buf[160];
  for (const auto& ev : outcome.events) {
    std::snprintf(buf, sizeof(buf), "%.17g %d %d %d %d %.17g\n", ev.time_s, ev.dbs, ev.step,
                  ev.cluster, ev.served, ev.mu);
    out << buf;
  }
}

ReplayedEpisode replay_event_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# dbsrl-events 1") {
    throw ConfigError("event log: missing header");
  }
  std::string key;
  int N = 0;
  int K = 0;
  int active = 0;
  std::size_t count = 0;
  if (!std::getline(in, line)) throw ConfigError("event log: missing dimensions");
  std::istringstream dims(line);
  dims >> key >> N >> key >> K >> key >> active >> key >> count;
  if (!dims || N <= 0 || K <= 0) throw ConfigError("event log: bad dimensions");

  ReplayedEpisode rep;
  rep.mu.assign(static_cast<std::size_t>(N), std::vector<double>(static_cast<std::size_t>(K), 0.0));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ConfigError("event log: truncated");
    ArrivalEvent ev;
    if (std::sscanf(line.c_str(), "%lf %d %d %d %d %lf", &ev.time_s, &ev.dbs, &ev.step, &ev.cluster,
                    &ev.served, &ev.mu) != 6) {
      throw ConfigError("event log: malformed line '" + line + "'");
    }
    if (ev.dbs < 0 || ev.dbs >= N || ev.step < 0 || ev.step >= K) {
      throw ConfigError("event log: event out of range");
    }
    rep.mu[static_cast<std::size_t>(ev.dbs)][static_cast<std::size_t>(ev.step)] = ev.mu;
    rep.events.push_back(ev);
  }
  rep.rewards.assign(static_cast<std::size_t>(K), 0.0);
  for (std::size_t k = 0; k < rep.rewards.size(); ++k) {
    for (const auto& row : rep.mu) rep.rewards[k] += row[k];
  }
  for (double r : rep.rewards) rep.team_utility += r;
  return rep;
}

}  // namespace dbsrl::sim
