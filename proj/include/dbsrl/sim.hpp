#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dbsrl/approx.hpp"
#include "dbsrl/common.hpp"
#include "dbsrl/world.hpp"

namespace dbsrl::sim {

/// Location code of the origin; clusters use their id (0-based).
inline constexpr int kOrigin = -1;

/// Action slot of a location: slot 0 is the origin, slot c + 1 is cluster c.
inline int slot_of(int location) { return location + 1; }
inline int location_of(int slot) { return slot - 1; }

/// Decision state: location, remaining flight budget when leaving it, step index.
struct DbsState {
  int location = kOrigin;
  double remaining_time_s = 0.0;
  int step_index = 0;
};

approx::StateEncoding encode(const DbsState& s, const world::WorldConfig& world);

/// Back at the origin after the first decision, or past the last step. Such
/// states carry no future reward and bootstrap with value 0.
inline bool is_terminal(const DbsState& s, int max_steps) {
  return s.step_index >= max_steps || (s.location == kOrigin && s.step_index > 0);
}

/// paths[n][k] is a cluster id or kOrigin. Once the origin appears every later
/// entry is the origin.
struct JointTrajectory {
  std::vector<std::vector<int>> paths;

  friend bool operator==(const JointTrajectory&, const JointTrajectory&) = default;
  friend bool operator<(const JointTrajectory& a, const JointTrajectory& b) {
    return a.paths < b.paths;
  }
};

/// Checks shape, cluster ids and the absorbing origin; throws ContractError.
void check_shape(const JointTrajectory& traj, const world::WorldConfig& world);

struct ArrivalEvent {
  double time_s = 0.0;
  int dbs = 0;
  int step = 0;
  int cluster = 0;
  int served = 0;
  double mu = 0.0;
  double window_lo_s = 0.0;  // exclusive unless first arrival at the cluster
  double window_hi_s = 0.0;  // inclusive
  bool first_at_cluster = false;
  double hover_s = 0.0;
};

struct EpisodeOutcome {
  int num_dbs = 0;
  int max_steps = 0;
  int active_users = 0;
  int served_users = 0;
  std::vector<std::vector<double>> mu;                      // [n][k]
  std::vector<std::vector<double>> tau;                     // [n][k] budget on arrival, or after flying home
  std::vector<std::vector<std::vector<int>>> served;        // [n][k] user ids
  std::vector<std::vector<DbsState>> states;                // [n][0..K] decision states
  std::vector<double> rewards;                              // r_k
  std::vector<double> final_remaining_s;                    // budget left on return
  double team_utility = 0.0;                                // G
  std::vector<ArrivalEvent> events;                         // global time order
  JointTrajectory trajectory;

  /// Every DBS is back at the origin with a nonnegative budget.
  bool returned_home() const;
};

/// Feasibility mask over the |C|+1 action slots.
approx::ActionMask feasible_actions(const DbsState& state, const world::WorldConfig& world);

/// Picks an action slot for DBS n at a decision state.
using Chooser = std::function<int(int dbs, const DbsState& state, const approx::ActionMask& mask)>;

/// Event-driven core. Returns nullopt if the chooser picks an infeasible slot.
std::optional<EpisodeOutcome> simulate(const world::WorldConfig& world,
                                       const world::RequestRealization& z,
                                       const world::LinkTable& links, const Chooser& chooser);

/// Executes a fixed joint trajectory; throws ContractError naming (n, k) if it
/// is infeasible. Mean-shadow links unless `links` is given.
EpisodeOutcome run_episode(const world::WorldConfig& world, const world::RequestRealization& z,
                           const JointTrajectory& traj,
                           const world::LinkTable* links = nullptr);

/// r_k = sum_n mu_{n,k}.
std::vector<double> team_stage_rewards(const EpisodeOutcome& outcome);

struct Experience {
  std::vector<DbsState> states;             // K + 1 entries, the last is terminal
  std::vector<approx::ActionMask> masks;    // K
  std::vector<int> actions;                 // K action slots
  std::vector<double> rewards;              // K team stage rewards

  std::size_t length() const { return actions.size(); }
};

std::vector<Experience> experiences(const EpisodeOutcome& outcome,
                                    const world::WorldConfig& world);

struct Rollout {
  std::vector<Experience> experiences;
  EpisodeOutcome outcome;
};

/// Samples every DBS's actions from its masked softmax policy. `policies` has
/// either one entry per DBS or a single shared entry.
Rollout rollout(const world::WorldConfig& world, const world::RequestRealization& z,
                const world::LinkTable& links, const std::vector<const approx::ParamVector*>& policies,
                Rng& rng);
Rollout rollout(const world::WorldConfig& world, const world::RequestRealization& z,
                const approx::ParamSet& params, Rng& rng);

/// Argmax actions, ties to the lowest slot.
Rollout greedy_rollout(const world::WorldConfig& world, const world::RequestRealization& z,
                       const world::LinkTable& links,
                       const std::vector<const approx::ParamVector*>& policies);

struct EnumerateOptions {
  double cap = 1e7;
  int jobs = 1;
};

struct OptimalSet {
  double best_utility = 0.0;
  int best_served = 0;
  std::vector<JointTrajectory> maximizers;  // lexicographic order
  std::uint64_t evaluated = 0;
};

/// Exhaustive search over feasible joint trajectories. Throws CapExceededError
/// when (|C|+1)^(N K) exceeds the cap.
OptimalSet enumerate_optimal(const world::WorldConfig& world, const world::RequestRealization& z,
                             const EnumerateOptions& opts = {},
                             const world::LinkTable* links = nullptr);

// Event log: a header followed by one line per arrival
// "time dbs step cluster served mu" with round-trip precision.
void write_event_log(std::ostream& out, const EpisodeOutcome& outcome);

struct ReplayedEpisode {
  std::vector<std::vector<double>> mu;
  std::vector<double> rewards;
  double team_utility = 0.0;
  std::vector<ArrivalEvent> events;
};

ReplayedEpisode replay_event_log(std::istream& in);

}  // namespace dbsrl::sim
