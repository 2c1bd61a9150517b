#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbsrl/approx.hpp"
#include "dbsrl/sim.hpp"
#include "dbsrl/world.hpp"

namespace dbsrl::vdrl {

/// alpha(i) = a / (b + i)^p with a, b > 0 and p in (0.5, 1].
struct StepSchedule {
  double a = 0.01;
  double b = 1.0;
  double p = 0.6;

  double at(long iteration) const;
  /// Throws ConfigError outside the family.
  void validate() const;
};

/// Checks positivity and nonincreasing values of an arbitrary schedule over
/// the first `horizon` iterations; throws ConfigError.
void validate_schedule(const std::function<double(long)>& alpha, long horizon);

struct TrainConfig {
  long max_iterations = 1000;
  double discount = 0.95;
  StepSchedule value_lr{0.01, 1.0, 0.6};
  StepSchedule policy_lr{0.005, 1.0, 0.6};
  int window = 100;
  double tolerance = 1e-3;
  bool stop_on_convergence = false;
  /// Conventional TD update that detaches the bootstrap target.
  bool semi_gradient = false;
  /// Scale the team reward by N inside the team advantage.
  bool reward_scale_by_n = true;
  /// Redraw the realization every iteration from this distribution.
  std::optional<world::TaskDistribution> resample;
  /// Record the first iteration whose trailing mean G over `target_window`
  /// iterations reaches `target_utility` (disabled when <= 0).
  double target_utility = 0.0;
  int target_window = 20;
  bool stop_at_target = false;
  /// Track the target on the greedy policy's G after each update instead of
  /// the sampled episode's G.
  bool target_greedy = false;

  void validate() const;
};

struct IterationMetrics {
  long iteration = 0;
  double team_utility = 0.0;
  double reward_sum = 0.0;
  std::vector<double> initial_values;  // V_n(s_{n,0}) before the update
  double advantage_l2 = 0.0;
  double entropy = 0.0;               // mean over decision steps
  std::vector<double> dbs_utility;    // sum_k mu_{n,k}
};

struct TrainResult {
  approx::ParamSet params;
  std::vector<IterationMetrics> metrics;
  bool converged = false;
  long converged_at = -1;
  long reached_target_at = -1;
  double final_utility = 0.0;  // mean G over the last window
  long episodes = 0;
  long episodes_home = 0;      // every DBS back at the origin with budget >= 0
};

struct Advantages {
  std::vector<double> team;                     // A_k
  std::vector<std::vector<double>> individual;  // A~_{n,k}
  std::vector<std::vector<double>> values;      // V_n(s_{n,k}), k = 0..K; 0 at terminal states
};

/// A_k = N r_k + g sum_n V_n(s_{n,k+1}) - sum_n V_n(s_{n,k}) and
/// A~_{n,k} = r_k + g V_n(s_{n,k+1}) - V_n(s_{n,k}). The N factor is dropped
/// when `scale_by_n` is false.
Advantages team_advantage(const std::vector<sim::Experience>& experiences,
                          const std::vector<const approx::ParamVector*>& value_params,
                          const world::WorldConfig& world, double discount,
                          bool scale_by_n = true);

/// sum_k adv_k grad(g V(s_{k+1}) - V(s_k)); terminal states contribute
/// nothing. With `semi_gradient` only -grad V(s_k) is kept.
std::vector<double> value_gradient(const approx::ParamVector& theta, const sim::Experience& e,
                                   std::span<const double> adv, const world::WorldConfig& world,
                                   double discount, bool semi_gradient = false);

/// sum_k adv_k grad log pi(a_k | s_k).
std::vector<double> policy_gradient(const approx::ParamVector& theta, const sim::Experience& e,
                                    std::span<const double> adv, const world::WorldConfig& world);

/// theta - 2 alpha value_gradient(...).
approx::ParamVector value_step(const approx::ParamVector& theta, const sim::Experience& e,
                               std::span<const double> team_adv, double alpha,
                               const world::WorldConfig& world, double discount,
                               bool semi_gradient = false, long iteration = -1);

/// theta + alpha policy_gradient(...).
approx::ParamVector policy_step(const approx::ParamVector& theta, const sim::Experience& e,
                                std::span<const double> own_adv, double alpha,
                                const world::WorldConfig& world, long iteration = -1);

/// Everything a DBS's update sees.
struct UpdateCall {
  int dbs = 0;
  long iteration = 0;
  const sim::Experience* experience = nullptr;
  std::span<const double> team_advantage;
  std::span<const double> own_advantage;
};

using UpdateObserver = std::function<void(const UpdateCall&)>;

/// One iteration of rollout, advantages and per-DBS updates on `params`.
struct StepOutput {
  sim::Rollout rollout;
  Advantages advantages;
};

StepOutput train_iteration(approx::ParamSet& params, const world::WorldConfig& world,
                           const world::RequestRealization& z, const world::LinkTable& links,
                           double discount, double value_alpha, double policy_alpha,
                           bool semi_gradient, bool scale_by_n, long iteration, Rng& rng,
                           const UpdateObserver& observer = {});

TrainResult train(const world::WorldConfig& world, const world::RequestRealization& z,
                  const approx::ParamSet& init, const TrainConfig& cfg, Rng& rng,
                  const UpdateObserver& observer = {});

/// One update of `params` on realization z with the given step sizes.
using IterationFn = std::function<StepOutput(approx::ParamSet& params,
                                             const world::RequestRealization& z,
                                             const world::LinkTable& links, double value_alpha,
                                             double policy_alpha, long iteration, Rng& rng)>;

/// The training loop shared by every algorithm: link tables, realization
/// resampling, metrics, convergence and target bookkeeping.
TrainResult run_training(const world::WorldConfig& world, const world::RequestRealization& z,
                         const approx::ParamSet& init, const TrainConfig& cfg, Rng& rng,
                         const IterationFn& step);

/// Team utility of the greedy joint trajectory under `params`.
double greedy_utility(const world::WorldConfig& world, const world::RequestRealization& z,
                      const approx::ParamSet& params);

/// Mean of the last `window` entries of G.
double trailing_mean(const std::vector<IterationMetrics>& m, std::size_t window);

/// Per-iteration metrics as CSV rows: run_id, algo, seed, iteration, G, r_sum,
/// adv_l2, entropy, V0_0 .. V0_{N-1}, U_0 .. U_{N-1}.
void write_metrics_header(std::ostream& out, int num_dbs);
void write_metrics_rows(std::ostream& out, const std::string& run_id, const std::string& algo,
                        std::uint64_t seed, const std::vector<IterationMetrics>& metrics);

}  // namespace dbsrl::vdrl
