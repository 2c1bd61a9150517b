#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dbsrl/approx.hpp"
#include "dbsrl/sim.hpp"
#include "dbsrl/vdrl.hpp"
#include "dbsrl/world.hpp"

namespace dbsrl::meta {

enum class GradientMode { FirstOrder, Exact };

struct MetaConfig {
  long iterations = 200;
  int tasks_per_iteration = 4;  // J
  double inner_value_lr = 0.01;
  double inner_policy_lr = 0.05;
  double meta_lr = 0.01;        // beta
  GradientMode mode = GradientMode::FirstOrder;
  double discount = 0.95;
  bool reward_scale_by_n = true;
  /// +1 minimizes sum delta log pi as written; -1 minimizes its negative,
  /// which pushes the initialization along the policy-gradient direction.
  double policy_loss_sign = 1.0;
  int jobs = 1;

  void validate() const;
};

GradientMode parse_mode(const std::string& s);
const char* mode_name(GradientMode m);

/// Result of the one-step inner update on a task.
struct Adaptation {
  approx::ParamSet params;
  vdrl::StepOutput step;
};

Adaptation inner_adapt(const approx::ParamSet& init, const world::WorldConfig& world,
                       const world::RequestRealization& z, const world::LinkTable& links,
                       const MetaConfig& cfg, Rng& rng);

struct TaskLosses {
  std::vector<double> value_loss;    // L_c,n
  std::vector<double> policy_loss;   // L_a,n, sign applied
  std::vector<std::vector<double>> deltas;  // [n][k] r_k + g V'(s_{k+1}) - V'(s_k)
  sim::Rollout rollout;              // evaluation experience
};

/// L_c = sum_k delta_k^2 and L_a = sign * sum_k delta_k log pi'(a_k|s_k) on a
/// fresh rollout under the adapted policies; rewards are not scaled by N.
TaskLosses meta_losses(const approx::ParamSet& adapted, const world::WorldConfig& world,
                       const world::RequestRealization& z, const world::LinkTable& links,
                       const MetaConfig& cfg, Rng& rng);

/// Gradient of the summed losses with respect to the initialization, laid out
/// like a ParamSet: value parts from sum L_c, policy parts from sum L_a.
struct MetaGradient {
  approx::ParamSet grad;
  double value_loss = 0.0;
  double policy_loss = 0.0;
};

/// Gradient contribution of one task with everything sampled held fixed.
MetaGradient task_gradient(const approx::ParamSet& init, const Adaptation& adapted,
                           const TaskLosses& losses, const world::WorldConfig& world,
                           const MetaConfig& cfg);

/// Sum over tasks of inner_adapt, meta_losses and task_gradient. Task j uses
/// rngs[j]; results are reduced in task order.
MetaGradient meta_gradient(const approx::ParamSet& init, const world::WorldConfig& world,
                           const std::vector<world::RequestRealization>& tasks,
                           const MetaConfig& cfg, std::vector<Rng> rngs);

/// init - beta * meta_gradient(...).
approx::ParamSet meta_step(const approx::ParamSet& init, const world::WorldConfig& world,
                           const std::vector<world::RequestRealization>& tasks,
                           const MetaConfig& cfg, std::vector<Rng> rngs,
                           MetaGradient* out = nullptr);

struct MetaIterationMetrics {
  long iteration = 0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
};

struct MetaResult {
  approx::ParamSet params;
  std::vector<MetaIterationMetrics> history;
  std::vector<world::RequestRealization> tasks;  // every task seen, in order
};

MetaResult meta_train(const world::WorldConfig& world, const world::TaskDistribution& tasks,
                      const approx::ParamSet& init, const MetaConfig& cfg, Rng& rng);

/// Iterations of vdrl::train from `init` until the trailing mean G reaches
/// `threshold`; -1 if it never does within cfg.max_iterations.
long iterations_to_threshold(const world::WorldConfig& world, const world::RequestRealization& z,
                             const approx::ParamSet& init, vdrl::TrainConfig cfg,
                             double threshold, Rng& rng);

/// Columns: run_id, algo, seed, iteration, value_loss, policy_loss.
void write_history_header(std::ostream& out);
void write_history(std::ostream& out, const std::string& run_id, std::uint64_t seed,
                   const std::vector<MetaIterationMetrics>& history);

}  // namespace dbsrl::meta
