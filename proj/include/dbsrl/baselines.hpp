#pragma once

#include <string>
#include <vector>

#include "dbsrl/vdrl.hpp"

namespace dbsrl::baselines {

enum class BaselineKind { IAC, PretrainedVDRL, RandomInitVDRL };

const char* kind_name(BaselineKind k);
BaselineKind parse_kind(const std::string& s);

/// A single policy/value pair shared by every DBS.
approx::ParamSet init_shared(int num_clusters, const approx::NetworkConfig& net, Rng& rng);

/// One IAC iteration: rollout with the shared policy, then per-DBS individual
/// advantages mu_{n,k} + g V(s') - V(s) whose gradients are summed into one
/// update of the shared parameters.
vdrl::StepOutput iac_iteration(approx::ParamSet& shared, const world::WorldConfig& world,
                               const world::RequestRealization& z, const world::LinkTable& links,
                               double discount, double value_alpha, double policy_alpha,
                               bool semi_gradient, long iteration, Rng& rng);

/// `init` holds exactly one agent, used by every DBS.
vdrl::TrainResult iac_train(const world::WorldConfig& world, const world::RequestRealization& z,
                            const approx::ParamSet& init, const vdrl::TrainConfig& cfg, Rng& rng);

/// Full VD-RL runs task after task, each from the previous final parameters.
approx::ParamSet pretrain_init(const world::WorldConfig& world,
                               const std::vector<world::RequestRealization>& tasks,
                               const approx::ParamSet& init, const vdrl::TrainConfig& cfg,
                               Rng& rng);

}  // namespace dbsrl::baselines
