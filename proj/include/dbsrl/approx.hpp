#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dbsrl/common.hpp"

namespace dbsrl::approx {

enum class Activation { Tanh, Linear };

/// Fully connected network: layers = {inputs, hidden..., outputs}. Hidden
/// layers use `hidden`; the output layer is always linear.
struct MlpShape {
  std::vector<std::size_t> layers;
  Activation hidden = Activation::Tanh;

  std::size_t inputs() const { return layers.front(); }
  std::size_t outputs() const { return layers.back(); }
  std::size_t param_count() const;
  void validate() const;
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Flat parameters; per layer the out x in weight block (row-major) is
/// followed by the out biases.
struct ParamVector {
  MlpShape shape;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  /// Throws NumericError on non-finite entries, ContractError on a length mismatch.
  void check() const;
  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// One-hot location over |C|+1 slots (slot 0 is the origin) followed by the
/// remaining-time fraction tau / T.
struct StateEncoding {
  std::vector<double> features;
};

StateEncoding encode_state(int location_slot, int num_slots, double remaining_fraction);

/// Feasible-action mask over the policy's output slots.
using ActionMask = std::vector<bool>;

ParamVector init_params(const MlpShape& shape, Rng& rng);
ParamVector zero_params(const MlpShape& shape);

/// Masked softmax: infeasible slots get exactly zero probability.
std::vector<double> forward_policy(const ParamVector& params, const StateEncoding& enc,
                                   const ActionMask& mask);
double log_prob(const ParamVector& params, const StateEncoding& enc, const ActionMask& mask,
                int action);
std::vector<double> grad_log_prob(const ParamVector& params, const StateEncoding& enc,
                                  const ActionMask& mask, int action);

double forward_value(const ParamVector& params, const StateEncoding& enc);
std::vector<double> grad_value(const ParamVector& params, const StateEncoding& enc);

/// Last hidden-layer activations (the input for a network without hidden layers).
std::vector<double> last_hidden(const ParamVector& params, const StateEncoding& enc);

double entropy(std::span<const double> probs);

/// Central-difference check: ||analytic - fd||_inf / ||fd||_inf (absolute
/// when the finite-difference gradient vanishes).
double finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                         std::span<const double> params, std::span<const double> analytic,
                         double step = 1e-6);

/// Policy and value parameters of one agent.
struct AgentParams {
  ParamVector policy;
  ParamVector value;
  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

/// Parameters of every DBS.
struct ParamSet {
  std::vector<AgentParams> agents;
  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

struct NetworkConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::Tanh;
};

MlpShape policy_shape(int num_clusters, const NetworkConfig& net);
MlpShape value_shape(int num_clusters, const NetworkConfig& net);
ParamSet init_param_set(int num_agents, int num_clusters, const NetworkConfig& net, Rng& rng);

// Checkpoints: a versioned text format with the shape descriptor and one
// hexadecimal float per line, so a round trip is bit-exact.
inline constexpr int kCheckpointVersion = 1;
void write_checkpoint(std::ostream& out, const ParamSet& params);
ParamSet read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace dbsrl::approx
