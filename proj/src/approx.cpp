#include "dbsrl/approx.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dbsrl/mlp_kernel.hpp"

namespace dbsrl::approx {

std::size_t MlpShape::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += (layers[l] + 1) * layers[l + 1];
  return n;
}

void MlpShape::validate() const {
  if (layers.size() < 2) throw ConfigError("a network needs input and output layers");
  for (auto width : layers) {
    if (width == 0) throw ConfigError("network layers must be nonempty");
  }
}

void ParamVector::check() const {
  if (values.size() != shape.param_count()) {
    throw ContractError("parameter vector length does not match its shape");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite network parameter");
  }
}

StateEncoding encode_state(int location_slot, int num_slots, double remaining_fraction) {
  if (location_slot < 0 || location_slot >= num_slots) {
    throw DomainError("location slot out of range");
  }
  StateEncoding enc;
  enc.features.assign(static_cast<std::size_t>(num_slots) + 1, 0.0);
  enc.features[static_cast<std::size_t>(location_slot)] = 1.0;
  enc.features.back() = std::clamp(remaining_fraction, 0.0, 1.0);
  return enc;
}

ParamVector init_params(const MlpShape& shape, Rng& rng) {
  shape.validate();
  ParamVector p{shape, {}};
  p.values.reserve(shape.param_count());
  for (std::size_t l = 0; l + 1 < shape.layers.size(); ++l) {
    const std::size_t nin = shape.layers[l];
    const std::size_t nout = shape.layers[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(nin));
    for (std::size_t k = 0; k < (nin + 1) * nout; ++k) p.values.push_back(rng.uniform(-bound, bound));
  }
  return p;
}

ParamVector zero_params(const MlpShape& shape) {
  shape.validate();
  return {shape, std::vector<double>(shape.param_count(), 0.0)};
}

namespace {

void check_inputs(const ParamVector& params, const StateEncoding& enc) {
  params.check();
  if (enc.features.size() != params.shape.inputs()) {
    throw ContractError("state encoding width does not match the network input");
  }
}

void check_mask(const ParamVector& params, const ActionMask& mask) {
  if (mask.size() != params.shape.outputs()) {
    throw ContractError("action mask width does not match the policy output");
  }
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw ContractError("action mask is empty");
  }
}

}  // namespace

std::vector<double> forward_policy(const ParamVector& params, const StateEncoding& enc,
                                   const ActionMask& mask) {
  check_inputs(params, enc);
  check_mask(params, mask);
  return kernel::policy_probs<double>(params.shape, params.values, enc.features, mask);
}

double log_prob(const ParamVector& params, const StateEncoding& enc, const ActionMask& mask,
                int action) {
  const auto probs = forward_policy(params, enc, mask);
  if (action < 0 || action >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(action)]) {
    throw DomainError("action outside the feasible mask");
  }
  return std::log(probs[static_cast<std::size_t>(action)]);
}

std::vector<double> grad_log_prob(const ParamVector& params, const StateEncoding& enc,
                                  const ActionMask& mask, int action) {
  check_inputs(params, enc);
  check_mask(params, mask);
  if (action < 0 || action >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(action)]) {
    throw DomainError("action outside the feasible mask");
  }
  std::vector<double> grad(params.size(), 0.0);
  kernel::accumulate_grad_log_prob<double>(params.shape, params.values, enc.features, mask, action,
                                           1.0, grad);
  return grad;
}

double forward_value(const ParamVector& params, const StateEncoding& enc) {
  check_inputs(params, enc);
  return kernel::value<double>(params.shape, params.values, enc.features);
}

std::vector<double> grad_value(const ParamVector& params, const StateEncoding& enc) {
  check_inputs(params, enc);
  std::vector<double> grad(params.size(), 0.0);
  kernel::accumulate_grad_value<double>(params.shape, params.values, enc.features, 1.0, grad);
  return grad;
}

std::vector<double> last_hidden(const ParamVector& params, const StateEncoding& enc) {
  check_inputs(params, enc);
  kernel::Tape<double> tape;
  kernel::forward<double>(params.shape, params.values, enc.features, tape);
  return tape.act[tape.act.size() - 2];
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double q : probs) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

double finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                         std::span<const double> params, std::span<const double> analytic,
                         double step) {
  if (params.size() != analytic.size()) throw ContractError("gradient length mismatch");
  std::vector<double> x(params.begin(), params.end());
  double worst_diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = fn(x);
    x[i] = saved - step;
    const double down = fn(x);
    x[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    worst_diff = std::max(worst_diff, std::abs(fd - analytic[i]));
    scale = std::max(scale, std::abs(fd));
  }
  return scale > 0.0 ? worst_diff / scale : worst_diff;
}

MlpShape policy_shape(int num_clusters, const NetworkConfig& net) {
  MlpShape s;
  s.hidden = net.activation;
  s.layers.push_back(static_cast<std::size_t>(num_clusters) + 2);
  s.layers.insert(s.layers.end(), net.hidden.begin(), net.hidden.end());
  s.layers.push_back(static_cast<std::size_t>(num_clusters) + 1);
  return s;
}

MlpShape value_shape(int num_clusters, const NetworkConfig& net) {
  MlpShape s = policy_shape(num_clusters, net);
  s.layers.back() = 1;
  return s;
}

ParamSet init_param_set(int num_agents, int num_clusters, const NetworkConfig& net, Rng& rng) {
  ParamSet set;
  const auto ps = policy_shape(num_clusters, net);
  const auto vs = value_shape(num_clusters, net);
  for (int n = 0; n < num_agents; ++n) {
    AgentParams agent;
    agent.policy = init_params(ps, rng);
    agent.value = init_params(vs, rng);
    set.agents.push_back(std::move(agent));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_net(std::ostream& out, const char* role, const ParamVector& p) {
  out << "net " << role << ' ' << (p.shape.hidden == Activation::Tanh ? "tanh" : "linear")
      << " layers " << p.shape.layers.size();
  for (auto w : p.shape.layers) out << ' ' << w;
  out << " params " << p.values.size() << '\n';
  char buf[64];
  for (double v : p.values) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
    out.write(buf, res.ptr - buf);
    out << '\n';
  }
}

void expect(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw ConfigError("checkpoint: expected '" + token + "', found '" + got + "'");
  }
}

ParamVector read_net(std::istream& in, const char* role) {
  expect(in, "net");
  expect(in, role);
  std::string act;
  in >> act;
  ParamVector p;
  if (act == "tanh") {
    p.shape.hidden = Activation::Tanh;
  } else if (act == "linear") {
    p.shape.hidden = Activation::Linear;
  } else {
    throw ConfigError("checkpoint: unknown activation '" + act + "'");
  }
  expect(in, "layers");
  std::size_t count = 0;
  in >> count;
  p.shape.layers.resize(count);
  for (auto& w : p.shape.layers) in >> w;
  expect(in, "params");
  std::size_t n = 0;
  in >> n;
  if (!in) throw ConfigError("checkpoint: truncated network header");
  p.values.resize(n);
  std::string tok;
  for (auto& v : p.values) {
    if (!(in >> tok)) throw ConfigError("checkpoint: truncated parameter block");
    const char* first = tok.data();
    bool neg = false;
    if (*first == '-') {
      neg = true;
      ++first;
    }
    auto res = std::from_chars(first, tok.data() + tok.size(), v, std::chars_format::hex);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ConfigError("checkpoint: bad value '" + tok + "'");
    }
    if (neg) v = -v;
  }
  p.shape.validate();
  p.check();
  return p;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params) {
  out << "dbsrl-checkpoint " << kCheckpointVersion << '\n';
  out << "agents " << params.agents.size() << '\n';
  for (std::size_t n = 0; n < params.agents.size(); ++n) {
    out << "agent " << n << '\n';
    write_net(out, "policy", params.agents[n].policy);
    write_net(out, "value", params.agents[n].value);
  }
}

ParamSet read_checkpoint(std::istream& in) {
  expect(in, "dbsrl-checkpoint");
  int version = 0;
  in >> version;
  if (version != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
  expect(in, "agents");
  std::size_t count = 0;
  in >> count;
  ParamSet set;
  for (std::size_t n = 0; n < count; ++n) {
    expect(in, "agent");
    std::size_t idx = 0;
    in >> idx;
    if (idx != n) throw ConfigError("checkpoint: agents out of order");
    AgentParams agent;
    agent.policy = read_net(in, "policy");
    agent.value = read_net(in, "value");
    set.agents.push_back(std::move(agent));
  }
  return set;
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, params);
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace dbsrl::approx
