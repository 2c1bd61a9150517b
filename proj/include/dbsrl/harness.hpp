#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbsrl/approx.hpp"
#include "dbsrl/meta.hpp"
#include "dbsrl/vdrl.hpp"
#include "dbsrl/world.hpp"

namespace dbsrl::harness {

inline constexpr int kSchemaVersion = 1;

struct EvalConfig {
  int held_out_tasks = 5;
  std::uint64_t held_out_seed = 1000003;
  double threshold = 0.95;     // fraction of the oracle G*
  int pretrain_tasks = 4;
  long pretrain_iterations = 500;  // per pretraining task
  long max_iterations = 3000;  // budget per adaptation run
};

struct ExperimentSpec {
  std::string name;
  world::WorldConfig world;
  world::TaskDistribution task;
  std::uint64_t realization_seed = 1;
  std::string algorithm = "vdrl";  // vdrl | meta | iac | pretrain | oracle
  approx::NetworkConfig network;
  vdrl::TrainConfig train;
  meta::MetaConfig meta;
  EvalConfig eval;
  std::vector<int> fleet_sizes;  // empty: 1 .. number of altitudes
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "runs";
  int jobs = 1;
  double oracle_cap = 1e7;
  nlohmann::json resolved;  // the spec after defaults and overrides

  /// Throws ConfigError.
  void validate() const;
  /// Hex FNV-1a of the resolved JSON without `out` and `jobs`.
  std::string hash() const;
};

/// A complete spec document for a built-in preset.
nlohmann::json default_spec_json(const std::string& preset);

/// Reads a JSON spec; relative world paths resolve against its directory.
nlohmann::json load_spec_json(const std::string& path);

/// Applies "a.b.c=value"; the value is parsed as JSON when possible, else kept
/// as a string. Throws ConfigError on a malformed override.
void apply_override(nlohmann::json& spec, const std::string& assignment);

ExperimentSpec spec_from_json(const nlohmann::json& j);

std::uint64_t fnv1a(const std::string& bytes);

/// "# schema_version 1" and "# spec_hash <hex>" lines.
void write_preamble(std::ostream& out, const ExperimentSpec& spec);

/// The fixed realization of the spec.
world::RequestRealization realization(const ExperimentSpec& spec);

struct RunSummary {
  std::string algo;
  std::uint64_t seed = 0;
  int num_dbs = 0;
  double final_utility = 0.0;   // trailing window mean of G
  double greedy_utility = 0.0;  // argmax policy after training
  long converged_at = -1;
  long episodes = 0;
  long episodes_home = 0;
  vdrl::TrainResult result;
};

/// One training run of `algo` (vdrl or iac) from a fresh seeded init.
RunSummary run_training(const ExperimentSpec& spec, const std::string& algo, std::uint64_t seed);

/// Runs fn(i) for i in [0, count) on up to `jobs` threads; results by index.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, int jobs, F&& fn);

/// Trains every (algo, seed) pair and writes metrics under out_dir/<algo>/seed-<s>/.
std::vector<RunSummary> run_many(const ExperimentSpec& spec, const std::vector<std::string>& algos);

/// Runs from an externally produced CSV in the metrics layout (run_id, algo,
/// seed, iteration, G, ...; '#' lines skipped). Final G is the trailing mean
/// over `window` iterations; the greedy column is NaN. Throws ConfigError.
std::vector<RunSummary> load_external_runs(const std::string& path, std::size_t window);

/// Median, min and max per algorithm.
void write_compare_table(std::ostream& out, const std::vector<RunSummary>& runs);

struct MetaRun {
  approx::ParamSet random_init;
  meta::MetaResult meta;
};

/// Seeded random init and the meta-trained init built from it.
MetaRun run_meta(const ExperimentSpec& spec, std::uint64_t seed);

struct AdaptationRecord {
  std::uint64_t seed = 0;
  int task = 0;
  std::string init;  // meta | pretrain | random
  double g_star = 0.0;
  long iterations = -1;  // -1 when the threshold is never reached
  vdrl::TrainResult result;
};

/// Meta-trains per seed, builds the pretrained and random inits, and measures
/// iterations to threshold * G* on held-out tasks.
std::vector<AdaptationRecord> eval_adaptation(const ExperimentSpec& spec);

/// Median iterations per init; censored runs count as budget + 1.
double median_iterations(const std::vector<AdaptationRecord>& records, const std::string& init,
                         long budget);

struct FleetPoint {
  int num_dbs = 0;
  std::vector<double> utilities;  // one per seed
  double median = 0.0;
  long episodes = 0;       // over all seeds
  long episodes_home = 0;
};

std::vector<FleetPoint> fleet_sweep(const ExperimentSpec& spec);

double median(std::vector<double> v);

/// Writes per-figure CSV series into `dir`; returns the files written.
/// Kinds: fig4, fig5, fig7, fig9, fig10. Throws ConfigError on other kinds.
/// Degenerate series (no iterations, no arrivals) are reported in `warnings`.
std::vector<std::string> emit_plot_data(const ExperimentSpec& spec, const std::string& kind,
                                        const std::string& dir,
                                        std::vector<std::string>* warnings = nullptr);

}  // namespace dbsrl::harness

#include "dbsrl/harness_impl.hpp"
