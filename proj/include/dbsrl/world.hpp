#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbsrl/common.hpp"

namespace dbsrl::world {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr int kWorldSchemaVersion = 1;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

struct UserSpec {
  int id = 0;
  Point position;
};

struct ClusterSpec {
  int id = 0;
  Point center;
  std::vector<int> users;
};

struct ShadowParams {
  double mean_db = 0.0;
  double stddev_db = 1.0;
};

enum class ShadowMode { MeanOnly, SampledPerLinkPerEpisode };
enum class LinkKind { LoS, NLoS };

/// Uplink radio constants. Defaults follow the reference parameter table;
/// `carrier_hz`, `los_phi` and `los_small_phi` are urban defaults that the
/// table does not list.
struct RadioConfig {
  double carrier_hz = 2e9;
  double tx_power_dbm = 20.0;
  double noise_psd_dbm_hz = -170.0;
  double rb_bandwidth_hz = 1e6;
  ShadowParams shadow_los{1.6, 8.41};
  ShadowParams shadow_nlos{23.0, 33.78};
  double los_phi = 9.61;
  double los_small_phi = 0.16;
  ShadowMode shadow_mode = ShadowMode::MeanOnly;
  /// Path loss enters the SNR as 10^(h / divisor). 20 reproduces the printed
  /// model, 10 is the conventional dB-to-power conversion.
  double db_exponent_divisor = 20.0;

  void validate() const;
};

/// Static geometry and fleet constraints. Cluster ids and user ids equal their
/// index in the respective vector; clusters partition the users.
struct WorldConfig {
  std::vector<ClusterSpec> clusters;
  std::vector<UserSpec> users;
  Point origin;
  int num_dbs = 1;
  /// At least `num_dbs` entries; the first `num_dbs` are used.
  std::vector<double> altitudes_m;
  double speed_mps = 30.0;
  double period_s = 100.0;
  int max_steps = 1;
  double service_radius_m = 50.0;
  RadioConfig radio;

  void validate() const;

  int num_clusters() const { return static_cast<int>(clusters.size()); }
  int num_users() const { return static_cast<int>(users.size()); }
  /// Straight flight through one service area, 2 d_r / V.
  double pass_time() const { return 2.0 * service_radius_m / speed_mps; }
  double travel_time(Point from, Point to) const { return distance(from, to) / speed_mps; }
  /// Cluster index of every user.
  std::vector<int> user_clusters() const;
};

/// One draw of per-user demand (bits, 0 means inactive) and activation times.
struct RequestRealization {
  std::vector<double> bits;
  std::vector<double> activate_at;

  bool active(int user) const { return bits[static_cast<std::size_t>(user)] > 0.0; }
  int active_count() const;
  void validate(double period_s) const;
};

/// Optional cluster-level weighting: `count` clusters per draw are hot.
struct Hotspots {
  int count = 1;
  double p_active_hot = 0.9;
  double p_active_cold = 0.2;
};

/// Concrete request distribution p(Z): Bernoulli activity, uniform demand in
/// [bits_min, bits_max], uniform activation time in [0, t_max_s].
struct TaskDistribution {
  double p_active = 0.8;
  double bits_min = 1e7;
  double bits_max = 1e8;
  double t_max_s = 30.0;
  std::optional<Hotspots> hotspots;

  void validate(const WorldConfig& world) const;
};

struct LinkBudget {
  double distance_m = 0.0;
  double elevation_deg = 0.0;
  double path_loss_los_db = 0.0;
  double path_loss_nlos_db = 0.0;
  double p_los = 0.0;
  double p_nlos = 0.0;
  double rate_bps = 0.0;
};

double free_space_loss_db(const RadioConfig& radio, double distance_m);
double path_loss_db(const RadioConfig& radio, double distance_m, double shadow_db);
double mean_shadow_db(const RadioConfig& radio, LinkKind kind);
double los_probability(const RadioConfig& radio, double elevation_deg);
double snr_linear(const RadioConfig& radio, double path_loss_db);
double elevation_deg(Point user, Point center, double altitude_m);

/// Link from a user to a DBS hovering over `cluster_center`. The shadow terms
/// default to the Gaussian means.
LinkBudget link_budget(const RadioConfig& radio, Point user, Point cluster_center,
                       double altitude_m, std::optional<double> shadow_los_db = std::nullopt,
                       std::optional<double> shadow_nlos_db = std::nullopt);

double transmission_delay(double bits, double rate_bps);

/// max(0, max delay - 2 d_r / V); zero for an empty set.
double hover_time(std::span<const double> delays, double speed_mps, double service_radius_m);

/// Per-episode rates, indexed [dbs][user], computed once per link. Sampled
/// shadow mode draws one LoS and one NLoS term per (user, DBS) from `rng`.
struct LinkTable {
  std::vector<std::vector<double>> rate_bps;
  double rate(int dbs, int user) const {
    return rate_bps[static_cast<std::size_t>(dbs)][static_cast<std::size_t>(user)];
  }
};

LinkTable make_link_table(const WorldConfig& world, Rng* rng = nullptr);

RequestRealization sample_realization(const WorldConfig& world, const TaskDistribution& dist,
                                      Rng& rng);

// Structured config files. Every document carries a `schema_version` field.
nlohmann::json to_json(const WorldConfig& world);
WorldConfig world_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskDistribution& dist);
TaskDistribution task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RequestRealization& z);
RequestRealization realization_from_json(const nlohmann::json& j);

WorldConfig load_world(const std::string& path);

}  // namespace dbsrl::world
