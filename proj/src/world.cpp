#include "dbsrl/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dbsrl::world {

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

}  // namespace

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

void RadioConfig::validate() const {
  if (!finite_positive(carrier_hz)) throw ConfigError("radio.carrier_hz must be > 0");
  if (!finite_positive(rb_bandwidth_hz)) throw ConfigError("radio.rb_bandwidth_hz must be > 0");
  if (!finite_positive(shadow_los.stddev_db) || !finite_positive(shadow_nlos.stddev_db)) {
    throw ConfigError("radio shadow stddev must be > 0");
  }
  if (!std::isfinite(tx_power_dbm) || !std::isfinite(noise_psd_dbm_hz)) {
    throw ConfigError("radio power levels must be finite");
  }
  if (!std::isfinite(los_phi) || los_phi < 0.0 || !std::isfinite(los_small_phi) ||
      los_small_phi < 0.0) {
    throw ConfigError("radio LoS constants must be finite and nonnegative");
  }
  if (db_exponent_divisor != 10.0 && db_exponent_divisor != 20.0) {
    throw ConfigError("radio.db_exponent_divisor must be 10 or 20");
  }
}

void WorldConfig::validate() const {
  if (clusters.empty()) throw ConfigError("world needs at least one cluster");
  if (num_dbs < 1) throw ConfigError("world.num_dbs must be >= 1");
  if (static_cast<int>(altitudes_m.size()) < num_dbs) {
    throw ConfigError("world.altitudes_m needs one entry per DBS");
  }
  for (int i = 0; i < num_dbs; ++i) {
    if (!finite_positive(altitudes_m[static_cast<std::size_t>(i)])) {
      throw ConfigError("altitudes must be > 0");
    }
    for (int j = 0; j < i; ++j) {
      if (altitudes_m[static_cast<std::size_t>(i)] == altitudes_m[static_cast<std::size_t>(j)]) {
        throw ConfigError("DBS altitudes must be pairwise distinct");
      }
    }
  }
  if (!finite_positive(speed_mps)) throw ConfigError("world.speed_mps must be > 0");
  if (!finite_positive(period_s)) throw ConfigError("world.period_s must be > 0");
  if (!finite_positive(service_radius_m)) throw ConfigError("world.service_radius_m must be > 0");
  if (max_steps < 1) throw ConfigError("world.max_steps must be >= 1");

  std::vector<int> owner(users.size(), -1);
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (users[u].id != static_cast<int>(u)) throw ConfigError("user ids must equal their index");
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].id != static_cast<int>(c)) {
      throw ConfigError("cluster ids must equal their index");
    }
    for (int u : clusters[c].users) {
      if (u < 0 || u >= num_users()) throw ConfigError("cluster references unknown user");
      if (owner[static_cast<std::size_t>(u)] != -1) {
        throw ConfigError("user " + std::to_string(u) + " belongs to more than one cluster");
      }
      owner[static_cast<std::size_t>(u)] = static_cast<int>(c);
    }
  }
  for (std::size_t u = 0; u < owner.size(); ++u) {
    if (owner[u] == -1) throw ConfigError("user " + std::to_string(u) + " has no cluster");
  }
  radio.validate();
}

std::vector<int> WorldConfig::user_clusters() const {
  std::vector<int> owner(users.size(), -1);
  for (const auto& c : clusters) {
    for (int u : c.users) owner[static_cast<std::size_t>(u)] = c.id;
  }
  return owner;
}

int RequestRealization::active_count() const {
  return static_cast<int>(std::count_if(bits.begin(), bits.end(), [](double b) { return b > 0.0; }));
}

void RequestRealization::validate(double period_s) const {
  if (bits.size() != activate_at.size()) throw ConfigError("realization vectors differ in length");
  for (std::size_t u = 0; u < bits.size(); ++u) {
    if (!std::isfinite(bits[u]) || bits[u] < 0.0) throw ConfigError("demand bits must be >= 0");
    if (bits[u] > 0.0 && !(activate_at[u] >= 0.0 && activate_at[u] <= period_s)) {
      throw ConfigError("active user activation time outside [0, T]");
    }
  }
}

void TaskDistribution::validate(const WorldConfig& world) const {
  auto prob = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
  if (!prob(p_active)) throw ConfigError("task.p_active must be in [0, 1]");
  if (!finite_positive(bits_min) || !std::isfinite(bits_max) || bits_max < bits_min) {
    throw ConfigError("task demand range must satisfy 0 < bits_min <= bits_max");
  }
  if (!std::isfinite(t_max_s) || t_max_s < 0.0 || t_max_s > world.period_s) {
    throw ConfigError("task.t_max_s must be in [0, T]");
  }
  if (hotspots) {
    if (hotspots->count < 0 || hotspots->count > world.num_clusters()) {
      throw ConfigError("task.hotspots.count must be in [0, |C|]");
    }
    if (!prob(hotspots->p_active_hot) || !prob(hotspots->p_active_cold)) {
      throw ConfigError("task.hotspots probabilities must be in [0, 1]");
    }
  }
}

double free_space_loss_db(const RadioConfig& radio, double distance_m) {
  if (!(distance_m > 0.0) || !std::isfinite(distance_m)) {
    throw DomainError("path loss needs a positive distance");
  }
  return 20.0 * std::log10(4.0 * std::numbers::pi * radio.carrier_hz * distance_m / kSpeedOfLight);
}

double path_loss_db(const RadioConfig& radio, double distance_m, double shadow_db) {
  return free_space_loss_db(radio, distance_m) + shadow_db;
}

double mean_shadow_db(const RadioConfig& radio, LinkKind kind) {
  return kind == LinkKind::LoS ? radio.shadow_los.mean_db : radio.shadow_nlos.mean_db;
}

double los_probability(const RadioConfig& radio, double elevation_deg) {
  if (!(elevation_deg > 0.0 && elevation_deg <= 90.0)) {
    throw DomainError("elevation must be in (0, 90] degrees");
  }
  const double a = radio.los_phi;
  const double b = radio.los_small_phi;
  return 1.0 / (1.0 + a * std::exp(-b * elevation_deg + a * b));
}

double snr_linear(const RadioConfig& radio, double path_loss_db) {
  const double noise_mw = dbm_to_mw(radio.noise_psd_dbm_hz) * radio.rb_bandwidth_hz;
  return dbm_to_mw(radio.tx_power_dbm) /
         (noise_mw * std::pow(10.0, path_loss_db / radio.db_exponent_divisor));
}

double elevation_deg(Point user, Point center, double altitude_m) {
  const double horizontal = distance(user, center);
  if (horizontal == 0.0) return 90.0;
  return std::atan2(altitude_m, horizontal) * 180.0 / std::numbers::pi;
}

LinkBudget link_budget(const RadioConfig& radio, Point user, Point cluster_center,
                       double altitude_m, std::optional<double> shadow_los_db,
                       std::optional<double> shadow_nlos_db) {
  LinkBudget lb;
  const double horizontal = distance(user, cluster_center);
  lb.distance_m = std::hypot(horizontal, altitude_m);
  lb.elevation_deg = elevation_deg(user, cluster_center, altitude_m);
  lb.path_loss_los_db = path_loss_db(radio, lb.distance_m,
                                     shadow_los_db.value_or(radio.shadow_los.mean_db));
  lb.path_loss_nlos_db = path_loss_db(radio, lb.distance_m,
                                      shadow_nlos_db.value_or(radio.shadow_nlos.mean_db));
  lb.p_los = los_probability(radio, lb.elevation_deg);
  lb.p_nlos = 1.0 - lb.p_los;
  const double b = radio.rb_bandwidth_hz;
  lb.rate_bps = lb.p_los * b * std::log2(1.0 + snr_linear(radio, lb.path_loss_los_db)) +
                lb.p_nlos * b * std::log2(1.0 + snr_linear(radio, lb.path_loss_nlos_db));
  return lb;
}

double transmission_delay(double bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw DomainError("transmission delay needs a positive rate");
  return bits / rate_bps;
}

double hover_time(std::span<const double> delays, double speed_mps, double service_radius_m) {
  if (delays.empty()) return 0.0;
  const double longest = *std::max_element(delays.begin(), delays.end());
  return std::max(0.0, longest - 2.0 * service_radius_m / speed_mps);
}

LinkTable make_link_table(const WorldConfig& world, Rng* rng) {
  const bool sampled = world.radio.shadow_mode == ShadowMode::SampledPerLinkPerEpisode;
  if (sampled && rng == nullptr) {
    throw ContractError("sampled shadowing needs an episode random stream");
  }
  const auto owner = world.user_clusters();
  LinkTable table;
  table.rate_bps.assign(static_cast<std::size_t>(world.num_dbs),
                        std::vector<double>(world.users.size(), 0.0));
  for (int n = 0; n < world.num_dbs; ++n) {
    const double altitude = world.altitudes_m[static_cast<std::size_t>(n)];
    for (const auto& user : world.users) {
      const Point center = world.clusters[static_cast<std::size_t>(
                                              owner[static_cast<std::size_t>(user.id)])]
                               .center;
      std::optional<double> los;
      std::optional<double> nlos;
      if (sampled) {
        los = rng->normal(world.radio.shadow_los.mean_db, world.radio.shadow_los.stddev_db);
        nlos = rng->normal(world.radio.shadow_nlos.mean_db, world.radio.shadow_nlos.stddev_db);
      }
      table.rate_bps[static_cast<std::size_t>(n)][static_cast<std::size_t>(user.id)] =
          link_budget(world.radio, user.position, center, altitude, los, nlos).rate_bps;
    }
  }
  return table;
}

RequestRealization sample_realization(const WorldConfig& world, const TaskDistribution& dist,
                                      Rng& rng) {
  dist.validate(world);
  const auto owner = world.user_clusters();
  std::vector<double> p_user(world.users.size(), dist.p_active);
  if (dist.hotspots) {
    std::vector<int> order(static_cast<std::size_t>(world.num_clusters()));
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first `count` entries are the hot clusters.
    std::vector<bool> hot(order.size(), false);
    for (int i = 0; i < dist.hotspots->count; ++i) {
      const auto remaining = static_cast<std::uint64_t>(order.size()) - static_cast<std::uint64_t>(i);
      const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.next() % remaining);
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
      hot[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    }
    for (std::size_t u = 0; u < p_user.size(); ++u) {
      p_user[u] = hot[static_cast<std::size_t>(owner[u])] ? dist.hotspots->p_active_hot
                                                           : dist.hotspots->p_active_cold;
    }
  }
  RequestRealization z;
  z.bits.assign(world.users.size(), 0.0);
  z.activate_at.assign(world.users.size(), 0.0);
  for (std::size_t u = 0; u < world.users.size(); ++u) {
    if (!rng.bernoulli(p_user[u])) continue;
    z.bits[u] = rng.uniform(dist.bits_min, dist.bits_max);
    z.activate_at[u] = rng.uniform(0.0, dist.t_max_s);
  }
  return z;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json point_json(Point p) { return nlohmann::json::array({p.x, p.y}); }

Point point_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("points are [x, y] arrays");
  return {j[0].get<double>(), j[1].get<double>()};
}

void check_schema(const nlohmann::json& j, const char* what) {
  if (!j.contains("schema_version")) {
    throw ConfigError(std::string(what) + " is missing schema_version");
  }
  if (j.at("schema_version").get<int>() != kWorldSchemaVersion) {
    throw ConfigError(std::string(what) + " has unsupported schema_version");
  }
}

const char* shadow_mode_name(ShadowMode m) {
  return m == ShadowMode::MeanOnly ? "mean_only" : "sampled_per_link_per_episode";
}

}  // namespace

nlohmann::json to_json(const WorldConfig& world) {
  nlohmann::json j;
  j["schema_version"] = kWorldSchemaVersion;
  j["origin"] = point_json(world.origin);
  j["num_dbs"] = world.num_dbs;
  j["altitudes_m"] = world.altitudes_m;
  j["speed_mps"] = world.speed_mps;
  j["period_s"] = world.period_s;
  j["max_steps"] = world.max_steps;
  j["service_radius_m"] = world.service_radius_m;
  const auto& r = world.radio;
  j["radio"] = {
      {"carrier_hz", r.carrier_hz},
      {"tx_power_dbm", r.tx_power_dbm},
      {"noise_psd_dbm_hz", r.noise_psd_dbm_hz},
      {"rb_bandwidth_hz", r.rb_bandwidth_hz},
      {"shadow_los", {{"mean_db", r.shadow_los.mean_db}, {"stddev_db", r.shadow_los.stddev_db}}},
      {"shadow_nlos",
       {{"mean_db", r.shadow_nlos.mean_db}, {"stddev_db", r.shadow_nlos.stddev_db}}},
      {"los_phi", r.los_phi},
      {"los_small_phi", r.los_small_phi},
      {"shadow_mode", shadow_mode_name(r.shadow_mode)},
      {"db_exponent_divisor", r.db_exponent_divisor},
  };
  auto& clusters = j["clusters"] = nlohmann::json::array();
  for (const auto& c : world.clusters) {
    clusters.push_back({{"id", c.id}, {"center", point_json(c.center)}, {"users", c.users}});
  }
  auto& users = j["users"] = nlohmann::json::array();
  for (const auto& u : world.users) {
    users.push_back({{"id", u.id}, {"position", point_json(u.position)}});
  }
  return j;
}

WorldConfig world_from_json(const nlohmann::json& j) {
  try {
    check_schema(j, "world config");
    WorldConfig w;
    w.origin = point_from(j.at("origin"));
    w.num_dbs = j.at("num_dbs").get<int>();
    w.altitudes_m = j.at("altitudes_m").get<std::vector<double>>();
    w.speed_mps = j.at("speed_mps").get<double>();
    w.period_s = j.at("period_s").get<double>();
    w.max_steps = j.at("max_steps").get<int>();
    w.service_radius_m = j.value("service_radius_m", 50.0);
    if (j.contains("radio")) {
      const auto& r = j.at("radio");
      RadioConfig radio;
      radio.carrier_hz = r.value("carrier_hz", radio.carrier_hz);
      radio.tx_power_dbm = r.value("tx_power_dbm", radio.tx_power_dbm);
      radio.noise_psd_dbm_hz = r.value("noise_psd_dbm_hz", radio.noise_psd_dbm_hz);
      radio.rb_bandwidth_hz = r.value("rb_bandwidth_hz", radio.rb_bandwidth_hz);
      if (r.contains("shadow_los")) {
        radio.shadow_los = {r["shadow_los"].at("mean_db").get<double>(),
                            r["shadow_los"].at("stddev_db").get<double>()};
      }
      if (r.contains("shadow_nlos")) {
        radio.shadow_nlos = {r["shadow_nlos"].at("mean_db").get<double>(),
                             r["shadow_nlos"].at("stddev_db").get<double>()};
      }
      radio.los_phi = r.value("los_phi", radio.los_phi);
      radio.los_small_phi = r.value("los_small_phi", radio.los_small_phi);
      const auto mode = r.value("shadow_mode", std::string("mean_only"));
      if (mode == "mean_only") {
        radio.shadow_mode = ShadowMode::MeanOnly;
      } else if (mode == "sampled_per_link_per_episode") {
        radio.shadow_mode = ShadowMode::SampledPerLinkPerEpisode;
      } else {
        throw ConfigError("unknown radio.shadow_mode '" + mode + "'");
      }
      radio.db_exponent_divisor = r.value("db_exponent_divisor", radio.db_exponent_divisor);
      w.radio = radio;
    }
    for (const auto& c : j.at("clusters")) {
      w.clusters.push_back(
          {c.at("id").get<int>(), point_from(c.at("center")), c.at("users").get<std::vector<int>>()});
    }
    for (const auto& u : j.at("users")) {
      w.users.push_back({u.at("id").get<int>(), point_from(u.at("position"))});
    }
    w.validate();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed world config: ") + e.what());
  }
}

nlohmann::json to_json(const TaskDistribution& dist) {
  nlohmann::json j{{"schema_version", kWorldSchemaVersion},
                   {"p_active", dist.p_active},
                   {"bits_min", dist.bits_min},
                   {"bits_max", dist.bits_max},
                   {"t_max_s", dist.t_max_s}};
  if (dist.hotspots) {
    j["hotspots"] = {{"count", dist.hotspots->count},
                     {"p_active_hot", dist.hotspots->p_active_hot},
                     {"p_active_cold", dist.hotspots->p_active_cold}};
  }
  return j;
}

TaskDistribution task_from_json(const nlohmann::json& j) {
  try {
    check_schema(j, "task distribution");
    TaskDistribution d;
    d.p_active = j.value("p_active", d.p_active);
    d.bits_min = j.value("bits_min", d.bits_min);
    d.bits_max = j.value("bits_max", d.bits_max);
    d.t_max_s = j.value("t_max_s", d.t_max_s);
    if (j.contains("hotspots") && !j["hotspots"].is_null()) {
      const auto& h = j["hotspots"];
      Hotspots hs;
      hs.count = h.value("count", hs.count);
      hs.p_active_hot = h.value("p_active_hot", hs.p_active_hot);
      hs.p_active_cold = h.value("p_active_cold", hs.p_active_cold);
      d.hotspots = hs;
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed task distribution: ") + e.what());
  }
}

nlohmann::json to_json(const RequestRealization& z) {
  return {{"schema_version", kWorldSchemaVersion}, {"bits", z.bits}, {"activate_at", z.activate_at}};
}

RequestRealization realization_from_json(const nlohmann::json& j) {
  try {
    check_schema(j, "realization");
    return {j.at("bits").get<std::vector<double>>(), j.at("activate_at").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed realization: ") + e.what());
  }
}

WorldConfig load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world config '" + path + "'");
  try {
    return world_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

}  // namespace dbsrl::world
