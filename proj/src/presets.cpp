#include "dbsrl/presets.hpp"

#include <cmath>
#include <numbers>

namespace dbsrl::presets {

using world::Point;
using world::WorldConfig;

WorldConfig make_world(const std::vector<Point>& centers, const std::vector<int>& sizes,
                       double radius_m, std::uint64_t placement_seed) {
  if (centers.size() != sizes.size()) throw ConfigError("one cluster size per center");
  Rng rng(placement_seed);
  WorldConfig w;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    world::ClusterSpec cluster;
    cluster.id = static_cast<int>(c);
    cluster.center = centers[c];
    for (int i = 0; i < sizes[c]; ++i) {
      const double r = radius_m * std::sqrt(rng.uniform());
      const double a = 2.0 * std::numbers::pi * rng.uniform();
      const int id = w.num_users();
      w.users.push_back({id, {centers[c].x + r * std::cos(a), centers[c].y + r * std::sin(a)}});
      cluster.users.push_back(id);
    }
    w.clusters.push_back(std::move(cluster));
  }
  return w;
}

namespace {

Point polar(double r, double deg) {
  const double a = deg * std::numbers::pi / 180.0;
  return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace

Preset paper_tiny() {
  Preset p;
  p.name = "paper-tiny";
  p.world = make_world({polar(600, 0), polar(600, 120), polar(600, 240)}, {10, 10, 10}, 40.0, 11);
  p.world.num_dbs = 2;
  p.world.altitudes_m = {100.0, 120.0};
  p.world.speed_mps = 30.0;
  p.world.period_s = 100.0;
  p.world.max_steps = 3;
  p.task.p_active = 0.8;
  p.task.bits_min = 1e7;
  p.task.bits_max = 1e8;
  p.task.t_max_s = 40.0;
  p.realization_seed = 7;
  p.world.validate();
  return p;
}

Preset coordination() {
  Preset p;
  p.name = "coordination";
  p.world = make_world({{-500.0, 0.0}, {500.0, 0.0}}, {10, 10}, 40.0, 12);
  p.world.num_dbs = 2;
  p.world.altitudes_m = {100.0, 120.0};
  p.world.speed_mps = 30.0;
  p.world.period_s = 50.0;
  p.world.max_steps = 2;
  p.task.p_active = 1.0;
  p.task.bits_min = 1e7;
  p.task.bits_max = 2e7;
  p.task.t_max_s = 10.0;
  p.realization_seed = 3;
  p.world.validate();
  return p;
}

Preset paper_like() {
  Preset p;
  p.name = "paper-like";
  p.world = make_world({polar(450, 10), polar(700, 60), polar(400, 110), polar(800, 160),
                        polar(550, 205), polar(750, 250), polar(500, 300), polar(850, 340)},
                       {70, 55, 45, 40, 30, 25, 20, 15}, 45.0, 13);
  p.world.num_dbs = 5;
  p.world.altitudes_m = {100.0, 120.0, 140.0, 160.0, 180.0};
  p.world.speed_mps = 30.0;
  p.world.period_s = 120.0;
  p.world.max_steps = 3;
  p.task.p_active = 0.8;
  p.task.bits_min = 1e7;
  p.task.bits_max = 1e8;
  p.task.t_max_s = 40.0;
  p.realization_seed = 5;
  p.world.validate();
  return p;
}

std::vector<std::string> names() { return {"paper-tiny", "coordination", "paper-like"}; }

Preset by_name(const std::string& name) {
  if (name == "paper-tiny") return paper_tiny();
  if (name == "coordination") return coordination();
  if (name == "paper-like") return paper_like();
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace dbsrl::presets
