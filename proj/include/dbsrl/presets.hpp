#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbsrl/world.hpp"

namespace dbsrl::presets {

/// A ready-made world with its request distribution and the seed of the
/// fixed realization used for single-realization runs.
struct Preset {
  std::string name;
  world::WorldConfig world;
  world::TaskDistribution task;
  std::uint64_t realization_seed = 1;
};

/// 2 DBSs, 3 clusters of 10 users, K = 3.
Preset paper_tiny();
/// 2 DBSs, 2 mirror-image clusters, each DBS can serve only one of them.
Preset coordination();
/// 5 DBSs, 300 users in 8 clusters of unequal size.
Preset paper_like();

std::vector<std::string> names();
/// Throws ConfigError for an unknown name.
Preset by_name(const std::string& name);

/// Users placed uniformly in a disk of `radius_m` around each center.
world::WorldConfig make_world(const std::vector<world::Point>& centers,
                              const std::vector<int>& sizes, double radius_m,
                              std::uint64_t placement_seed);

}  // namespace dbsrl::presets
