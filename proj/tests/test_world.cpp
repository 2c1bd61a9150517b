#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dbsrl/presets.hpp"
#include "dbsrl/world.hpp"

using namespace dbsrl;
using namespace dbsrl::world;

namespace {

// Straight-from-formula reference for the air-to-ground rate.
double reference_rate(const RadioConfig& r, double horizontal_m, double altitude_m) {
  const double d = std::sqrt(horizontal_m * horizontal_m + altitude_m * altitude_m);
  const double theta = horizontal_m == 0.0 ? 90.0 : std::atan2(altitude_m, horizontal_m) * 180.0 / std::numbers::pi;
  const double fs = 20.0 * std::log10(4.0 * std::numbers::pi * r.carrier_hz * d / 299792458.0);
  const double beta = 1.0 / (1.0 + r.los_phi * std::exp(-r.los_small_phi * theta + r.los_phi * r.los_small_phi));
  const double p_mw = std::pow(10.0, r.tx_power_dbm / 10.0);
  const double n0_mw = std::pow(10.0, r.noise_psd_dbm_hz / 10.0);
  auto snr = [&](double h) { return p_mw / (n0_mw * r.rb_bandwidth_hz * std::pow(10.0, h / 20.0)); };
  const double g_los = snr(fs + r.shadow_los.mean_db);
  const double g_nlos = snr(fs + r.shadow_nlos.mean_db);
  return beta * r.rb_bandwidth_hz * std::log2(1.0 + g_los) +
         (1.0 - beta) * r.rb_bandwidth_hz * std::log2(1.0 + g_nlos);
}

}  // namespace

TEST_CASE("path loss") {
  RadioConfig radio;
  // 4 pi f d / c = 1.
  const double unit_d = kSpeedOfLight / (4.0 * std::numbers::pi * radio.carrier_hz);
  CHECK(path_loss_db(radio, unit_d, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
  // Hand-computed values at 2 GHz, 500 m.
  CHECK(free_space_loss_db(radio, 500.0) == doctest::Approx(92.44778322188337).epsilon(1e-12));
  CHECK(path_loss_db(radio, 500.0, mean_shadow_db(radio, LinkKind::LoS)) ==
        doctest::Approx(94.04778322188336).epsilon(1e-12));
  CHECK(mean_shadow_db(radio, LinkKind::NLoS) == 23.0);
  CHECK_THROWS_AS(path_loss_db(radio, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(path_loss_db(radio, -3.0, 0.0), DomainError);

  double prev = path_loss_db(radio, 1.0, 1.6);
  for (double d = 2.0; d < 5000.0; d *= 1.37) {
    const double pl = path_loss_db(radio, d, 1.6);
    CHECK(pl > prev);
    prev = pl;
  }
}

TEST_CASE("LoS probability") {
  RadioConfig radio;
  const double at90 = los_probability(radio, 90.0);
  CHECK(at90 > 0.999);
  CHECK(at90 == doctest::Approx(1.0 / (1.0 + 9.61 * std::exp(-0.16 * 90.0 + 9.61 * 0.16))).epsilon(1e-14));
  CHECK(los_probability(radio, 80.0) > los_probability(radio, 20.0));
  double prev = 0.0;
  for (double e = 0.5; e <= 90.0; e += 0.5) {
    const double p = los_probability(radio, e);
    CHECK(p > prev);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    prev = p;
  }
  RadioConfig flat = radio;
  flat.los_phi = 1e-12;
  CHECK(los_probability(flat, 30.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(los_probability(radio, 0.0), DomainError);
  CHECK_THROWS_AS(los_probability(radio, 90.5), DomainError);
}

TEST_CASE("SNR") {
  RadioConfig radio;
  CHECK(snr_linear(radio, 0.0) == doctest::Approx(1e13).epsilon(1e-12));
  CHECK(snr_linear(radio, 4000.0) < 1e-100);
  RadioConfig wide = radio;
  wide.rb_bandwidth_hz *= 2.0;
  CHECK(snr_linear(wide, 37.0) == doctest::Approx(snr_linear(radio, 37.0) / 2.0).epsilon(1e-14));
  RadioConfig conventional = radio;
  conventional.db_exponent_divisor = 10.0;
  CHECK(snr_linear(conventional, 20.0) == doctest::Approx(1e11).epsilon(1e-12));
  CHECK(snr_linear(radio, 20.0) == doctest::Approx(1e12).epsilon(1e-12));
}

TEST_CASE("link budget") {
  RadioConfig radio;
  SUBCASE("overhead user") {
    const auto lb = link_budget(radio, {5.0, 5.0}, {5.0, 5.0}, 100.0);
    CHECK(lb.elevation_deg == 90.0);
    CHECK(lb.p_los == los_probability(radio, 90.0));
    CHECK(lb.p_los + lb.p_nlos == 1.0);
  }
  SUBCASE("symmetry") {
    const auto a = link_budget(radio, {30.0, 0.0}, {0.0, 0.0}, 120.0);
    const auto b = link_budget(radio, {0.0, -30.0}, {0.0, 0.0}, 120.0);
    CHECK(a.rate_bps == b.rate_bps);
    CHECK(a.p_los == b.p_los);
  }
  SUBCASE("reference formula") {
    for (double h : {0.0, 12.5, 40.0, 300.0}) {
      for (double alt : {50.0, 100.0, 180.0}) {
        const auto lb = link_budget(radio, {h, 0.0}, {0.0, 0.0}, alt);
        CHECK(lb.rate_bps == doctest::Approx(reference_rate(radio, h, alt)).epsilon(1e-9));
        CHECK(lb.rate_bps > 0.0);
      }
    }
  }
  SUBCASE("rate decreases with horizontal distance") {
    double prev = link_budget(radio, {0.0, 0.0}, {0.0, 0.0}, 100.0).rate_bps;
    for (double h = 1.0; h < 3000.0; h *= 1.5) {
      const double r = link_budget(radio, {h, 0.0}, {0.0, 0.0}, 100.0).rate_bps;
      CHECK(r < prev);
      prev = r;
    }
  }
}

TEST_CASE("delay and hover") {
  CHECK(transmission_delay(0.0, 5e6) == 0.0);
  CHECK(transmission_delay(1e6, 1e6) == 1.0);
  CHECK_THROWS_AS(transmission_delay(1.0, 0.0), DomainError);
  const std::vector<double> short_ones{1.0, 2.0};
  CHECK(hover_time(short_ones, 30.0, 50.0) == 0.0);
  // 2 d_r / V = 4 s.
  const std::vector<double> one{10.0};
  CHECK(hover_time(one, 25.0, 50.0) == doctest::Approx(6.0));
  // 2 d_r / V = 2 s.
  const std::vector<double> three{3.0, 7.0, 5.0};
  CHECK(hover_time(three, 50.0, 50.0) == doctest::Approx(5.0));
  CHECK(hover_time({}, 30.0, 50.0) == 0.0);

  // Delay of a sampled demand against the reference rate.
  const auto p = presets::paper_tiny();
  Rng rng(p.realization_seed);
  const auto z = sample_realization(p.world, p.task, rng);
  const auto table = make_link_table(p.world);
  for (int u = 0; u < p.world.num_users(); ++u) {
    if (!z.active(u)) continue;
    const auto& c = p.world.clusters[static_cast<std::size_t>(p.world.user_clusters()[static_cast<std::size_t>(u)])];
    const auto pos = p.world.users[static_cast<std::size_t>(u)].position;
    const double h = distance(pos, c.center);
    const double expect = z.bits[static_cast<std::size_t>(u)] / reference_rate(p.world.radio, h, 100.0);
    CHECK(transmission_delay(z.bits[static_cast<std::size_t>(u)], table.rate(0, u)) ==
          doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("request sampling") {
  const auto p = presets::paper_tiny();
  TaskDistribution none = p.task;
  none.p_active = 0.0;
  Rng r0(1);
  CHECK(sample_realization(p.world, none, r0).active_count() == 0);

  TaskDistribution all = p.task;
  all.p_active = 1.0;
  all.t_max_s = p.world.period_s;
  Rng r1(2);
  const auto z = sample_realization(p.world, all, r1);
  CHECK(z.active_count() == p.world.num_users());
  for (int u = 0; u < p.world.num_users(); ++u) {
    CHECK(z.activate_at[static_cast<std::size_t>(u)] >= 0.0);
    CHECK(z.activate_at[static_cast<std::size_t>(u)] <= p.world.period_s);
    CHECK(z.bits[static_cast<std::size_t>(u)] >= all.bits_min);
    CHECK(z.bits[static_cast<std::size_t>(u)] <= all.bits_max);
  }
  z.validate(p.world.period_s);

  Rng a(99);
  Rng b(99);
  const auto za = sample_realization(p.world, p.task, a);
  const auto zb = sample_realization(p.world, p.task, b);
  CHECK(za.bits == zb.bits);
  CHECK(za.activate_at == zb.activate_at);

  TaskDistribution bad = p.task;
  bad.bits_min = -1.0;
  Rng r2(3);
  CHECK_THROWS_AS(sample_realization(p.world, bad, r2), ConfigError);

  TaskDistribution hot = p.task;
  hot.hotspots = Hotspots{1, 1.0, 0.0};
  Rng r3(4);
  const auto zh = sample_realization(p.world, hot, r3);
  int active_clusters = 0;
  for (const auto& c : p.world.clusters) {
    int n = 0;
    for (int u : c.users) n += zh.active(u) ? 1 : 0;
    if (n > 0) {
      ++active_clusters;
      CHECK(n == static_cast<int>(c.users.size()));
    }
  }
  CHECK(active_clusters == 1);
}

TEST_CASE("sampled shadowing") {
  auto w = presets::paper_tiny().world;
  w.radio.shadow_mode = ShadowMode::SampledPerLinkPerEpisode;
  CHECK_THROWS_AS(make_link_table(w), ContractError);
  Rng a(5);
  Rng b(5);
  const auto ta = make_link_table(w, &a);
  const auto tb = make_link_table(w, &b);
  CHECK(ta.rate_bps == tb.rate_bps);
  const auto mean = make_link_table(presets::paper_tiny().world);
  CHECK(ta.rate_bps != mean.rate_bps);
}

TEST_CASE("world validation") {
  auto w = presets::paper_tiny().world;
  w.validate();
  auto same_alt = w;
  same_alt.altitudes_m = {100.0, 100.0};
  CHECK_THROWS_AS(same_alt.validate(), ConfigError);
  auto dup = w;
  dup.clusters[1].users.push_back(0);
  CHECK_THROWS_AS(dup.validate(), ConfigError);
  auto orphan = w;
  orphan.clusters[2].users.pop_back();
  CHECK_THROWS_AS(orphan.validate(), ConfigError);
  auto no_steps = w;
  no_steps.max_steps = 0;
  CHECK_THROWS_AS(no_steps.validate(), ConfigError);
  auto slow = w;
  slow.speed_mps = 0.0;
  CHECK_THROWS_AS(slow.validate(), ConfigError);
  auto bw = w;
  bw.radio.rb_bandwidth_hz = 0.0;
  CHECK_THROWS_AS(bw.validate(), ConfigError);
}

TEST_CASE("json round trip") {
  const auto p = presets::paper_tiny();
  auto w = p.world;
  w.radio.shadow_mode = ShadowMode::SampledPerLinkPerEpisode;
  const auto back = world_from_json(to_json(w));
  CHECK(to_json(back) == to_json(w));
  CHECK(back.radio.shadow_mode == ShadowMode::SampledPerLinkPerEpisode);

  TaskDistribution t = p.task;
  t.hotspots = Hotspots{2, 0.7, 0.1};
  CHECK(to_json(task_from_json(to_json(t))) == to_json(t));

  Rng rng(3);
  const auto z = sample_realization(p.world, p.task, rng);
  const auto zb = realization_from_json(to_json(z));
  CHECK(zb.bits == z.bits);
  CHECK(zb.activate_at == z.activate_at);

  auto j = to_json(w);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(world_from_json(j), ConfigError);
  j.erase("schema_version");
  CHECK_THROWS_AS(world_from_json(j), ConfigError);
  CHECK_THROWS_AS(load_world("/nonexistent/world.json"), ConfigError);
}
