#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpat/rng.hpp"
#include "vpat/runlog.hpp"
#include "vpat/scenario.hpp"
#include "vpat/world.hpp"

namespace fixture {

inline std::string data_path(const std::string& rel) { return std::string(VPAT_DATA_DIR) + "/" + rel; }

inline vpat::harness::ScenarioSpec scenario(const std::string& name) {
  return vpat::harness::load_scenario(data_path("scenarios/" + name + ".json"));
}

inline std::vector<double> random_series(vpat::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(lo, hi);
  return x;
}

/// Straight two-lane map, 500 m, 15 m/s limit.
inline nlohmann::json straight_map_doc(double length = 500.0) {
  return {{"version", 1},
          {"name", "test_straight"},
          {"lanes",
           {{{"id", "l0"}, {"points", {{0.0, 0.0}, {length, 0.0}}}, {"speed_limit", 15.0}, {"left", "l1"}},
            {{"id", "l1"}, {"points", {{0.0, 3.5}, {length, 3.5}}}, {"speed_limit", 15.0}, {"right", "l0"}}}}};
}

/// Minimal spec document on the straight map with one internally driven VUT.
inline nlohmann::json minimal_spec_doc() {
  return {{"version", 1},
          {"id", "minimal"},
          {"map", straight_map_doc()},
          {"duration", 5.0},
          {"seed", 1},
          {"roster", {{{"id", "vut"}, {"kind", "physical_cav"}, {"lane", "l0"}, {"s", 10.0}, {"speed", 10.0},
                       {"vut", true}}}}};
}

inline vpat::world::EntityState vehicle(const std::string& id, double x, double y, double heading, double speed,
                                        vpat::world::EntityKind kind = vpat::world::EntityKind::kVirtualCav) {
  vpat::world::EntityState e;
  e.id = id;
  e.kind = kind;
  e.pose = {x, y, heading};
  e.speed = speed;
  return e;
}

/// Hand-built log on the straight map: a slow, smooth VUT closing on a
/// slower leader while its follower brakes hard. Scores high on comfort
/// and compliance and low on safety, efficiency and coordination.
inline vpat::runlog::RunLog profile_log() {
  using vpat::world::EntityKind;
  vpat::runlog::Writer w;
  w.header({{"scenario_id", "profile"}, {"algorithm", "constructed"}, {"algorithm_version", "1"},
            {"vuts", {"vut"}}, {"dt", 0.1}, {"map", straight_map_doc()}});
  auto on_lane = [](const std::string& id, EntityKind kind, double s, double v, double a) {
    auto e = vehicle(id, s, 0.0, 0.0, v, kind);
    e.lane = "l0";
    e.s = s;
    e.accel = a;
    e.route = {"l0"};
    return e;
  };
  for (int k = 0; k < 25; ++k) {
    const double t = 0.1 * k;
    vpat::runlog::TickRecord r;
    r.tick = k;
    r.t = t;
    r.entities["vut"] = on_lane("vut", EntityKind::kPhysicalCav, 50.0 + 4.0 * t, 4.0, 0.0);
    r.entities["lead"] = on_lane("lead", EntityKind::kVirtualCav, 60.0 + 2.0 * t, 2.0, 0.0);
    r.entities["follow"] = on_lane("follow", EntityKind::kVirtualCav, 40.0 + 4.0 * t, 4.0, -5.0);
    w.tick(r);
  }
  w.footer({{"ticks", 25}});
  return w.finish();
}

}  // namespace fixture
