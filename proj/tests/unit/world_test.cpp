#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "vpat/world.hpp"

namespace world = vpat::world;

namespace {

world::ScenarioMap straight() { return world::parse_map(fixture::straight_map_doc()); }

world::WorldState one_vehicle(double speed, double accel) {
  world::WorldState w;
  auto e = fixture::vehicle("car", 0.0, 0.0, 0.0, speed);
  e.accel = accel;
  w.entities["car"] = e;
  return w;
}

}  // namespace

TEST(AdvanceTick, ConstantVelocity) {
  const auto next = world::advance_tick(one_vehicle(10.0, 0.0), {}, {}, 0.1);
  EXPECT_NEAR(next.entity("car").pose.x, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(next.entity("car").speed, 10.0);
  EXPECT_EQ(next.tick, 1);
}

TEST(AdvanceTick, SpeedClampsAtZero) {
  world::Controls c{{"car", {-20.0}}};
  const auto next = world::advance_tick(one_vehicle(1.0, 0.0), {}, c, 0.1);
  EXPECT_EQ(next.entity("car").speed, 0.0);
  EXPECT_GE(next.entity("car").pose.x, 0.0);
}

TEST(AdvanceTick, ClosedFormKinematics) {
  world::Controls c{{"car", {2.0}}};
  const auto next = world::advance_tick(one_vehicle(10.0, 0.0), {}, c, 0.1);
  EXPECT_NEAR(next.entity("car").speed, 10.2, 1e-12);
  EXPECT_NEAR(next.entity("car").pose.x, 1.01, 1e-12);
}

TEST(AdvanceTick, KeepsPriorAccelerationWithoutControl) {
  const auto next = world::advance_tick(one_vehicle(10.0, 2.0), {}, {}, 0.1);
  EXPECT_NEAR(next.entity("car").speed, 10.2, 1e-12);
}

TEST(AdvanceTick, UnknownEntityIsRejected) {
  world::Controls c{{"ghost", {1.0}}};
  try {
    world::advance_tick(one_vehicle(1.0, 0.0), {}, c, 0.1);
    FAIL();
  } catch (const vpat::Error& e) {
    EXPECT_EQ(e.code(), vpat::ErrorCode::kRejectedControl);
  }
}

TEST(AdvanceTick, LaneFollowingAndLaneChangeKeepArcPosition) {
  const auto map = straight();
  world::WorldState w;
  auto e = fixture::vehicle("car", 0, 0, 0, 10.0);
  e.lane = "l0";
  e.s = 50.0;
  world::place(e, map);
  w.entities["car"] = e;
  world::Controls c{{"car", {0.0, world::LaneIntent::kLeft}}};
  w = world::advance_tick(w, map, c, 0.1);
  for (int i = 0; i < 40; ++i) w = world::advance_tick(w, map, {{"car", {0.0}}}, 0.1);
  const auto& car = w.entity("car");
  EXPECT_EQ(car.lane, "l1");
  EXPECT_NEAR(car.s, 50.0 + 41 * 1.0, 1e-9);
  EXPECT_NEAR(car.pose.y, 3.5, 1e-6);
  EXPECT_FALSE(car.changing_lane());
}

TEST(Lane, ProjectionInvertsPointAt) {
  auto map = world::parse_map({{"version", 1},
                               {"name", "bend"},
                               {"lanes", {{{"id", "a"}, {"points", {{0, 0}, {10, 0}, {10, 10}}}, {"speed_limit", 10.0}}}}});
  const auto& lane = map.lane("a");
  EXPECT_DOUBLE_EQ(lane.length(), 20.0);
  for (double s : {0.0, 3.0, 10.0, 14.5, 20.0}) {
    const auto p = lane.point_at(s);
    EXPECT_NEAR(lane.project(p).s, s, 1e-9);
  }
  EXPECT_NEAR(lane.heading_at(15.0), std::acos(-1.0) / 2, 1e-12);
  const auto pose = lane.pose_at(5.0, 1.0);
  EXPECT_NEAR(pose.y, 1.0, 1e-12);
}

TEST(Map, RejectsDanglingNeighbour) {
  auto doc = fixture::straight_map_doc();
  doc["lanes"][0]["left"] = "nowhere";
  EXPECT_THROW(world::parse_map(doc), vpat::Error);
}

TEST(Map, JsonRoundTrip) {
  for (const char* name : {"straight", "merge", "intersection", "roundabout", "signal_corridor"}) {
    const auto m = world::load_map(fixture::data_path(std::string("maps/") + name + ".json"));
    EXPECT_EQ(world::map_to_json(world::parse_map(world::map_to_json(m))), world::map_to_json(m)) << name;
  }
}

TEST(Overlap, RectanglesRespectOrientation) {
  const auto a = fixture::vehicle("a", 0, 0, 0, 0);
  EXPECT_TRUE(world::overlaps(a, fixture::vehicle("b", 4.0, 0, 0, 0)));
  EXPECT_FALSE(world::overlaps(a, fixture::vehicle("b", 5.0, 0, 0, 0)));
  EXPECT_FALSE(world::overlaps(a, fixture::vehicle("b", 0, 2.0, 0, 0)));
  // Rotated a quarter turn, b now reaches 2.4 m toward a.
  EXPECT_TRUE(world::overlaps(a, fixture::vehicle("b", 0, 3.3, std::acos(-1.0) / 2, 0)));
}

TEST(Clock, ZeroBoundGivesZeroOffset) {
  world::ClockModel m;
  m.offset_bound = 0.0;
  vpat::Rng rng(1);
  EXPECT_EQ(world::sample_clock_offset(m, rng), 0.0);
}

TEST(Twin, ZeroNoiseCopiesObservation) {
  world::WorldState reg;
  reg.entities["h"] = fixture::vehicle("h", 0, 0, 0, 0, world::EntityKind::kHdvTwin);
  vpat::Rng rng(1);
  const auto t = world::twin_update({"h", {12.0, -3.0, 0.5}, 7.0}, reg, rng, 0.0);
  EXPECT_DOUBLE_EQ(t.pose.x, 12.0);
  EXPECT_DOUBLE_EQ(t.pose.y, -3.0);
  EXPECT_DOUBLE_EQ(t.speed, 7.0);
}

TEST(Twin, NoiseWithinTenCentimetres) {
  world::WorldState reg;
  reg.entities["h"] = fixture::vehicle("h", 0, 0, 0, 0, world::EntityKind::kHdvTwin);
  vpat::Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const auto t = world::twin_update({"h", {5.0, 5.0, 0.0}, 1.0}, reg, rng);
    ASSERT_LE(std::hypot(t.pose.x - 5.0, t.pose.y - 5.0), 0.10);
  }
}

TEST(Twin, WrongKindOrUnknownIdMisses) {
  world::WorldState reg;
  reg.entities["v"] = fixture::vehicle("v", 0, 0, 0, 0);
  vpat::Rng rng(3);
  for (const char* id : {"v", "missing"}) {
    try {
      world::twin_update({id, {}, 0.0}, reg, rng);
      FAIL();
    } catch (const vpat::Error& e) {
      EXPECT_EQ(e.code(), vpat::ErrorCode::kTwinMiss);
    }
  }
}

TEST(WorldJson, RoundTripIncludingRng) {
  const auto map = straight();
  world::WorldState w;
  w.rng = vpat::Rng(42);
  w.rng.uniform();
  auto e = fixture::vehicle("car", 0, 0, 0, 8.0);
  e.lane = "l0";
  e.s = 20.0;
  world::place(e, map);
  w.entities["car"] = e;
  w.signal_state["sig"] = {world::Phase::kRed, world::Phase::kGreen};
  auto copy = world::world_from_json(world::world_to_json(w));
  EXPECT_EQ(world::world_to_json(copy), world::world_to_json(w));
  EXPECT_EQ(copy.rng.uniform(), w.rng.uniform());
}

TEST(WorldJson, SnapshotCopiesAdvanceIdentically) {
  const auto map = straight();
  world::WorldState w;
  for (int i = 0; i < 3; ++i) {
    auto e = fixture::vehicle("c" + std::to_string(i), 0, 0, 0, 5.0 + i);
    e.lane = i % 2 ? "l1" : "l0";
    e.s = 30.0 * i;
    world::place(e, map);
    w.entities[e.id] = e;
  }
  auto a = w;
  auto b = world::world_from_json(world::world_to_json(w));
  for (int t = 0; t < 100; ++t) {
    world::Controls c{{"c0", {0.5}}, {"c2", {-0.2}}};
    a = world::advance_tick(a, map, c, 0.1);
    b = world::advance_tick(b, map, c, 0.1);
  }
  EXPECT_EQ(world::world_to_json(a).dump(), world::world_to_json(b).dump());
}

TEST(Enums, NamesRoundTrip) {
  for (auto k : {world::EntityKind::kPhysicalCav, world::EntityKind::kCloudControlled, world::EntityKind::kHdvTwin,
                 world::EntityKind::kPedestrian, world::EntityKind::kRsu, world::EntityKind::kVirtualCav,
                 world::EntityKind::kRemoteHdv, world::EntityKind::kBackground}) {
    EXPECT_EQ(world::kind_from_string(world::to_string(k)), k);
  }
  EXPECT_THROW(world::kind_from_string("tank"), vpat::Error);
  EXPECT_TRUE(world::is_physical(world::EntityKind::kHdvTwin));
  EXPECT_FALSE(world::is_physical(world::EntityKind::kVirtualCav));
  EXPECT_TRUE(world::has_obu(world::EntityKind::kVirtualCav));
  EXPECT_FALSE(world::has_obu(world::EntityKind::kBackground));
}
