#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vpat/cooperation.hpp"

namespace coop = vpat::cooperation;
namespace bus = vpat::bus;
namespace world = vpat::world;
using world::Phase;

namespace {

bus::MessageEnvelope msg(const std::string& sender, bus::PayloadType type, double sent, double delivered,
                         nlohmann::json body = nlohmann::json::object()) {
  bus::MessageEnvelope e;
  e.channel = "v2v";
  e.sender = sender;
  e.type = type;
  e.send_sim = sent;
  e.send_ts = sent;
  e.deliver_ts = delivered;
  body["session"] = "s1";
  e.body = body;
  return e;
}

coop::CdaSession session(coop::CdaLevel level) {
  coop::CdaSession s;
  s.id = "s1";
  s.level = level;
  s.participants = {"A", "B"};
  s.start = 0.0;
  s.end = 2.0;
  return s;
}

std::vector<bus::MessageEnvelope> state_trace(double latency, double skip_from = -1.0, double skip_to = -1.0) {
  std::vector<bus::MessageEnvelope> t;
  for (int k = 0; k <= 20; ++k) {
    const double ts = 0.1 * k;
    for (const char* s : {"A", "B"}) {
      if (std::string(s) == "B" && ts > skip_from && ts < skip_to) continue;
      t.push_back(msg(s, bus::PayloadType::kStateShare, ts, ts + latency));
    }
  }
  return t;
}

}  // namespace

TEST(Cda, StateSharingPassesAtTenHertz) {
  const auto v = coop::validate_cda_session(state_trace(0.05), session(coop::CdaLevel::kStateSharing));
  EXPECT_TRUE(v.pass);
  EXPECT_TRUE(v.violations.empty());
}

TEST(Cda, StateSharingFailsOnGapOrLatency) {
  auto v = coop::validate_cda_session(state_trace(0.05, 0.45, 1.05), session(coop::CdaLevel::kStateSharing));
  ASSERT_FALSE(v.pass);
  EXPECT_EQ(v.violations[0].rule, "rate");
  EXPECT_EQ(v.violations[0].subject, "B");
  v = coop::validate_cda_session(state_trace(0.35), session(coop::CdaLevel::kStateSharing));
  ASSERT_FALSE(v.pass);
  EXPECT_EQ(v.violations[0].rule, "latency");
}

TEST(Cda, MessagesOfOtherSessionsAreIgnored) {
  auto trace = state_trace(0.05);
  for (auto& e : trace) e.body["session"] = "other";
  EXPECT_FALSE(coop::validate_cda_session(trace, session(coop::CdaLevel::kStateSharing)).pass);
}

TEST(Cda, IntentSharingNeedsDeliveryBeforeConflictEntry) {
  auto s = session(coop::CdaLevel::kIntentSharing);
  s.conflict_entry = {{"A", 1.5}, {"B", 1.8}};
  std::vector<bus::MessageEnvelope> ok{msg("A", bus::PayloadType::kIntentShare, 0.5, 0.6),
                                       msg("B", bus::PayloadType::kIntentShare, 0.5, 0.6)};
  EXPECT_TRUE(coop::validate_cda_session(ok, s).pass);
  std::vector<bus::MessageEnvelope> late{msg("A", bus::PayloadType::kIntentShare, 0.5, 0.6),
                                         msg("B", bus::PayloadType::kIntentShare, 1.4, 1.6)};
  const auto v = coop::validate_cda_session(late, s);
  ASSERT_FALSE(v.pass);
  ASSERT_EQ(v.violations.size(), 1u);
  EXPECT_EQ(v.violations[0].rule, "intent_late");
  EXPECT_EQ(v.violations[0].subject, "A");
}

TEST(Cda, CoopDecisionDetectsPriorityCycle) {
  const auto s = session(coop::CdaLevel::kCoopDecision);
  std::vector<bus::MessageEnvelope> agree{
      msg("A", bus::PayloadType::kDecisionProposal, 0.1, 0.2, {{"order", {"A", "B"}}}),
      msg("B", bus::PayloadType::kDecisionProposal, 0.1, 0.2, {{"order", {"A", "B"}}})};
  EXPECT_TRUE(coop::validate_cda_session(agree, s).pass);
  std::vector<bus::MessageEnvelope> clash{
      msg("A", bus::PayloadType::kDecisionProposal, 0.1, 0.2, {{"order", {"A", "B"}}}),
      msg("B", bus::PayloadType::kDecisionProposal, 0.1, 0.2, {{"order", {"B", "A"}}})};
  const auto v = coop::validate_cda_session(clash, s);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.cycle, (std::vector<std::string>{"A", "B"}));
  std::vector<bus::MessageEnvelope> missing{agree[0]};
  EXPECT_EQ(coop::validate_cda_session(missing, s).violations.at(0).rule, "missing_proposal");
}

TEST(Cda, CoopControlNeedsTimelyAck) {
  auto s = session(coop::CdaLevel::kCoopControl);
  s.commands = {"c1"};
  const nlohmann::json cmd{{"command_id", "c1"}, {"target", "B"}, {"valid_until", 0.5}};
  const nlohmann::json ack{{"command_id", "c1"}, {"ack", true}};
  std::vector<bus::MessageEnvelope> ok{msg("A", bus::PayloadType::kControlCommand, 0.1, 0.15, cmd),
                                       msg("B", bus::PayloadType::kControlCommand, 0.2, 0.25, ack)};
  EXPECT_TRUE(coop::validate_cda_session(ok, s).pass);
  std::vector<bus::MessageEnvelope> late{ok[0], msg("B", bus::PayloadType::kControlCommand, 0.5, 0.6, ack)};
  EXPECT_EQ(coop::validate_cda_session(late, s).violations.at(0).rule, "unacknowledged");
  std::vector<bus::MessageEnvelope> wrong{ok[0], msg("A", bus::PayloadType::kControlCommand, 0.2, 0.25, ack)};
  EXPECT_FALSE(coop::validate_cda_session(wrong, s).pass);
  EXPECT_EQ(coop::validate_cda_session({}, s).violations.at(0).rule, "missing_command");
}

TEST(Cda, UnknownSessionIsAnError) {
  try {
    coop::validate_cda_session({}, std::map<std::string, coop::CdaSession>{}, "nope");
    FAIL();
  } catch (const vpat::Error& e) {
    EXPECT_EQ(e.code(), vpat::ErrorCode::kUnknownSession);
  }
}

TEST(Consensus, Examples) {
  auto c = coop::consensus_check({{"A", {"A", "B"}}, {"B", {"A", "B"}}});
  EXPECT_TRUE(c.agreed);
  EXPECT_EQ(c.order, (std::vector<std::string>{"A", "B"}));
  c = coop::consensus_check({{"A", {"A", "B"}}, {"B", {"B", "C"}}});
  EXPECT_EQ(c.order, (std::vector<std::string>{"A", "B", "C"}));
  c = coop::consensus_check({{"A", {"A", "B"}}, {"B", {"B", "A"}}});
  EXPECT_FALSE(c.agreed);
  EXPECT_EQ(c.conflict, (std::vector<std::string>{"A", "B"}));
}

TEST(Consensus, MatchesBruteForceCycleCheck) {
  vpat::Rng rng(77);
  const std::vector<std::string> ids{"A", "B", "C", "D", "E", "F"};
  int disagreements = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(5);
    std::vector<coop::DecisionProposal> props;
    std::vector<std::vector<std::string>> orders;
    for (std::size_t p = 0; p < 1 + rng.index(4); ++p) {
      std::vector<std::string> order;
      for (std::size_t k = 0; k < 2 + rng.index(3); ++k) {
        const auto& id = ids[rng.index(n)];
        if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
      }
      props.push_back({ids[p], order});
      orders.push_back(order);
    }
    const auto c = coop::consensus_check(props);
    ASSERT_EQ(c.agreed, oracle::precedences_consistent(orders)) << trial;
    if (c.agreed) {
      for (const auto& o : orders) {
        for (std::size_t i = 0; i + 1 < o.size(); ++i) {
          const auto pa = std::find(c.order.begin(), c.order.end(), o[i]);
          const auto pb = std::find(c.order.begin(), c.order.end(), o[i + 1]);
          ASSERT_LT(pa, pb);
        }
      }
    } else {
      ++disagreements;
      EXPECT_GE(c.conflict.size(), 2u);
    }
  }
  EXPECT_GT(disagreements, 10);
}

namespace {

coop::SignalPlan plan(std::vector<std::pair<Phase, double>> steps, double offset = 0.0) {
  coop::SignalPlan p;
  p.signal = "sig";
  p.offset = offset;
  for (auto [ph, d] : steps) p.cycle.push_back({{ph}, d});
  return p;
}

}  // namespace

TEST(Spat, BoundaryAndPeriodicity) {
  const auto p = plan({{Phase::kGreen, 20}, {Phase::kYellow, 3}, {Phase::kRed, 37}});
  EXPECT_EQ(coop::spat_at(p, 19.8).phase[0], Phase::kGreen);
  EXPECT_EQ(coop::spat_next(coop::spat_at(p, 19.8), 0.1).phase[0], Phase::kGreen);
  EXPECT_EQ(coop::spat_next(coop::spat_next(coop::spat_at(p, 19.8), 0.1), 0.1).phase[0], Phase::kYellow);
  for (double t : {0.0, 7.3, 21.0, 44.4}) {
    const auto a = coop::spat_at(p, t), b = coop::spat_at(p, t + 60.0);
    EXPECT_EQ(a.phase, b.phase);
    EXPECT_NEAR(a.time_to_change, b.time_to_change, 1e-9);
  }
  const auto a = coop::spat_at(p, 5.0), b = coop::spat_at(p, 8.0);
  EXPECT_EQ(a.phase, b.phase);
  EXPECT_NEAR(a.time_to_change - b.time_to_change, 3.0, 1e-12);
}

TEST(Spat, InvalidPlansAreRejected) {
  EXPECT_THROW(coop::spat_at(plan({}), 0.0), vpat::Error);
  EXPECT_THROW(coop::spat_at(plan({{Phase::kGreen, 0.0}}), 0.0), vpat::Error);
}

TEST(Glosa, AdvisesTopSpeedWhenItArrivesInGreen) {
  const auto p = plan({{Phase::kRed, 10}, {Phase::kGreen, 20}, {Phase::kRed, 30}});
  const auto a = coop::glosa_advice(200.0, coop::spat_at(p, 0.0), 0.0, 15.0);
  ASSERT_FALSE(a.stop);
  EXPECT_DOUBLE_EQ(a.speed, 15.0);
  EXPECT_NEAR(a.arrival, 200.0 / 15.0, 1e-12);
}

TEST(Glosa, FallsBackToNextCycle) {
  const auto p = plan({{Phase::kRed, 5}, {Phase::kGreen, 5}, {Phase::kRed, 50}});
  const auto a = coop::glosa_advice(200.0, coop::spat_at(p, 0.0), 0.0, 15.0);
  ASSERT_FALSE(a.stop);
  EXPECT_GT(a.arrival, 65.0);
  EXPECT_LT(a.arrival, 70.0);
  EXPECT_LT(a.speed, 15.0);
}

TEST(Glosa, CurrentlyGreenWithTimeToSpare) {
  const auto p = plan({{Phase::kGreen, 30}, {Phase::kRed, 30}});
  EXPECT_DOUBLE_EQ(coop::glosa_advice(100.0, coop::spat_at(p, 0.0), 0.0, 12.0).speed, 12.0);
}

TEST(Glosa, NoFeasibleSpeedMeansStop) {
  const auto p = plan({{Phase::kGreen, 2}, {Phase::kRed, 100}});
  EXPECT_TRUE(coop::glosa_advice(300.0, coop::spat_at(p, 1.0), 10.0, 15.0).stop);
}

TEST(Glosa, RandomConfigsArriveStrictlyInGreen) {
  vpat::Rng rng(500);
  int advised = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = plan({{Phase::kGreen, rng.uniform(5, 40)}, {Phase::kYellow, rng.uniform(2, 4)},
                         {Phase::kRed, rng.uniform(5, 50)}},
                        rng.uniform(0, 90));
    const double now = rng.uniform(0, 200), dist = rng.uniform(5, 600);
    const double v_min = rng.uniform(0, 6), v_max = rng.uniform(v_min + 0.5, 22);
    const auto a = coop::glosa_advice(dist, coop::spat_at(p, now), v_min, v_max);
    if (a.stop) continue;
    ++advised;
    ASSERT_GE(a.speed, v_min);
    ASSERT_LE(a.speed, v_max);
    const double arrive = now + dist / a.speed;
    for (double eps : {-1e-6, 0.0, 1e-6}) ASSERT_EQ(coop::spat_at(p, arrive + eps).phase[0], Phase::kGreen) << trial;
  }
  EXPECT_GT(advised, 250);
}

namespace {

struct MecScene {
  world::ScenarioMap map = world::parse_map(fixture::straight_map_doc());
  std::map<std::string, world::EntityState> view;
  world::EntityState ego;
  coop::Rsu rsu{"rsu1", {100.0, 5.0}, 1000.0};

  MecScene() {
    ego = fixture::vehicle("ego", 0, 0, 0, 10.0);
    ego.lane = "l0";
    ego.s = 100.0;
    ego.route = {"l0"};
    world::place(ego, map);
    view["ego"] = ego;
  }
};

}  // namespace

TEST(Mec, EmptySceneHasNoWarnings) {
  MecScene sc;
  EXPECT_TRUE(coop::mec_warnings(sc.view, sc.ego, sc.map, sc.rsu, {}).empty());
}

TEST(Mec, PedestrianAheadRaisesVruAlert) {
  MecScene sc;
  sc.view["ped"] = fixture::vehicle("ped", 120.0, 0.5, 1.5, 1.0, world::EntityKind::kPedestrian);
  const auto w = coop::mec_warnings(sc.view, sc.ego, sc.map, sc.rsu, {});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].kind, coop::WarningKind::kVruAlert);
  EXPECT_NEAR(w[0].value, 20.0, 1e-9);
  sc.view["ped"].pose.x = 80.0;  // behind
  EXPECT_TRUE(coop::mec_warnings(sc.view, sc.ego, sc.map, sc.rsu, {}).empty());
}

TEST(Mec, OutOfCoverageGivesNothing) {
  MecScene sc;
  sc.view["ped"] = fixture::vehicle("ped", 120.0, 0.0, 0, 0, world::EntityKind::kPedestrian);
  sc.rsu.position = {2000.0, 0.0};
  EXPECT_TRUE(coop::mec_warnings(sc.view, sc.ego, sc.map, sc.rsu, {}).empty());
}

TEST(Mec, OccludedCrossingVehicleRaisesNlosHazard) {
  auto doc = fixture::straight_map_doc();
  doc["lanes"].push_back({{"id", "cross"}, {"points", {{200.0, -100.0}, {200.0, 100.0}}}, {"speed_limit", 15.0}});
  doc["conflict_points"] = {{{"id", "cp"}, {"lane_a", "l0"}, {"s_a", 200.0}, {"lane_b", "cross"}, {"s_b", 100.0},
                             {"occluded", true}}};
  MecScene sc;
  sc.map = world::parse_map(doc);
  // Both 40 m from the crossing at 10 m/s: they come within 4 m after 4 s less a little.
  sc.ego.s = 160.0;
  world::place(sc.ego, sc.map);
  auto other = fixture::vehicle("x", 0, 0, 0, 10.0);
  other.lane = "cross";
  other.s = 60.0;
  world::place(other, sc.map);
  sc.view = {{"ego", sc.ego}, {"x", other}};
  const auto w = coop::mec_warnings(sc.view, sc.ego, sc.map, sc.rsu, {});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].kind, coop::WarningKind::kNlosHazard);
  EXPECT_NEAR(w[0].value, 4.0 - 4.0 / std::sqrt(2.0) / 10.0, 1e-9);
}

TEST(Mec, ZoneAheadOnRoute) {
  MecScene sc;
  const auto w = coop::mec_warnings(sc.view, sc.ego, sc.map, sc.rsu,
                                    {{coop::WarningKind::kConstruction, "l0", 250.0, 300.0},
                                     {coop::WarningKind::kConstruction, "l1", 150.0, 200.0}});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].kind, coop::WarningKind::kConstruction);
  EXPECT_NEAR(w[0].value, 150.0, 1e-9);
}
