#include <gtest/gtest.h>

#include <map>

#include "fixtures.hpp"
#include "vpat/bus.hpp"

namespace bus = vpat::bus;
namespace world = vpat::world;

namespace {

bus::MessageEnvelope envelope(const std::string& channel, const std::string& sender) {
  bus::MessageEnvelope e;
  e.channel = channel;
  e.sender = sender;
  e.type = bus::PayloadType::kStateShare;
  return e;
}

}  // namespace

TEST(BusConfig, ValidationRejectsBadValues) {
  auto c = bus::rsu_default();
  c.drop_prob = 1.5;
  EXPECT_THROW(c.validate(), vpat::Error);
  c = bus::rsu_default();
  c.base_latency = -0.1;
  EXPECT_THROW(c.validate(), vpat::Error);
  c = bus::rsu_default();
  c.range = 0.0;
  EXPECT_THROW(c.validate(), vpat::Error);
  c = bus::rsu_default();
  c.drop_prob = 1.0;
  EXPECT_NO_THROW(c.validate());
}

TEST(BusConfig, UnknownChannelIsAConfigError) {
  bus::MessageBus b;
  vpat::Rng rng(1);
  EXPECT_THROW(b.publish(envelope("nope", "a"), 0.0, {}, rng), vpat::Error);
}

TEST(BusDelivery, PerSenderFifoUnderJitter) {
  bus::MessageBus b;
  auto c = bus::rsu_default();
  c.jitter = 0.5;  // far larger than the publish period
  b.add_channel(c);
  vpat::Rng rng(99);
  std::map<std::string, std::uint64_t> last_seen;
  std::size_t delivered = 0;
  for (int t = 0; t < 2500; ++t) {
    const double now = 0.1 * t;
    for (const char* s : {"a", "b", "c", "d"}) b.publish(envelope("rsu", s), now, {}, rng);
    for (const auto& e : b.deliver_due(now)) {
      ASSERT_GT(e.seq, last_seen[e.sender]) << e.sender;
      last_seen[e.sender] = e.seq;
      ++delivered;
    }
  }
  delivered += b.deliver_due(1e9).size();
  EXPECT_EQ(delivered, 10000u);
}

TEST(BusDelivery, OrderedByDeliveryTimeThenSender) {
  bus::MessageBus b;
  b.add_channel({"x", bus::ChannelClass::kPlatform, 0.1, 0.0, 0.0, bus::kUnlimitedRange});
  vpat::Rng rng(1);
  b.publish(envelope("x", "z"), 0.0, {}, rng);
  b.publish(envelope("x", "a"), 0.0, {}, rng);
  EXPECT_TRUE(b.deliver_due(0.05).empty());
  const auto out = b.deliver_due(0.1);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].sender, "a");
  EXPECT_EQ(out[1].sender, "z");
  EXPECT_EQ(b.pending(), 0u);
}

TEST(BusDelivery, RsuLatencyStaysUnder200ms) {
  bus::MessageBus b;
  b.add_channel(bus::rsu_default());
  vpat::Rng rng(5);
  std::vector<bus::MessageEnvelope> all;
  for (int t = 0; t < 10000; ++t) {
    b.publish(envelope("rsu", "rsu" + std::to_string(t % 3)), 0.1 * t, {}, rng);
    for (auto& e : b.deliver_due(0.1 * t)) all.push_back(std::move(e));
  }
  for (auto& e : b.deliver_due(1e9)) all.push_back(std::move(e));
  const auto st = bus::latency_stats(all);
  EXPECT_LT(st.max, 0.2);
  EXPECT_LE(st.p99, st.max);
  EXPECT_GE(st.mean, bus::rsu_default().base_latency);
}

TEST(BusDelivery, DropProbabilityOneDropsEverything) {
  bus::MessageBus b;
  auto c = bus::v2v_default();
  c.drop_prob = 1.0;
  b.add_channel(c);
  vpat::Rng rng(2);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(b.publish(envelope("v2v", "a"), 0.0, {}, rng), bus::PublishResult::kDropped);
  EXPECT_EQ(b.pending(), 0u);
}

TEST(BusDelivery, DropRateMatchesProbability) {
  bus::MessageBus b;
  auto c = bus::v2v_default();
  c.drop_prob = 0.3;
  b.add_channel(c);
  vpat::Rng rng(3);
  int dropped = 0;
  for (int i = 0; i < 10000; ++i) dropped += b.publish(envelope("v2v", "a"), 0.0, {}, rng) == bus::PublishResult::kDropped;
  EXPECT_NEAR(dropped / 10000.0, 0.3, 0.02);
}

TEST(BusDelivery, SenderClockOffsetStampsSendTs) {
  bus::MessageBus b;
  b.add_channel(bus::platform_default());
  vpat::Rng rng(4);
  b.publish(envelope("platform", "a"), 2.0, {}, rng, 0.004);
  const auto e = b.deliver_due(10.0).at(0);
  EXPECT_DOUBLE_EQ(e.send_sim, 2.0);
  EXPECT_DOUBLE_EQ(e.send_ts, 2.004);
}

TEST(BusReceivers, BroadcastRangeCutoffIsExact) {
  world::WorldState w;
  w.entities["tx"] = fixture::vehicle("tx", 0, 0, 0, 0);
  w.entities["in"] = fixture::vehicle("in", 1000.0, 0, 0, 0);
  w.entities["out"] = fixture::vehicle("out", 1000.0 + 1e-6, 0, 0, 0);
  w.entities["diag"] = fixture::vehicle("diag", 600.0, 800.0, 0, 0);
  w.entities["deaf"] = fixture::vehicle("deaf", 10.0, 0, 0, 0, world::EntityKind::kBackground);
  auto e = envelope("rsu", "tx");
  e.origin = {0.0, 0.0};
  const auto r = bus::receivers(e, bus::rsu_default(), w);
  EXPECT_EQ(r, (std::vector<std::string>{"diag", "in"}));
}

TEST(BusReceivers, PlatformGoesToPlatform) {
  world::WorldState w;
  EXPECT_EQ(bus::receivers(envelope("platform", "a"), bus::platform_default(), w),
            std::vector<std::string>{"platform"});
}

TEST(BusState, JsonRoundTripPreservesQueueAndSequence) {
  bus::MessageBus b;
  b.add_channel(bus::rsu_default());
  b.add_channel(bus::platform_default());
  vpat::Rng rng(8);
  for (int i = 0; i < 5; ++i) b.publish(envelope("rsu", "r"), 0.1 * i, {1.0, 2.0, 0.0}, rng);
  auto copy = bus::MessageBus::from_json(b.to_json());
  EXPECT_EQ(copy.to_json(), b.to_json());
  vpat::Rng r1(9), r2(9);
  b.publish(envelope("rsu", "r"), 1.0, {}, r1);
  copy.publish(envelope("rsu", "r"), 1.0, {}, r2);
  EXPECT_EQ(copy.to_json(), b.to_json());
}

TEST(Clock, OffsetsStayWithinModeBounds) {
  const std::pair<world::ClockMode, double> modes[] = {
      {world::ClockMode::kNtp, 10e-3}, {world::ClockMode::kPtp, 50e-9}, {world::ClockMode::kGnss, 10e-9}};
  vpat::Rng rng(17);
  for (const auto& [mode, bound] : modes) {
    auto m = world::ClockModel::for_mode(mode);
    EXPECT_DOUBLE_EQ(m.offset_bound, bound);
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double o = world::sample_clock_offset(m, rng);
      ASSERT_LE(std::abs(o), bound);
      EXPECT_EQ(m.node_offset, o);
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
    // Draws cover most of the interval on both sides.
    EXPECT_LT(lo, -0.9 * bound);
    EXPECT_GT(hi, 0.9 * bound);
  }
}

TEST(Clock, ModeNamesRoundTrip) {
  for (auto m : {world::ClockMode::kNtp, world::ClockMode::kPtp, world::ClockMode::kGnss}) {
    EXPECT_EQ(world::clock_mode_from_string(world::to_string(m)), m);
  }
  EXPECT_THROW(world::clock_mode_from_string("sundial"), vpat::Error);
}
