#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "fixtures.hpp"
#include "vpat/console.hpp"
#include "vpat/scenario.hpp"

namespace con = vpat::console;
namespace h = vpat::harness;
using nlohmann::json;

namespace {

std::string bytes(std::initializer_list<int> v) {
  std::string s;
  for (int b : v) s.push_back(static_cast<char>(b));
  return s;
}

/// Reads messages until `pred` holds or the timeout passes.
std::optional<json> wait_for(con::Client& c, const std::function<bool(const json&)>& pred,
                             std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  const auto end = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < end) {
    auto m = c.recv(std::chrono::milliseconds(200));
    if (m && pred(*m)) return m;
  }
  return std::nullopt;
}

}  // namespace

TEST(WebSocket, AcceptKeyMatchesRfcExample) {
  EXPECT_EQ(con::accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, RfcExampleFrames) {
  EXPECT_EQ(con::encode_ws_frame("Hello"), bytes({0x81, 0x05, 0x48, 0x65, 0x6c, 0x6c, 0x6f}));
  EXPECT_EQ(con::encode_ws_frame("Hello", con::kText, 0x37fa213du),
            bytes({0x81, 0x85, 0x37, 0xfa, 0x21, 0x3d, 0x7f, 0x9f, 0x4d, 0x51, 0x58}));

  con::WsReader server(true);
  server.feed(bytes({0x81, 0x85, 0x37, 0xfa, 0x21, 0x3d, 0x7f, 0x9f, 0x4d, 0x51, 0x58}));
  auto m = server.next();
  ASSERT_TRUE(m);
  EXPECT_EQ(m->payload, "Hello");
  EXPECT_EQ(m->opcode, con::kText);

  // 256-byte payload uses the 16-bit length form.
  const std::string big(256, 'a');
  const std::string f = con::encode_ws_frame(big);
  EXPECT_EQ(f.substr(0, 4), bytes({0x81, 0x7E, 0x01, 0x00}));
  const std::string huge(70000, 'b');
  EXPECT_EQ(con::encode_ws_frame(huge).substr(0, 10), bytes({0x81, 0x7F, 0, 0, 0, 0, 0, 0x01, 0x11, 0x70}));
}

TEST(WebSocket, ReaderRoundTripsAcrossSplits) {
  vpat::Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::string payload(static_cast<std::size_t>(rng.uniform(0, 70000)), static_cast<char>('a' + trial % 26));
    const bool masked = trial % 2 == 0;
    const std::string f = con::encode_ws_frame(payload, con::kText, masked ? std::optional<std::uint32_t>(trial * 977u) : std::nullopt);
    con::WsReader r(masked);
    const std::size_t cut = static_cast<std::size_t>(rng.uniform(0, static_cast<double>(f.size())));
    r.feed(f.substr(0, cut));
    auto m = r.next();
    if (cut < f.size()) {
      EXPECT_FALSE(m);
      r.feed(f.substr(cut));
      m = r.next();
    }
    ASSERT_TRUE(m);
    EXPECT_EQ(m->payload, payload);
  }
}

TEST(WebSocket, ReaderRejectsWrongMaskingAndFragments) {
  con::WsReader server(true);
  server.feed(con::encode_ws_frame("x"));
  EXPECT_THROW(server.next(), vpat::Error);
  con::WsReader client(false);
  client.feed(con::encode_ws_frame("x", con::kText, 1u));
  EXPECT_THROW(client.next(), vpat::Error);
  con::WsReader frag(false);
  frag.feed(bytes({0x01, 0x01, 0x41}));
  EXPECT_THROW(frag.next(), vpat::Error);
}

TEST(Command, ParsesAndRejects) {
  const auto c = con::parse_command({{"cmd", "takeover"}, {"vehicle", "vut"}, {"id", "c1"}, {"reason", "check"}});
  EXPECT_EQ(c.kind, h::CommandKind::kTakeover);
  EXPECT_EQ(c.vehicle, "vut");
  EXPECT_EQ(c.id, "c1");
  EXPECT_EQ(c.reason, "check");
  EXPECT_EQ(con::parse_command({{"cmd", "set_intensity"}, {"value", 0.25}}).value, 0.25);
  EXPECT_EQ(con::parse_command({{"cmd", "pause"}}).kind, h::CommandKind::kPause);

  for (const json& bad : {json::array({1}), json{{"cmd", 3}}, json{{"cmd", "explode"}}, json{{"cmd", "release"}},
                          json{{"cmd", "set_intensity"}, {"value", "high"}}}) {
    try {
      con::parse_command(bad);
      ADD_FAILURE() << bad;
    } catch (const vpat::Error& e) {
      EXPECT_EQ(e.code(), vpat::ErrorCode::kProtocol) << bad;
    }
  }
}

TEST(Console, ServerRejectsPlainHttp) {
  con::Server srv(0);
  srv.start();
  auto s = vpat::net::connect_tcp("127.0.0.1", srv.port(), std::chrono::milliseconds(1000));
  vpat::net::send_all(s, "GET / HTTP/1.1\r\nHost: x\r\n\r\n");
  std::string got;
  vpat::net::recv_some(s, got, std::chrono::steady_clock::now() + std::chrono::seconds(2));
  EXPECT_EQ(got.rfind("HTTP/1.1 400", 0), 0u) << got;
  srv.stop();
}

TEST(Console, EndToEndTakeoverAndIntensity) {
  auto doc = fixture::minimal_spec_doc();
  doc["duration"] = 2.0;
  h::Simulation sim(h::parse_scenario(doc));
  h::Command pause;
  pause.kind = h::CommandKind::kPause;
  sim.submit(pause);

  con::Server srv(0);
  con::route_commands(srv, sim);
  srv.start();
  con::Client client("127.0.0.1", srv.port());

  vpat::runlog::RunLog log;
  std::thread runner([&] { log = con::serve(sim, srv, {0.01, {}}); });

  ASSERT_TRUE(wait_for(client, [](const json& m) { return m["type"] == "state" && m["paused"] == true; }));
  client.send({{"cmd", "takeover"}, {"vehicle", "vut"}, {"id", "t1"}, {"reason", "e2e"}});
  client.send({{"cmd", "set_intensity"}, {"value", 0.7}, {"id", "i1"}});
  client.send({{"cmd", "release"}, {"vehicle", "ghost"}, {"id", "r1"}});
  client.send({{"cmd", "nonsense"}, {"id", "x1"}});
  client.send(json::array({1, 2}));
  client.send({{"cmd", "resume"}, {"id", "go"}});

  std::map<std::string, json> replies;
  std::optional<json> manual_frame;
  const auto end = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (std::chrono::steady_clock::now() < end) {
    auto m = client.recv(std::chrono::milliseconds(200));
    if (!m) continue;
    if ((*m)["type"] == "ack" || (*m)["type"] == "nack") replies[(*m)["id"].get<std::string>()] = *m;
    if ((*m)["type"] == "state" && !(*m)["entities"].empty() && (*m)["entities"][0]["control_mode"] == "manual" &&
        !manual_frame) {
      manual_frame = m;
    }
    if ((*m)["type"] == "state" && (*m)["done"] == true) break;
  }
  runner.join();
  client.close();
  srv.stop();

  EXPECT_EQ(replies["t1"]["type"], "ack");
  EXPECT_EQ(replies["i1"]["type"], "ack");
  EXPECT_EQ(replies["r1"]["type"], "nack");
  EXPECT_EQ(replies["x1"]["type"], "nack");
  EXPECT_EQ(replies[""]["type"], "nack");
  EXPECT_EQ(replies["go"]["type"], "ack");
  ASSERT_TRUE(manual_frame);
  EXPECT_DOUBLE_EQ((*manual_frame)["intensity"].get<double>(), 0.7);

  const auto takeovers = log.events_of("takeover");
  ASSERT_EQ(takeovers.size(), 1u);
  EXPECT_EQ(takeovers[0].data["initiator"], "operator");
  EXPECT_EQ(takeovers[0].data["reason"], "e2e");
  EXPECT_EQ(takeovers[0].tick, 0);
  EXPECT_EQ(log.ticks.size(), 21u);
  for (const auto& t : log.ticks) {
    EXPECT_EQ(t.entities.at("vut").mode, vpat::world::ControlMode::kManual);
    EXPECT_DOUBLE_EQ(t.intensity, 0.7);
  }
  EXPECT_EQ(log.footer["reason"], "duration");
}

TEST(Console, PausedUnpacedServeDoesNotFlood) {
  h::Simulation sim(h::parse_scenario(fixture::minimal_spec_doc()));
  h::Command pause;
  pause.kind = h::CommandKind::kPause;
  sim.submit(pause);

  con::Server srv(0);
  con::route_commands(srv, sim);
  srv.start();
  con::Client client("127.0.0.1", srv.port());
  std::atomic<bool> stop{false};
  std::thread runner([&] { con::serve(sim, srv, {0.0, [&] { return stop.load(); }}); });

  ASSERT_TRUE(wait_for(client, [](const json& m) { return m["type"] == "state" && m["paused"] == true; }));
  int frames = 0;
  const auto end = std::chrono::steady_clock::now() + std::chrono::milliseconds(600);
  while (std::chrono::steady_clock::now() < end) {
    if (auto m = client.recv(std::chrono::milliseconds(50)); m && (*m)["type"] == "state") ++frames;
  }
  stop = true;
  runner.join();
  client.close();
  srv.stop();
  EXPECT_GE(frames, 2);
  EXPECT_LE(frames, 12);
  EXPECT_EQ(sim.tick(), 0);
}
