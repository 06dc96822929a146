#include "vpat/aut.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "vpat/traffic.hpp"

namespace vpat::aut {

using nlohmann::json;

namespace {

[[noreturn]] void protocol(const std::string& what) { throw Error(ErrorCode::kProtocol, what); }

std::uint32_t crc(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

bool parse_hex8(std::string_view s, std::uint32_t& out) {
  if (s.size() != 8) return false;
  out = 0;
  for (char c : s) {
    out <<= 4;
    if (c >= '0' && c <= '9') {
      out |= static_cast<std::uint32_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      out |= static_cast<std::uint32_t>(c - 'a' + 10);
    } else {
      return false;
    }
  }
  return true;
}

double finite_number(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) protocol(std::string("field '") + key + "' must be a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) protocol(std::string("field '") + key + "' is not finite");
  return v;
}

void check_envelope(const json& msg) {
  if (!msg.is_object()) protocol("message is not an object");
  if (!msg.contains("type") || !msg["type"].is_string()) protocol("message without type");
  if (!msg.contains("version") || !msg["version"].is_number_integer()) protocol("message without version");
}

}  // namespace

std::string encode_frame(const json& msg) {
  const std::string payload = msg.dump();
  if (payload.size() > kMaxPayload) throw Error(ErrorCode::kProtocol, "payload too large");
  char head[kHeaderSize + 1];
  std::snprintf(head, sizeof head, "VPAT %08x %08x\n", static_cast<unsigned>(payload.size()),
                static_cast<unsigned>(crc(payload)));
  return std::string(head, kHeaderSize) + payload + "\n";
}

std::optional<json> FrameDecoder::next() {
  static constexpr std::string_view kMagic = "VPAT ";
  const std::size_t have = std::min(buf_.size(), kMagic.size());
  if (std::string_view(buf_).substr(0, have) != kMagic.substr(0, have)) protocol("bad frame magic");
  if (buf_.size() < kHeaderSize) return std::nullopt;
  const std::string_view head(buf_.data(), kHeaderSize);
  std::uint32_t len = 0, sum = 0;
  if (!parse_hex8(head.substr(5, 8), len) || head[13] != ' ' || !parse_hex8(head.substr(14, 8), sum) ||
      head[22] != '\n') {
    protocol("malformed frame header");
  }
  if (len > kMaxPayload) protocol("frame length out of range");
  if (buf_.size() < kHeaderSize + len + 1) return std::nullopt;
  const std::string_view payload(buf_.data() + kHeaderSize, len);
  if (buf_[kHeaderSize + len] != '\n') protocol("frame terminator missing");
  if (crc(payload) != sum) protocol("frame checksum mismatch");
  json msg;
  try {
    msg = json::parse(payload);
  } catch (const json::parse_error& e) {
    protocol(std::string("frame payload is not JSON: ") + e.what());
  }
  buf_.erase(0, kHeaderSize + len + 1);
  check_envelope(msg);
  return msg;
}

json decode_frame(std::string_view bytes) {
  FrameDecoder d;
  d.feed(bytes);
  auto msg = d.next();
  if (!msg) protocol("truncated frame");
  if (d.buffered() != 0) protocol("trailing bytes after frame");
  return *msg;
}

json control_to_json(const ControlReply& c) {
  json emit = json::array();
  for (const auto& e : c.emit) emit.push_back({{"channel", e.channel}, {"payload", bus::to_string(e.type)}, {"body", e.body}});
  return {{"type", "control"},   {"version", kProtocolVersion}, {"tick", c.tick},
          {"accel", c.accel},    {"lane_intent", world::to_string(c.intent)},
          {"straddle", c.straddle}, {"emit", emit}};
}

ControlReply parse_control(const json& j) {
  check_envelope(j);
  if (j["type"] != "control") protocol("expected a control message, got '" + j["type"].get<std::string>() + "'");
  if (j["version"] != kProtocolVersion) protocol("control message version mismatch");
  ControlReply c;
  if (!j.contains("tick") || !j["tick"].is_number_integer()) protocol("field 'tick' must be an integer");
  c.tick = j["tick"].get<std::int64_t>();
  c.accel = finite_number(j, "accel");
  if (j.contains("lane_intent")) {
    if (!j["lane_intent"].is_string()) protocol("field 'lane_intent' must be a string");
    try {
      c.intent = world::intent_from_string(j["lane_intent"].get<std::string>());
    } catch (const Error&) {
      protocol("unknown lane intent");
    }
  }
  if (j.contains("straddle")) c.straddle = finite_number(j, "straddle");
  if (j.contains("emit")) {
    if (!j["emit"].is_array()) protocol("field 'emit' must be an array");
    for (const auto& e : j["emit"]) {
      if (!e.is_object() || !e.contains("channel") || !e["channel"].is_string() || !e.contains("payload") ||
          !e["payload"].is_string() || !e.contains("body") || !e["body"].is_object()) {
        protocol("emission needs channel, payload and an object body");
      }
      Emission em;
      em.channel = e["channel"].get<std::string>();
      try {
        em.type = bus::payload_from_string(e["payload"].get<std::string>());
      } catch (const Error&) {
        protocol("unknown payload type");
      }
      em.body = e["body"];
      c.emit.push_back(std::move(em));
    }
  }
  return c;
}

json hello_message(const std::string& vehicle, const json& map, double dt, int version) {
  return {{"type", "hello"}, {"version", version}, {"vehicle", vehicle}, {"map", map}, {"dt", dt}};
}

json goodbye_message(const std::string& reason) {
  return {{"type", "goodbye"}, {"version", kProtocolVersion}, {"reason", reason}};
}

// ---------------------------------------------------------------------------
// Stub policies

namespace {

class BaselinePolicy : public Policy {
 public:
  explicit BaselinePolicy(std::string name) : name_(std::move(name)) {}
  std::string name() const override { return name_; }

  void on_hello(const json& hello) override {
    if (hello.contains("map")) map_ = world::parse_map(hello["map"]);
  }

  ControlReply decide(const json& obs) override {
    const auto ego = obs.at("ego").get<world::EntityState>();
    std::vector<world::EntityState> seen;
    for (const auto& n : obs.value("neighbors", json::array())) seen.push_back(n.get<world::EntityState>());
    std::vector<const world::EntityState*> ptrs{&ego};
    for (const auto& n : seen) ptrs.push_back(&n);
    std::map<std::string, std::vector<world::Phase>> signals;
    const json sig = obs.value("signals", json::object());
    for (const auto& [id, arr] : sig.items()) {
      for (const auto& p : arr) signals[id].push_back(world::phase_from_string(p.get<std::string>()));
    }
    const traffic::LaneIndex index(map_, ptrs);
    const traffic::Surroundings env{map_, index, signals};
    const world::Control c = traffic::drive(ego, env, cfg_);
    ControlReply r;
    r.tick = obs.at("tick").get<std::int64_t>();
    r.accel = c.accel;
    r.intent = c.intent;
    r.straddle = c.straddle;
    return r;
  }

 private:
  std::string name_;
  world::ScenarioMap map_;
  traffic::DriverConfig cfg_;
};

class ConstantPolicy : public Policy {
 public:
  ConstantPolicy(std::string name, std::function<double(const world::EntityState&)> accel)
      : name_(std::move(name)), accel_(std::move(accel)) {}
  std::string name() const override { return name_; }

  ControlReply decide(const json& obs) override {
    ControlReply r;
    r.tick = obs.at("tick").get<std::int64_t>();
    r.accel = accel_(obs.at("ego").get<world::EntityState>());
    return r;
  }

 private:
  std::string name_;
  std::function<double(const world::EntityState&)> accel_;
};

}  // namespace

std::vector<std::string> stub_names() { return {"baseline", "echo-zero", "always-collide", "stall", "always-complete"}; }

std::unique_ptr<Policy> make_stub(const std::string& name) {
  if (name == "baseline" || name == "always-complete") return std::make_unique<BaselinePolicy>(name);
  if (name == "echo-zero") return std::make_unique<ConstantPolicy>(name, [](const auto&) { return 0.0; });
  if (name == "always-collide") return std::make_unique<ConstantPolicy>(name, [](const auto&) { return 3.0; });
  if (name == "stall") {
    return std::make_unique<ConstantPolicy>(name, [](const world::EntityState& e) { return e.speed > 0.0 ? -3.0 : 0.0; });
  }
  throw Error(ErrorCode::kConfig, "unknown stub policy '" + name + "'");
}

// ---------------------------------------------------------------------------
// Sessions and adapters

json AutSession::handle(const json& msg) {
  check_envelope(msg);
  const std::string type = msg["type"].get<std::string>();
  const int version = msg["version"].get<int>();
  if (type == "hello") {
    if (version != kProtocolVersion) {
      return {{"type", "error"}, {"version", kProtocolVersion}, {"code", "version"},
              {"detail", "supported protocol version is " + std::to_string(kProtocolVersion)}};
    }
    policy_->on_hello(msg);
    greeted_ = true;
    return {{"type", "hello_ack"}, {"version", kProtocolVersion}, {"vehicle", msg.value("vehicle", "")},
            {"algorithm", policy_->name()}, {"algorithm_version", policy_->version()}};
  }
  if (type == "goodbye") {
    closed_ = true;
    return nullptr;
  }
  if (!greeted_) return {{"type", "error"}, {"version", kProtocolVersion}, {"code", "protocol"}, {"detail", "hello first"}};
  if (type == "observation") return control_to_json(policy_->decide(msg));
  return {{"type", "error"}, {"version", kProtocolVersion}, {"code", "protocol"}, {"detail", "unexpected " + type}};
}

namespace {

HelloAck read_ack(const json& reply) {
  if (reply.value("type", "") == "error") {
    if (reply.value("code", "") == "version") throw Error(ErrorCode::kVersion, "AUT rejected protocol: " + reply.value("detail", ""));
    throw Error(ErrorCode::kProtocol, "AUT refused handshake: " + reply.value("detail", ""));
  }
  if (reply.value("type", "") != "hello_ack") protocol("expected hello_ack");
  if (reply.value("version", -1) != kProtocolVersion) throw Error(ErrorCode::kVersion, "AUT speaks another protocol version");
  return {reply.value("algorithm", ""), reply.value("algorithm_version", "")};
}

StepResult read_control(const json& reply, std::int64_t tick) {
  StepResult r;
  try {
    r.reply = parse_control(reply);
    if (r.reply.tick != tick) protocol("reply for tick " + std::to_string(r.reply.tick));
  } catch (const Error& e) {
    r.status = StepStatus::kMalformed;
    r.detail = e.what();
  }
  return r;
}

}  // namespace

InprocAdapter::InprocAdapter(std::unique_ptr<Policy> policy, Tamper tamper)
    : session_(std::move(policy)), tamper_(std::move(tamper)) {}

std::string InprocAdapter::exchange(const json& msg) {
  const json reply = session_.handle(decode_frame(encode_frame(msg)));
  std::string bytes = encode_frame(reply);
  return tamper_ ? tamper_(std::move(bytes)) : bytes;
}

HelloAck InprocAdapter::hello(const json& hello) { return read_ack(decode_frame(exchange(hello))); }

StepResult InprocAdapter::step(const json& observation, std::chrono::milliseconds) {
  const std::int64_t tick = observation.at("tick").get<std::int64_t>();
  json reply;
  try {
    reply = decode_frame(exchange(observation));
  } catch (const Error& e) {
    return {StepStatus::kMalformed, {}, e.what()};
  }
  return read_control(reply, tick);
}

void InprocAdapter::goodbye(const std::string& reason) { session_.handle(goodbye_message(reason)); }

TcpAdapter::TcpAdapter(const std::string& host, int port, std::chrono::milliseconds connect_timeout)
    : sock_(net::connect_tcp(host, port, connect_timeout)) {}

HelloAck TcpAdapter::hello(const json& hello) {
  net::send_all(sock_, encode_frame(hello));
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  std::string chunk;
  while (true) {
    if (auto msg = decoder_.next()) return read_ack(*msg);
    chunk.clear();
    const auto st = net::recv_some(sock_, chunk, deadline);
    if (st == net::RecvStatus::kTimeout) throw Error(ErrorCode::kTimeout, "no hello_ack from AUT");
    if (st == net::RecvStatus::kClosed) throw Error(ErrorCode::kProtocol, "AUT closed the connection during handshake");
    decoder_.feed(chunk);
  }
}

StepResult TcpAdapter::step(const json& observation, std::chrono::milliseconds deadline_ms) {
  const std::int64_t tick = observation.at("tick").get<std::int64_t>();
  try {
    net::send_all(sock_, encode_frame(observation));
  } catch (const Error& e) {
    return {StepStatus::kMalformed, {}, e.what()};
  }
  const auto deadline = std::chrono::steady_clock::now() + deadline_ms;
  std::string chunk;
  while (true) {
    try {
      while (auto msg = decoder_.next()) {
        // Late replies to earlier ticks are dropped.
        if (msg->value("type", "") == "control" && msg->contains("tick") && (*msg)["tick"].is_number_integer() &&
            (*msg)["tick"].get<std::int64_t>() < tick) {
          continue;
        }
        return read_control(*msg, tick);
      }
    } catch (const Error& e) {
      decoder_.reset();
      return {StepStatus::kMalformed, {}, e.what()};
    }
    chunk.clear();
    const auto st = net::recv_some(sock_, chunk, deadline);
    if (st == net::RecvStatus::kTimeout) return {StepStatus::kTimeout, {}, "no reply within deadline"};
    if (st == net::RecvStatus::kClosed) return {StepStatus::kMalformed, {}, "connection closed"};
    decoder_.feed(chunk);
  }
}

void TcpAdapter::goodbye(const std::string& reason) {
  try {
    net::send_all(sock_, encode_frame(goodbye_message(reason)));
  } catch (const Error&) {
    // The peer may already be gone.
  }
  sock_.close();
}

AutServer::AutServer(int port, Factory factory) : factory_(std::move(factory)) {
  listener_ = net::listen_tcp(port, port_);
}

AutServer::~AutServer() { stop(); }

void AutServer::stop() { stop_ = true; }

void AutServer::run() {
  std::vector<std::thread> workers;
  while (!stop_) {
    net::Socket c = net::accept_tcp(listener_, std::chrono::milliseconds(50));
    if (c.valid()) workers.emplace_back([this, s = std::move(c)]() mutable { serve_connection(std::move(s)); });
  }
  for (auto& w : workers) w.join();
}

void AutServer::serve_connection(net::Socket conn) {
  AutSession session(factory_());
  FrameDecoder decoder;
  std::string chunk;
  while (!stop_ && !session.closed()) {
    chunk.clear();
    const auto st = net::recv_some(conn, chunk, std::chrono::steady_clock::now() + std::chrono::milliseconds(50));
    if (st == net::RecvStatus::kClosed) return;
    if (st == net::RecvStatus::kTimeout) continue;
    decoder.feed(chunk);
    try {
      while (auto msg = decoder.next()) {
        const json reply = session.handle(*msg);
        if (!reply.is_null()) net::send_all(conn, encode_frame(reply));
      }
    } catch (const std::exception& e) {
      json err{{"type", "error"}, {"version", kProtocolVersion}, {"code", "protocol"}, {"detail", e.what()}};
      net::send_all(conn, encode_frame(err));
      return;
    }
  }
}

}  // namespace vpat::aut
