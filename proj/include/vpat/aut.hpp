#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vpat/bus.hpp"
#include "vpat/net.hpp"
#include "vpat/world.hpp"

/// Wire protocol between the platform and an algorithm under test.
///
/// Every record is framed as
///   "VPAT <len:8 hex> <crc32:8 hex>\n" <len bytes of JSON> "\n"
/// and every JSON message carries "type" and "version".
namespace vpat::aut {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 23;
inline constexpr std::size_t kMaxPayload = 16u << 20;
inline constexpr std::chrono::milliseconds kDefaultDeadline{50};

std::string encode_frame(const nlohmann::json& msg);

/// Incremental reader. Any header, length, checksum, terminator or JSON
/// defect raises a protocol error; nothing partial is ever returned.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }
  std::optional<nlohmann::json> next();
  std::size_t buffered() const { return buf_.size(); }
  void reset() { buf_.clear(); }

 private:
  std::string buf_;
};

/// Decodes exactly one frame; trailing bytes are an error.
nlohmann::json decode_frame(std::string_view bytes);

struct Emission {
  std::string channel;
  bus::PayloadType type = bus::PayloadType::kDecisionProposal;
  nlohmann::json body;
};

struct ControlReply {
  std::int64_t tick = 0;
  double accel = 0.0;
  world::LaneIntent intent = world::LaneIntent::kKeep;
  double straddle = 0.0;
  std::vector<Emission> emit;
};

nlohmann::json control_to_json(const ControlReply& c);
/// Strict: unknown intents, non-finite numbers or missing fields are
/// protocol errors.
ControlReply parse_control(const nlohmann::json& j);

nlohmann::json hello_message(const std::string& vehicle, const nlohmann::json& map, double dt,
                             int version = kProtocolVersion);
nlohmann::json goodbye_message(const std::string& reason);

/// Decision logic of an algorithm under test.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const { return "1"; }
  virtual void on_hello(const nlohmann::json& hello) { (void)hello; }
  virtual ControlReply decide(const nlohmann::json& observation) = 0;
};

/// In-tree policies: baseline (lane-following IDM/MOBIL), echo-zero,
/// always-collide, stall, always-complete.
std::unique_ptr<Policy> make_stub(const std::string& name);
std::vector<std::string> stub_names();

/// AUT side of one connection: answers hello, observation and goodbye.
class AutSession {
 public:
  explicit AutSession(std::unique_ptr<Policy> policy) : policy_(std::move(policy)) {}

  /// Reply to send back, or null for goodbye.
  nlohmann::json handle(const nlohmann::json& msg);
  bool closed() const { return closed_; }

 private:
  std::unique_ptr<Policy> policy_;
  bool greeted_ = false;
  bool closed_ = false;
};

struct HelloAck {
  std::string algorithm;
  std::string algorithm_version;
};

enum class StepStatus { kOk, kTimeout, kMalformed };

struct StepResult {
  StepStatus status = StepStatus::kOk;
  ControlReply reply;
  std::string detail;
};

/// Platform side of an AUT connection.
class Adapter {
 public:
  virtual ~Adapter() = default;
  /// Throws a version error when the AUT refuses the protocol version and
  /// a protocol error on any other handshake failure.
  virtual HelloAck hello(const nlohmann::json& hello) = 0;
  virtual StepResult step(const nlohmann::json& observation, std::chrono::milliseconds deadline) = 0;
  virtual void goodbye(const std::string& reason) = 0;
};

/// Runs a policy in-process, still passing every message through the
/// framing so both sides exercise the same codec. `tamper` may rewrite the
/// reply bytes (fault injection).
class InprocAdapter : public Adapter {
 public:
  using Tamper = std::function<std::string(std::string)>;
  explicit InprocAdapter(std::unique_ptr<Policy> policy, Tamper tamper = {});

  HelloAck hello(const nlohmann::json& hello) override;
  StepResult step(const nlohmann::json& observation, std::chrono::milliseconds deadline) override;
  void goodbye(const std::string& reason) override;

 private:
  std::string exchange(const nlohmann::json& msg);
  AutSession session_;
  Tamper tamper_;
};

class TcpAdapter : public Adapter {
 public:
  TcpAdapter(const std::string& host, int port,
             std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(2000));

  HelloAck hello(const nlohmann::json& hello) override;
  StepResult step(const nlohmann::json& observation, std::chrono::milliseconds deadline) override;
  void goodbye(const std::string& reason) override;

 private:
  net::Socket sock_;
  FrameDecoder decoder_;
};

/// Serves AUT sessions over TCP, one thread per connection.
class AutServer {
 public:
  using Factory = std::function<std::unique_ptr<Policy>()>;
  AutServer(int port, Factory factory);
  ~AutServer();

  int port() const { return port_; }
  /// Blocks until stop() is called.
  void run();
  void stop();

 private:
  void serve_connection(net::Socket conn);
  net::Socket listener_;
  int port_ = 0;
  Factory factory_;
  std::atomic<bool> stop_{false};
};

}  // namespace vpat::aut
