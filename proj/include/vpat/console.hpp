#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "vpat/net.hpp"
#include "vpat/runlog.hpp"
#include "vpat/sim.hpp"

/// Operator console service: JSON messages, one per WebSocket text frame.
namespace vpat::console {

/// Sec-WebSocket-Accept for a client key.
std::string accept_key(const std::string& client_key);

enum Opcode : std::uint8_t { kText = 0x1, kClose = 0x8, kPing = 0x9, kPong = 0xA };

/// Single-fragment frame. Clients must mask, servers must not.
std::string encode_ws_frame(std::string_view payload, std::uint8_t opcode = kText,
                            std::optional<std::uint32_t> mask = std::nullopt);

struct WsMessage {
  std::uint8_t opcode = kText;
  std::string payload;
};

class WsReader {
 public:
  /// `expect_masked` is true on the server side.
  explicit WsReader(bool expect_masked) : expect_masked_(expect_masked) {}
  void feed(std::string_view bytes) { buf_.append(bytes); }
  std::optional<WsMessage> next();

 private:
  bool expect_masked_;
  std::string buf_;
};

/// Console command from a client message such as
/// {"cmd": "takeover", "vehicle": "vut", "id": "c1"}.
harness::Command parse_command(const nlohmann::json& msg);

class Server {
 public:
  using Handler = std::function<void(int conn, const nlohmann::json& msg)>;

  explicit Server(int port, Handler on_message = {});
  ~Server();

  /// Set before start().
  void set_handler(Handler h) { handler_ = std::move(h); }
  int port() const { return port_; }
  void start();
  void stop();
  void send(int conn, const nlohmann::json& msg);
  void broadcast(const nlohmann::json& msg);
  std::size_t clients() const;

 private:
  struct Conn {
    net::Socket sock;
    std::mutex mu;
    bool open = false;
  };
  void accept_loop();
  void serve(int id, std::shared_ptr<Conn> c);

  net::Socket listener_;
  int port_ = 0;
  Handler handler_;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::map<int, std::shared_ptr<Conn>> conns_;
  std::vector<std::thread> workers_;
  int next_id_ = 1;
};

/// Minimal client, used by tools and tests.
class Client {
 public:
  Client(const std::string& host, int port);
  void send(const nlohmann::json& msg);
  /// Next JSON text message, or nullopt on timeout or close.
  std::optional<nlohmann::json> recv(std::chrono::milliseconds timeout);
  void close();

 private:
  net::Socket sock_;
  WsReader reader_{false};
  std::uint32_t mask_seed_ = 0x9e3779b9u;
};

struct ServeOptions {
  double realtime = 1.0;  // wall seconds per sim second; 0 runs unpaced
  std::function<bool()> should_stop;
};

/// Routes client commands into the simulation's queue; acks and nacks go
/// back to the sender.
void route_commands(Server& server, harness::Simulation& sim);

/// Runs `sim` live: commands from the console go through the simulation's
/// queue, a state frame goes out after every tick.
runlog::RunLog serve(harness::Simulation& sim, Server& server, const ServeOptions& opts = {});

}  // namespace vpat::console
