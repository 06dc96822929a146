#include "vpat/console.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>

namespace vpat::console {

using nlohmann::json;

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxMessage = 1u << 20;

[[noreturn]] void protocol(const std::string& what) { throw Error(ErrorCode::kProtocol, what); }

std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

/// Header value from an HTTP request or response head, case-insensitive.
std::optional<std::string> header_value(const std::string& head, const std::string& name) {
  std::size_t pos = head.find("\r\n");
  while (pos != std::string::npos && pos + 2 < head.size()) {
    const std::size_t end = head.find("\r\n", pos + 2);
    const std::string line = head.substr(pos + 2, end == std::string::npos ? std::string::npos : end - pos - 2);
    const auto colon = line.find(':');
    if (colon != std::string::npos && lower(trim(line.substr(0, colon))) == lower(name)) {
      return trim(line.substr(colon + 1));
    }
    pos = end;
  }
  return std::nullopt;
}

/// Reads until the blank line that ends an HTTP head.
std::string read_head(const net::Socket& s, std::string& rest, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string buf;
  while (true) {
    const auto end = buf.find("\r\n\r\n");
    if (end != std::string::npos) {
      rest = buf.substr(end + 4);
      return buf.substr(0, end + 2);
    }
    if (buf.size() > 16384) protocol("HTTP head too large");
    if (net::recv_some(s, buf, deadline) != net::RecvStatus::kData) protocol("handshake not completed");
  }
}

}  // namespace

std::string accept_key(const std::string& client_key) {
  const std::string in = client_key + std::string(kGuid);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest);
  return base64(digest, sizeof digest);
}

std::string encode_ws_frame(std::string_view payload, std::uint8_t opcode, std::optional<std::uint32_t> mask) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | (opcode & 0x0F)));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mbit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mbit | 127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
  }
  if (!mask) return out + std::string(payload);
  unsigned char key[4] = {static_cast<unsigned char>(*mask >> 24), static_cast<unsigned char>(*mask >> 16),
                          static_cast<unsigned char>(*mask >> 8), static_cast<unsigned char>(*mask)};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

std::optional<WsMessage> WsReader::next() {
  if (buf_.size() < 2) return std::nullopt;
  const auto* b = reinterpret_cast<const unsigned char*>(buf_.data());
  if (!(b[0] & 0x80)) protocol("fragmented frames are not supported");
  if (b[0] & 0x70) protocol("reserved bits set");
  const bool masked = b[1] & 0x80;
  if (masked != expect_masked_) protocol(expect_masked_ ? "client frame not masked" : "server frame masked");
  std::uint64_t len = b[1] & 0x7F;
  std::size_t pos = 2;
  if (len == 126) {
    if (buf_.size() < 4) return std::nullopt;
    len = (std::uint64_t{b[2]} << 8) | b[3];
    pos = 4;
  } else if (len == 127) {
    if (buf_.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | b[2 + i];
    pos = 10;
  }
  if (len > kMaxMessage) protocol("message too large");
  const std::size_t mask_at = pos;
  if (masked) pos += 4;
  if (buf_.size() < pos + len) return std::nullopt;
  WsMessage m;
  m.opcode = b[0] & 0x0F;
  m.payload = buf_.substr(pos, static_cast<std::size_t>(len));
  if (masked) {
    for (std::size_t i = 0; i < m.payload.size(); ++i) m.payload[i] = static_cast<char>(m.payload[i] ^ b[mask_at + i % 4]);
  }
  buf_.erase(0, pos + static_cast<std::size_t>(len));
  return m;
}

harness::Command parse_command(const json& msg) {
  if (!msg.is_object() || !msg.contains("cmd") || !msg["cmd"].is_string()) protocol("command needs a 'cmd' string");
  harness::Command c;
  c.kind = harness::command_kind_from_string(msg["cmd"].get<std::string>());
  c.id = msg.value("id", "");
  c.reason = msg.value("reason", "");
  switch (c.kind) {
    case harness::CommandKind::kTakeover:
    case harness::CommandKind::kRelease:
      if (!msg.contains("vehicle") || !msg["vehicle"].is_string()) protocol("command needs a 'vehicle'");
      c.vehicle = msg["vehicle"].get<std::string>();
      break;
    case harness::CommandKind::kSetIntensity:
      if (!msg.contains("value") || !msg["value"].is_number()) protocol("set_intensity needs a numeric 'value'");
      c.value = msg["value"].get<double>();
      break;
    default:
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Server

Server::Server(int port, Handler on_message) : handler_(std::move(on_message)) {
  listener_ = net::listen_tcp(port, port_);
}

Server::~Server() { stop(); }

void Server::start() {
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (stop_.exchange(true)) return;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [id, c] : conns_) c->sock.shutdown();
  }
  if (acceptor_.joinable()) acceptor_.join();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

std::size_t Server::clients() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<std::size_t>(std::count_if(conns_.begin(), conns_.end(), [](const auto& kv) { return kv.second->open; }));
}

void Server::accept_loop() {
  while (!stop_) {
    net::Socket s = net::accept_tcp(listener_, std::chrono::milliseconds(50));
    if (!s.valid()) continue;
    auto c = std::make_shared<Conn>();
    c->sock = std::move(s);
    std::lock_guard<std::mutex> lock(mu_);
    const int id = next_id_++;
    conns_[id] = c;
    workers_.emplace_back([this, id, c] { serve(id, c); });
  }
}

void Server::serve(int id, std::shared_ptr<Conn> c) {
  WsReader reader(true);
  try {
    std::string rest;
    const std::string head = read_head(c->sock, rest, std::chrono::seconds(5));
    const auto key = header_value(head, "Sec-WebSocket-Key");
    if (!key || lower(header_value(head, "Upgrade").value_or("")) != "websocket") {
      net::send_all(c->sock, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
      return;
    }
    {
      std::lock_guard<std::mutex> lock(c->mu);
      net::send_all(c->sock, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                             "Sec-WebSocket-Accept: " + accept_key(*key) + "\r\n\r\n");
      c->open = true;
    }
    reader.feed(rest);
    std::string chunk;
    while (!stop_) {
      while (auto m = reader.next()) {
        if (m->opcode == kClose) {
          std::lock_guard<std::mutex> lock(c->mu);
          net::send_all(c->sock, encode_ws_frame("", kClose));
          c->open = false;
          return;
        }
        if (m->opcode == kPing) {
          std::lock_guard<std::mutex> lock(c->mu);
          net::send_all(c->sock, encode_ws_frame(m->payload, kPong));
          continue;
        }
        if (m->opcode != kText) continue;
        json msg;
        try {
          msg = json::parse(m->payload);
        } catch (const json::parse_error&) {
          send(id, {{"type", "nack"}, {"reason", "message is not JSON"}});
          continue;
        }
        if (handler_) handler_(id, msg);
      }
      chunk.clear();
      const auto st = net::recv_some(c->sock, chunk, std::chrono::steady_clock::now() + std::chrono::milliseconds(50));
      if (st == net::RecvStatus::kClosed) break;
      reader.feed(chunk);
    }
  } catch (const std::exception&) {
    // Broken client; drop it.
  }
  std::lock_guard<std::mutex> lock(c->mu);
  c->open = false;
}

void Server::send(int conn, const json& msg) {
  std::shared_ptr<Conn> c;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = conns_.find(conn);
    if (it == conns_.end()) return;
    c = it->second;
  }
  std::lock_guard<std::mutex> lock(c->mu);
  if (!c->open) return;
  try {
    net::send_all(c->sock, encode_ws_frame(msg.dump()));
  } catch (const Error&) {
    c->open = false;
  }
}

void Server::broadcast(const json& msg) {
  std::vector<int> ids;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [id, c] : conns_) ids.push_back(id);
  }
  for (int id : ids) send(id, msg);
}

// ---------------------------------------------------------------------------
// Client

Client::Client(const std::string& host, int port)
    : sock_(net::connect_tcp(host, port, std::chrono::milliseconds(2000))) {
  const std::string key = "dnBhdC1jb25zb2xlLWtleQ==";
  net::send_all(sock_, "GET / HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                       "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  std::string rest;
  const std::string head = read_head(sock_, rest, std::chrono::seconds(5));
  if (head.rfind("HTTP/1.1 101", 0) != 0) protocol("server refused the upgrade");
  if (header_value(head, "Sec-WebSocket-Accept").value_or("") != accept_key(key)) protocol("bad accept key");
  reader_.feed(rest);
}

void Client::send(const json& msg) {
  mask_seed_ = mask_seed_ * 1664525u + 1013904223u;
  net::send_all(sock_, encode_ws_frame(msg.dump(), kText, mask_seed_));
}

std::optional<json> Client::recv(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string chunk;
  while (true) {
    while (auto m = reader_.next()) {
      if (m->opcode == kText) return json::parse(m->payload);
      if (m->opcode == kClose) return std::nullopt;
    }
    chunk.clear();
    if (net::recv_some(sock_, chunk, deadline) != net::RecvStatus::kData) return std::nullopt;
    reader_.feed(chunk);
  }
}

void Client::close() {
  if (!sock_.valid()) return;
  try {
    mask_seed_ = mask_seed_ * 1664525u + 1013904223u;
    net::send_all(sock_, encode_ws_frame("", kClose, mask_seed_));
  } catch (const Error&) {
    // Already closed by the server.
  }
  sock_.close();
}

// ---------------------------------------------------------------------------

void route_commands(Server& server, harness::Simulation& sim) {
  server.set_handler([&server, &sim](int conn, const json& msg) {
    harness::Command c;
    try {
      c = parse_command(msg);
    } catch (const Error& e) {
      const std::string id = msg.is_object() && msg.contains("id") && msg["id"].is_string() ? msg["id"].get<std::string>() : "";
      server.send(conn, {{"type", "nack"}, {"id", id}, {"reason", e.what()}});
      return;
    }
    c.reply = [&server, conn](const json& r) { server.send(conn, r); };
    sim.submit(std::move(c));
  });
}

namespace {
constexpr std::chrono::milliseconds kPausedFrameInterval{100};
}  // namespace

runlog::RunLog serve(harness::Simulation& sim, Server& server, const ServeOptions& opts) {
  const auto period = std::chrono::duration<double>(sim.spec().dt * opts.realtime);
  auto next = std::chrono::steady_clock::now();
  while (!sim.done()) {
    if (opts.should_stop && opts.should_stop()) break;
    sim.step();
    server.broadcast(sim.state_frame());
    if (sim.paused()) {
      // Unpaced runs would otherwise spin and flood clients while paused.
      std::this_thread::sleep_for(kPausedFrameInterval);
      next = std::chrono::steady_clock::now();
    } else if (opts.realtime > 0.0) {
      next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
      std::this_thread::sleep_until(next);
    }
  }
  return sim.log();
}

}  // namespace vpat::console
