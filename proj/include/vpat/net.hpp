#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace vpat::net {

/// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void close();
  /// Unblocks any thread waiting on the socket.
  void shutdown();

 private:
  int fd_ = -1;
};

/// Listens on 127.0.0.1; port 0 picks a free one.
Socket listen_tcp(int port, int& bound_port);
/// nullopt-like invalid socket when nothing arrives before the timeout.
Socket accept_tcp(const Socket& listener, std::chrono::milliseconds timeout);
Socket connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout);

void send_all(const Socket& s, std::string_view data);

enum class RecvStatus { kData, kTimeout, kClosed };

/// Appends whatever is available before the deadline.
RecvStatus recv_some(const Socket& s, std::string& out, std::chrono::steady_clock::time_point deadline);

}  // namespace vpat::net
