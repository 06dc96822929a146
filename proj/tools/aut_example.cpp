// Standalone AUT endpoint speaking the framed protocol over TCP. Point a
// scenario adapter {"transport": "tcp", "port": N} at it.
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "vpat/aut.hpp"

namespace {
vpat::aut::AutServer* g_server = nullptr;
}

int main(int argc, char** argv) {
  CLI::App app{"Example AUT endpoint"};
  int port = 9100;
  std::string policy = "baseline";
  app.add_option("--port", port, "Listen port (0 picks one)");
  app.add_option("--policy", policy, "Stub policy")->check(CLI::IsMember(vpat::aut::stub_names()));
  CLI11_PARSE(app, argc, argv);

  vpat::aut::AutServer server(port, [policy] { return vpat::aut::make_stub(policy); });
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  std::cout << "aut endpoint '" << policy << "' on 127.0.0.1:" << server.port() << "\n" << std::flush;
  server.run();
  return 0;
}
