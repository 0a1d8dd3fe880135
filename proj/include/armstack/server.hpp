#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "armstack/teleop_service.hpp"

namespace armstack {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8700;
};

/// Parses "host:port" (port may be 0 for an ephemeral port). Throws
/// std::invalid_argument on malformed input.
Endpoint parse_endpoint(const std::string& text);

struct ServerOptions {
  Endpoint bind;
  std::string ui_dir;  // served under /ui when non-empty
};

/// HTTP + WebSocket front end for a TeleopService.
///
///   GET /state        latest RobotState as JSON
///   GET /description  loaded RobotDescription as JSON
///   GET /ui/...       static files from ServerOptions::ui_dir
///   /ws               WebSocket: JSON commands in, acks and states out
///
/// Each WebSocket client keeps at most one unsent state; a newer state
/// replaces it, so slow clients skip states instead of buffering them.
class Server {
 public:
  Server(TeleopService& svc, ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on a background thread. Throws
  /// std::system_error when the address cannot be bound.
  void start();
  void stop();

  /// Bound port (useful when binding port 0).
  std::uint16_t port() const;
  std::size_t client_count() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace armstack
