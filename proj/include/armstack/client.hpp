#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "armstack/server.hpp"
#include "armstack/service_link.hpp"

namespace armstack {

/// WebSocket client for the teleop API. Acks are matched to commands in
/// send order; states are queued (bounded, oldest dropped) for wait_state.
class WsClient final : public ServiceLink {
 public:
  /// Connects and performs the WebSocket handshake on /ws. Throws
  /// TransportError when the service cannot be reached.
  explicit WsClient(const Endpoint& ep,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));
  ~WsClient() override;
  WsClient(const WsClient&) = delete;
  WsClient& operator=(const WsClient&) = delete;

  /// Throws TransportError when the connection drops or no ack arrives.
  nlohmann::json send(const nlohmann::json& command) override;
  std::optional<nlohmann::json> wait_state(
      const std::function<bool(const nlohmann::json&)>& pred, std::chrono::milliseconds timeout,
      const std::function<void(const nlohmann::json&)>& observe = {}) override;

  /// Most recent state received, if any.
  std::optional<nlohmann::json> latest_state() const;
  bool connected() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Blocking GET; throws TransportError on connection failure or timeout.
HttpResponse http_get(const Endpoint& ep, const std::string& target,
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

}  // namespace armstack
