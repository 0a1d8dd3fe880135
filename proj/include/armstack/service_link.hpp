#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "armstack/script.hpp"
#include "armstack/teleop_service.hpp"

namespace armstack {

/// Client-side view of a running teleop service: commands in, acks and
/// states out. Implemented in-process and over the WebSocket API.
class ServiceLink {
 public:
  virtual ~ServiceLink() = default;

  /// Sends one command and returns its ack.
  virtual nlohmann::json send(const nlohmann::json& command) = 0;

  /// Waits for a state message matching `pred`; every state seen while
  /// waiting is passed to `observe`. nullopt on timeout.
  virtual std::optional<nlohmann::json> wait_state(
      const std::function<bool(const nlohmann::json&)>& pred, std::chrono::milliseconds timeout,
      const std::function<void(const nlohmann::json&)>& observe = {}) = 0;
};

class InProcessLink final : public ServiceLink {
 public:
  explicit InProcessLink(TeleopService& svc);

  nlohmann::json send(const nlohmann::json& command) override;
  std::optional<nlohmann::json> wait_state(
      const std::function<bool(const nlohmann::json&)>& pred, std::chrono::milliseconds timeout,
      const std::function<void(const nlohmann::json&)>& observe = {}) override;

 private:
  TeleopService& svc_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<RobotState> queue_;
  TeleopService::Subscription sub_;
};

/// Exit codes shared by every CLI subcommand.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitTransport = 3, kExitMotion = 4 };

struct ScriptRunOptions {
  bool dry_run = false;
  double waypoint_tolerance_m = 0.002;
  double speed_scale = 1.0;
  std::ostream* log = nullptr;  // JSON lines: states and waypoint checks
  std::ostream* out = nullptr;  // human or porcelain progress
  bool porcelain = false;
};

struct ScriptOutcome {
  int exit_code = kExitOk;
  int failed_line = 0;
  std::string code;
  std::string message;
  double planned_duration = 0.0;
  double max_waypoint_error_m = 0.0;
  std::size_t waypoints_checked = 0;
  std::size_t commands_sent = 0;
};

/// Plans the whole script first (so bad lines fail before anything moves),
/// then, unless dry-running, executes it command by command and checks the
/// reached tool pose at every waypoint. `link` may be null for a dry run.
ScriptOutcome run_script(const Script& script, const RobotDescription& d, ServiceLink* link,
                         const ScriptRunOptions& opts);

/// Joint vector and pose carried in a state message.
JointVector state_joints(const nlohmann::json& state);
ToolPose state_pose(const nlohmann::json& state);

}  // namespace armstack
