#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "armstack/kinematics.hpp"
#include "armstack/motion.hpp"
#include "armstack/robot_model.hpp"
#include "armstack/servo_bus.hpp"
#include "armstack/transport.hpp"

namespace armstack {

inline constexpr int kProtocolVersion = 1;

enum class Mode { Idle, Jog, Trajectory, Fault };
const char* to_string(Mode m);

struct ActuatorState {
  int id = 0;
  std::int32_t ticks = 0;
  double rad = 0.0;
  bool moving = false;
};

/// One published snapshot. Joint values always come from bus reads.
struct RobotState {
  std::uint64_t seq = 0;
  double t_ms = 0.0;
  std::array<ActuatorState, kActuators> actuators{};
  JointVector q;
  ToolPose pose;
  Mode mode = Mode::Idle;
  std::uint64_t cmd_seq = 0;  // highest command seq applied so far
  double speed_scale = 1.0;
  std::string fault;

  bool any_moving() const;
};

nlohmann::json to_json(const RobotState& s);
nlohmann::json to_json(const RobotDescription& d);

// Commands accepted on the wire.
struct JogCmd {
  int joint = 1;  // 1..5
  int delta_ticks = 0;
};
struct GotoJointsCmd {
  std::array<double, kArmJoints> q{};
  std::optional<double> w;  // keep the current width when absent
};
struct GotoPoseCmd {
  ToolPose pose;
  Branch branch = Branch::ElbowUp;
};
struct GripperCmd {
  double width_m = 0.0;
};
struct HomeCmd {};
struct StopCmd {};
struct SetSpeedScaleCmd {
  double scale = 1.0;
};

using Command =
    std::variant<JogCmd, GotoJointsCmd, GotoPoseCmd, GripperCmd, HomeCmd, StopCmd, SetSpeedScaleCmd>;

/// Wire error codes; part of the frozen v1 contract.
namespace err {
inline constexpr const char* kBadJson = "bad_json";
inline constexpr const char* kUnsupportedVersion = "unsupported_version";
inline constexpr const char* kUnknownType = "unknown_type";
inline constexpr const char* kInvalidField = "invalid_field";
inline constexpr const char* kUnreachable = "unreachable";
inline constexpr const char* kLimitViolation = "limit_violation";
inline constexpr const char* kFault = "fault";
}  // namespace err

struct CommandError {
  std::string code;
  std::string message;
};

/// Schema validation only (no robot state involved).
std::variant<Command, CommandError> parse_command(const nlohmann::json& msg);

struct ServiceOptions {
  std::chrono::milliseconds bus_timeout{20};
};

/// Owns the bus. A single control loop (either the internal thread started by
/// start() or an external caller of control_tick) mutates robot state; network
/// handlers only talk to it through handle_command and subscribe.
class TeleopService {
 public:
  TeleopService(RobotDescription d, std::unique_ptr<Transport> transport, ServiceOptions opts = {});
  ~TeleopService();
  TeleopService(const TeleopService&) = delete;
  TeleopService& operator=(const TeleopService&) = delete;

  /// Pings every motor, configures it for streamed position control and
  /// publishes the first state. Throws TransportError when a motor is missing.
  void initialize();

  /// Validates one JSON command and queues it; returns the ack/error JSON text.
  std::string handle_command(std::string_view msg);
  nlohmann::json handle_command(const nlohmann::json& msg);

  void control_tick(double dt);

  /// Runs control_tick at the description's loop rate on a private thread.
  void start();
  void stop();
  bool running() const { return running_.load(); }

  RobotState latest_state() const;
  const RobotDescription& description() const { return desc_; }
  Transport& transport() { return *transport_; }

  using Listener = std::function<void(const RobotState&)>;

  class Subscription {
   public:
    Subscription() = default;
    Subscription(TeleopService* svc, std::uint64_t id) : svc_(svc), id_(id) {}
    Subscription(Subscription&& o) noexcept : svc_(std::exchange(o.svc_, nullptr)), id_(o.id_) {}
    Subscription& operator=(Subscription&& o) noexcept;
    ~Subscription();

   private:
    TeleopService* svc_ = nullptr;
    std::uint64_t id_ = 0;
  };

  /// Listener runs on the control-loop thread; it must not block.
  [[nodiscard]] Subscription subscribe(Listener fn);

  std::size_t goal_writes() const { return goal_writes_.load(); }

 private:
  struct Pending {
    std::uint64_t seq;
    Command cmd;
  };

  void unsubscribe(std::uint64_t id);
  void publish(RobotState s);
  void apply(std::vector<Pending>& batch);
  void begin_move(const JointVector& target, Mode mode);
  void write_goals(const std::array<double, kActuators>& actuator);
  bool read_actuators();
  void enter_fault(const std::string& why);
  bool recover_from_fault();
  JointVector joint_vector_from_ticks(const std::array<std::int32_t, kActuators>& ticks) const;
  std::optional<CommandError> check_against_state(const Command& c);

  RobotDescription desc_;
  std::unique_ptr<Transport> transport_;
  ServiceOptions opts_;
  ServoBus bus_;

  // Command mailbox (multi-producer).
  std::mutex mailbox_mu_;
  std::vector<Pending> mailbox_;
  std::atomic<std::uint64_t> next_cmd_seq_{1};

  // Snapshot used to validate jogs without touching loop-owned state.
  std::mutex ref_mu_;
  std::array<std::int32_t, kActuators> jog_reference_{};
  std::array<std::int32_t, kActuators> pending_jog_{};
  bool faulted_ = false;

  // Loop-owned state.
  JointVector setpoint_;
  std::optional<Trajectory> active_;
  double active_time_ = 0.0;
  Mode mode_ = Mode::Idle;
  std::array<std::int32_t, kActuators> jog_target_{};
  std::array<ActuatorState, kActuators> last_read_{};
  double speed_scale_ = 1.0;
  std::uint64_t applied_seq_ = 0;
  std::uint64_t state_seq_ = 0;
  double clock_ms_ = 0.0;
  std::string fault_;
  std::atomic<std::size_t> goal_writes_{0};

  // State broadcast (multi-consumer, latest wins).
  mutable std::mutex state_mu_;
  RobotState latest_;
  std::map<std::uint64_t, Listener> listeners_;
  std::uint64_t next_listener_ = 1;

  std::atomic<bool> running_{false};
  std::thread loop_;
};

}  // namespace armstack
