#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "armstack/dxl_protocol.hpp"
#include "armstack/robot_model.hpp"
#include "armstack/transport.hpp"

namespace armstack {

/// XL430-class control table addresses used by this stack.
namespace reg {
inline constexpr std::uint16_t kModelNumber = 0;  // 2 bytes
inline constexpr std::uint16_t kFirmwareVersion = 6;
inline constexpr std::uint16_t kId = 7;
inline constexpr std::uint16_t kBaudRate = 8;
inline constexpr std::uint16_t kOperatingMode = 11;
inline constexpr std::uint16_t kTorqueEnable = 64;
inline constexpr std::uint16_t kLed = 65;
inline constexpr std::uint16_t kProfileVelocity = 112;  // 4 bytes, 0.229 rev/min units
inline constexpr std::uint16_t kGoalPosition = 116;     // 4 bytes
inline constexpr std::uint16_t kMoving = 122;
inline constexpr std::uint16_t kPresentPosition = 132;  // 4 bytes
inline constexpr std::size_t kTableSize = 147;

inline constexpr std::uint16_t kXl430ModelNumber = 1060;
inline constexpr std::uint8_t kFirmware = 46;
inline constexpr std::uint8_t kPositionControlMode = 3;
inline constexpr double kVelocityUnitRpm = 0.229;
}  // namespace reg

/// Converts a ProfileVelocity register value to ticks per second.
double profile_velocity_to_ticks_per_s(std::uint32_t raw, int ticks_per_rev = 4096);
/// Nearest register value for a speed in ticks per second.
std::uint32_t ticks_per_s_to_profile_velocity(double ticks_per_s, int ticks_per_rev = 4096);

class ControlTable {
 public:
  ControlTable();

  std::uint32_t get(std::uint16_t address, std::size_t width) const;
  void set(std::uint16_t address, std::size_t width, std::uint32_t value);
  std::span<const std::uint8_t> bytes(std::uint16_t address, std::size_t length) const;

  /// Register-level write validation; returns the status error code.
  dxl::ErrorCode check_write(std::uint16_t address, std::span<const std::uint8_t> data) const;

 private:
  std::array<std::uint8_t, reg::kTableSize> data_{};
};

struct ServoPolicy {
  /// Reject GoalPosition writes with an access error while torque is off,
  /// instead of storing them.
  bool reject_goal_when_torque_off = false;
};

class VirtualServo {
 public:
  VirtualServo(std::uint8_t id, int ticks_per_rev = 4096, std::int32_t initial_ticks = 2048,
               ServoPolicy policy = {});

  std::uint8_t id() const { return id_; }
  ControlTable& table() { return table_; }
  const ControlTable& table() const { return table_; }
  double position() const { return position_; }

  dxl::ErrorCode write(std::uint16_t address, std::span<const std::uint8_t> data);
  void step(double dt);

  std::int32_t present_ticks() const;
  std::int32_t goal_ticks() const;
  bool torque_enabled() const;

 private:
  void sync_registers();

  std::uint8_t id_;
  int ticks_per_rev_;
  ControlTable table_;
  double position_;
  ServoPolicy policy_;
};

struct BusDiagnostics {
  std::size_t frames = 0;           // instruction frames accepted
  std::size_t status_frames = 0;    // foreign status frames seen (ignored)
  std::size_t crc_failures = 0;
  std::size_t register_writes = 0;  // Write + SyncWrite entries applied
  std::size_t responses = 0;
  std::vector<std::string> log;     // most recent events, capped
};

/// N virtual servos sharing one daisy-chained bus.
class VirtualBus {
 public:
  /// Throws std::invalid_argument on duplicate or out-of-range IDs.
  explicit VirtualBus(const std::vector<std::uint8_t>& ids, ServoPolicy policy = {});

  /// Five servos with the motor IDs and tick resolution of the description.
  static VirtualBus from_description(const RobotDescription& d, ServoPolicy policy = {});

  /// Consumes raw bus bytes and returns the concatenated status frames.
  dxl::Bytes handle(std::span<const std::uint8_t> frame_bytes);

  void step(double dt);

  VirtualServo* find(std::uint8_t id);
  const VirtualServo* find(std::uint8_t id) const;
  std::vector<std::uint8_t> ids() const;
  const BusDiagnostics& diagnostics() const { return diag_; }

 private:
  void respond(const dxl::InstructionPacket& p, dxl::Bytes& out);
  void note(std::string event);

  std::map<std::uint8_t, VirtualServo> servos_;
  dxl::FrameBuffer framer_;
  BusDiagnostics diag_;
};

/// Transport adapter: writes go into the virtual bus, its responses come back
/// through read(). Thread-safe so a test can step the bus from outside.
class SimTransport final : public Transport {
 public:
  explicit SimTransport(VirtualBus bus) : bus_(std::move(bus)) {}

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;
  void advance(double dt) override;
  std::string describe() const override { return "simulator"; }

  /// Runs `f` with exclusive access to the bus.
  template <typename F>
  auto with_bus(F&& f) {
    std::lock_guard lock(mu_);
    return f(bus_);
  }

 private:
  std::mutex mu_;
  VirtualBus bus_;
  std::deque<std::uint8_t> pending_;
};

}  // namespace armstack
