#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace armstack {

inline constexpr std::size_t kArmJoints = 4;
inline constexpr std::size_t kActuators = 5;  // 4 arm joints + gripper motor
inline constexpr std::size_t kGripperIndex = 4;

/// Thrown when a description document is not syntactically valid.
class DescriptionParseError : public std::runtime_error {
 public:
  DescriptionParseError(const std::string& what, int line)
      : std::runtime_error(what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Thrown when a parsed description violates a structural invariant.
class DescriptionValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JointConfig {
  std::string name;
  int motor_id = 0;
  int ticks_per_rev = 4096;
  int center_ticks = 2048;
  int sign = 1;
  double limit_min_rad = 0.0;
  double limit_max_rad = 0.0;
  double vmax_rad_s = 1.0;
  double amax_rad_s2 = 1.0;

  bool within_limits(double angle, double tol = 1e-12) const {
    return angle >= limit_min_rad - tol && angle <= limit_max_rad + tol;
  }
};

/// Parallel gripper reduced to a linear jaw-width <-> actuator-angle map.
struct GripperConfig {
  double width_closed_m = 0.0;
  double width_open_m = 0.0;
  double angle_closed_rad = 0.0;
  double angle_open_rad = 0.0;
};

struct BusConfig {
  int baud = 57600;
  double loop_hz = 50.0;
};

struct RobotDescription {
  int schema_version = 1;
  std::string name;
  double base_size_m = 0.0;  // metadata only, not used by the kinematics

  double h0 = 0.0;  // shoulder height above the table
  double a2 = 0.0;  // shoulder -> elbow
  double a3 = 0.0;  // elbow -> wrist
  double a4 = 0.0;  // wrist -> tool tip
  double horizontal_reach = 0.0;

  std::array<JointConfig, kActuators> joints{};
  GripperConfig gripper{};
  BusConfig bus{};

  double vertical_reach() const { return h0 + a2 + a3 + a4; }
};

/// Configuration-space state: arm angles in radians, gripper jaw width in meters.
struct JointVector {
  std::array<double, kArmJoints> q{};
  double w = 0.0;

  bool operator==(const JointVector&) const = default;
};

/// Checks every RobotDescription invariant; throws DescriptionValidationError
/// naming the first violation.
void validate(const RobotDescription& d);

/// Parses a YAML description document (schema_version 1) and validates it.
RobotDescription load_description(std::string_view doc);
RobotDescription load_description_file(const std::string& path);

/// The description shipped in config/default_description.yaml.
std::string_view default_description_text();
const RobotDescription& default_description();

/// Serializes back to the YAML schema understood by load_description.
std::string dump_description(const RobotDescription& d);

double ticks_to_angle(std::int64_t ticks, const JointConfig& jc);
std::int64_t angle_to_ticks(double angle, const JointConfig& jc);

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

bool finite(const JointVector& q);

}  // namespace armstack
