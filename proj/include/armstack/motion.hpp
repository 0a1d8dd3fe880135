#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "armstack/kinematics.hpp"
#include "armstack/robot_model.hpp"

namespace armstack {

enum class Bound { Min, Max };

struct LimitEntry {
  std::size_t joint = 0;  // 0-based actuator index; 4 is the gripper
  double value = 0.0;
  double bound = 0.0;
  Bound which = Bound::Min;
};

/// Empty iff the configuration is within limits.
using LimitReport = std::vector<LimitEntry>;

LimitReport check_limits(const JointVector& q, const RobotDescription& d);
std::string describe(const LimitReport& r, const RobotDescription& d);

/// One axis of a rest-to-rest trapezoidal (or triangular) velocity profile.
struct AxisProfile {
  double start = 0.0;
  double distance = 0.0;  // signed
  double peak_velocity = 0.0;
  double accel = 0.0;
  double t_accel = 0.0;
  double t_cruise = 0.0;

  double position(double t) const;
  double velocity(double t) const;
  double duration() const { return 2.0 * t_accel + t_cruise; }
};

struct Segment {
  std::array<AxisProfile, kActuators> axes{};
  double duration = 0.0;
  JointVector from;
  JointVector to;
};

struct TrajectorySample {
  JointVector q;
  std::array<double, kActuators> velocity{};  // rad/s per actuator
  std::array<double, kActuators> actuator{};  // rad per actuator
};

/// Time-parameterized joint-space path, immutable once planned.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<Segment> segments, const RobotDescription& d, const JointVector& start);

  double duration() const { return duration_; }
  bool empty() const { return segments_.empty(); }
  const std::vector<Segment>& segments() const { return segments_; }

  /// Time is clamped to [0, duration]; the endpoints are returned exactly.
  TrajectorySample sample(double time) const;

  /// Cartesian lines record their solved waypoints.
  std::vector<JointVector> waypoints;
  std::vector<ToolPose> waypoint_poses;

 private:
  std::vector<Segment> segments_;
  GripperConfig gripper_{};
  double duration_ = 0.0;
  JointVector start_{};
  JointVector goal_{};
};

enum class PlanErrorKind { LimitViolation, Unreachable, BranchFlip, InvalidArgument };

const char* to_string(PlanErrorKind k);

struct PlanError {
  PlanErrorKind kind = PlanErrorKind::InvalidArgument;
  std::string message;
  LimitReport limits;
  std::optional<std::size_t> sample_index;  // Cartesian lines only
};

using PlanResult = std::variant<Trajectory, PlanError>;

/// Minimum rest-to-rest time for a single axis.
double min_move_time(double distance, double vmax, double amax);

/// Synchronized rest-to-rest move: every actuator is retimed to the slowest
/// one's duration. `speed_scale` in (0, 1] scales vmax and amax.
PlanResult plan_joint_move(const JointVector& from, const JointVector& to,
                           const RobotDescription& d, double speed_scale = 1.0);

struct LineOptions {
  Branch branch = Branch::ElbowUp;
  double gripper_width = 0.0;
  double speed_scale = 1.0;
};

inline constexpr double kDefaultLineStep = 0.005;

/// Straight tool-tip line sampled every `step` meters with a linear pitch
/// blend; each sample is solved analytically on one branch and consecutive
/// samples are joined by synchronized joint moves.
PlanResult plan_cartesian_line(const ToolPose& from, const ToolPose& to,
                               const RobotDescription& d, double step = kDefaultLineStep,
                               const LineOptions& opts = {});

}  // namespace armstack
