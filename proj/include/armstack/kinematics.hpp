#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <variant>
#include <vector>

#include "armstack/robot_model.hpp"

namespace armstack {

/// Tool tip in the base frame (z up, origin at the base center on the table).
/// pitch is the tool inclination: 0 points up, pi/2 is horizontal.
struct ToolPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double pitch = 0.0;
};

/// Elbow-up keeps the elbow above the shoulder->wrist line. With pitch angles
/// measured from the vertical and positive toward the reach direction, that
/// is q3 >= 0 (full stretch, q3 = 0, counts as elbow-up).
enum class Branch { ElbowUp, ElbowDown };

inline Branch branch_of(const JointVector& q) {
  return q.q[2] >= 0.0 ? Branch::ElbowUp : Branch::ElbowDown;
}

const char* to_string(Branch b);

struct IkSolution {
  JointVector q;
  Branch branch = Branch::ElbowUp;
  double residual = 0.0;  // ||(dx, dy, dz, dpitch)||
  int iterations = 0;     // numeric solver only
  bool within_limits = true;
};

/// |cos q3| exceeded one: the wrist point is out of reach of the 2R chain.
struct Unreachable {
  double cos_elbow = 0.0;
};

/// Every geometric solution violates a joint limit.
struct LimitViolation {
  std::vector<IkSolution> candidates;
};

/// Damped least-squares iteration hit its budget; carries the best iterate.
struct NotConverged {
  IkSolution best;
};

using AnalyticIkResult = std::variant<IkSolution, Unreachable, LimitViolation>;
using NumericIkResult = std::variant<IkSolution, NotConverged>;

/// Damped least squares: dq = J^T (J J^T + lambda^2 I)^-1 e, clamped to
/// max_step_rad per joint. With `adaptive` set, lambda starts at `damping`,
/// halves after every step that lowers the error (down to min_damping) and
/// grows fourfold when a step is rejected, which keeps convergence fast next
/// to singular configurations such as a nearly straight elbow.
struct DlsConfig {
  double damping = 0.05;
  double tolerance = 1e-8;
  int max_iterations = 200;
  double max_step_rad = 0.2;
  bool adaptive = true;
  double min_damping = 1e-6;
};

using Jacobian = Eigen::Matrix4d;

ToolPose forward(const JointVector& q, const RobotDescription& d);

/// d(x, y, z, pitch) / d(q1..q4).
Jacobian jacobian(const JointVector& q, const RobotDescription& d);

/// Pose error (target - actual) as (m, m, m, rad), pitch difference wrapped.
Eigen::Vector4d pose_error(const ToolPose& target, const ToolPose& actual);
double pose_distance(const ToolPose& a, const ToolPose& b);

/// All closed-form solutions of `p` in the order inverse_analytic tries
/// them (up to four: two elbow branches for each of the two yaw choices),
/// whether or not they respect the joint limits. Empty when unreachable.
std::vector<IkSolution> analytic_candidates(const ToolPose& p, const RobotDescription& d,
                                            Branch preferred = Branch::ElbowUp);

/// Closed-form solution: yaw extraction followed by the planar 2R wrist-point
/// solve. The preferred branch is tried first, then the other branch, then
/// both branches with the yaw flipped by pi (arm leaning back over the base).
AnalyticIkResult inverse_analytic(const ToolPose& p, const RobotDescription& d,
                                  Branch preferred = Branch::ElbowUp);

NumericIkResult inverse_numeric(const ToolPose& p, const RobotDescription& d,
                                const JointVector& seed, const DlsConfig& cfg = {});

struct GripperMapping {
  double value = 0.0;
  bool clamped = false;
};

GripperMapping gripper_angle_for_width(double width_m, const GripperConfig& g);
GripperMapping gripper_width_for_angle(double angle_rad, const GripperConfig& g);

struct Envelope {
  double max_radius = 0.0;
  double max_height = 0.0;
  double min_height = 0.0;
};

/// Extrema of the tool-tip radius and height over in-limit configurations.
/// Uses fixed-seed uniform sampling plus limit vertices, then polishes each
/// extremum with a bounded pattern search from the best sample.
Envelope workspace_envelope(const RobotDescription& d, std::size_t n_samples,
                            std::uint64_t seed = 0x5eedULL);

/// Actuator angles (q1..q4, gripper motor angle) for a joint vector.
std::array<double, kActuators> actuator_angles(const JointVector& q, const RobotDescription& d);
JointVector from_actuator_angles(const std::array<double, kActuators>& a,
                                 const RobotDescription& d);

}  // namespace armstack
