#include "armstack/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace armstack {

namespace {

PlanError error(PlanErrorKind kind, std::string message) {
  PlanError e;
  e.kind = kind;
  e.message = std::move(message);
  return e;
}

bool same_pose(const ToolPose& a, const ToolPose& b) {
  return a.x == b.x && a.y == b.y && a.z == b.z && a.pitch == b.pitch;
}

bool finite(const ToolPose& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && std::isfinite(p.pitch);
}

// Profile for one axis that must take exactly `total` seconds.
AxisProfile fit_axis(double start, double distance, double vmax, double amax, double total,
                     bool slowest) {
  AxisProfile p;
  p.start = start;
  p.distance = distance;
  const double dist = std::abs(distance);
  if (dist == 0.0 || total <= 0.0) {
    p.t_cruise = total;
    return p;
  }
  double v = 0.0;
  if (slowest) {
    v = dist >= vmax * vmax / amax ? vmax : std::sqrt(dist * amax);
  } else {
    // Smaller root of v^2 - amax*T*v + amax*D = 0, written without cancellation.
    const double b = amax * total;
    const double disc = std::max(0.0, b * b - 4.0 * amax * dist);
    v = std::min(vmax, 2.0 * amax * dist / (b + std::sqrt(disc)));
  }
  p.peak_velocity = v;
  p.accel = amax;
  p.t_accel = v / amax;
  p.t_cruise = std::max(0.0, total - 2.0 * p.t_accel);
  return p;
}

}  // namespace

LimitReport check_limits(const JointVector& q, const RobotDescription& d) {
  LimitReport r;
  const auto angles = actuator_angles(q, d);
  for (std::size_t i = 0; i < kActuators; ++i) {
    const auto& j = d.joints[i];
    const double v = angles[i];
    if (!(v >= j.limit_min_rad)) r.push_back({i, v, j.limit_min_rad, Bound::Min});
    else if (!(v <= j.limit_max_rad)) r.push_back({i, v, j.limit_max_rad, Bound::Max});
  }
  const auto& g = d.gripper;
  if (q.w < g.width_closed_m) r.push_back({kGripperIndex, q.w, g.width_closed_m, Bound::Min});
  else if (q.w > g.width_open_m) r.push_back({kGripperIndex, q.w, g.width_open_m, Bound::Max});
  return r;
}

std::string describe(const LimitReport& r, const RobotDescription& d) {
  std::ostringstream os;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const auto& e = r[k];
    if (k) os << "; ";
    os << d.joints[e.joint].name << " = " << e.value
       << (e.which == Bound::Min ? " below " : " above ") << e.bound;
  }
  return os.str();
}

double AxisProfile::position(double t) const {
  const double total = duration();
  t = std::clamp(t, 0.0, total);
  const double sign = distance < 0.0 ? -1.0 : 1.0;
  double s = 0.0;
  if (peak_velocity == 0.0) {
    s = 0.0;
  } else if (t <= t_accel) {
    s = 0.5 * accel * t * t;
  } else if (t <= t_accel + t_cruise) {
    s = 0.5 * accel * t_accel * t_accel + peak_velocity * (t - t_accel);
  } else {
    const double rem = total - t;
    s = std::abs(distance) - 0.5 * accel * rem * rem;
  }
  return start + sign * s;
}

double AxisProfile::velocity(double t) const {
  const double total = duration();
  if (t <= 0.0 || t >= total || peak_velocity == 0.0) return 0.0;
  const double sign = distance < 0.0 ? -1.0 : 1.0;
  double v = peak_velocity;
  if (t < t_accel) v = accel * t;
  else if (t > t_accel + t_cruise) v = accel * (total - t);
  return sign * v;
}

Trajectory::Trajectory(std::vector<Segment> segments, const RobotDescription& d,
                       const JointVector& start)
    : segments_(std::move(segments)), gripper_(d.gripper), start_(start), goal_(start) {
  for (const auto& s : segments_) duration_ += s.duration;
  if (!segments_.empty()) {
    start_ = segments_.front().from;
    goal_ = segments_.back().to;
  }
}

TrajectorySample Trajectory::sample(double time) const {
  TrajectorySample out;
  const auto fill_rest = [&](const JointVector& q) {
    out.q = q;
    out.actuator = {q.q[0], q.q[1], q.q[2], q.q[3],
                    gripper_angle_for_width(q.w, gripper_).value};
  };
  if (segments_.empty() || time <= 0.0) {
    fill_rest(start_);
    return out;
  }
  if (time >= duration_) {
    fill_rest(goal_);
    return out;
  }
  double t = time;
  for (const auto& seg : segments_) {
    if (t > seg.duration) {
      t -= seg.duration;
      continue;
    }
    for (std::size_t i = 0; i < kActuators; ++i) {
      out.actuator[i] = seg.axes[i].position(t);
      out.velocity[i] = seg.axes[i].velocity(t);
    }
    out.q.q = {out.actuator[0], out.actuator[1], out.actuator[2], out.actuator[3]};
    out.q.w = gripper_width_for_angle(out.actuator[kGripperIndex], gripper_).value;
    return out;
  }
  fill_rest(goal_);
  return out;
}

const char* to_string(PlanErrorKind k) {
  switch (k) {
    case PlanErrorKind::LimitViolation: return "limit_violation";
    case PlanErrorKind::Unreachable: return "unreachable";
    case PlanErrorKind::BranchFlip: return "branch_flip";
    case PlanErrorKind::InvalidArgument: return "invalid_argument";
  }
  return "unknown";
}

double min_move_time(double distance, double vmax, double amax) {
  const double dist = std::abs(distance);
  if (dist == 0.0) return 0.0;
  if (dist >= vmax * vmax / amax) return dist / vmax + vmax / amax;
  return 2.0 * std::sqrt(dist / amax);
}

PlanResult plan_joint_move(const JointVector& from, const JointVector& to,
                           const RobotDescription& d, double speed_scale) {
  if (!finite(from) || !finite(to)) {
    return error(PlanErrorKind::InvalidArgument, "non-finite joint vector");
  }
  if (!(speed_scale > 0.0 && speed_scale <= 1.0)) {
    return error(PlanErrorKind::InvalidArgument, "speed scale must be in (0, 1]");
  }
  LimitReport report = check_limits(from, d);
  for (auto& e : check_limits(to, d)) report.push_back(e);
  if (!report.empty()) {
    PlanError e = error(PlanErrorKind::LimitViolation, describe(report, d));
    e.limits = std::move(report);
    return e;
  }
  if (from == to) return Trajectory({}, d, from);

  const auto a = actuator_angles(from, d);
  const auto b = actuator_angles(to, d);
  std::array<double, kActuators> t_min{};
  std::size_t slowest = 0;
  for (std::size_t i = 0; i < kActuators; ++i) {
    const auto& j = d.joints[i];
    t_min[i] = min_move_time(b[i] - a[i], j.vmax_rad_s * speed_scale, j.amax_rad_s2 * speed_scale);
    if (t_min[i] > t_min[slowest]) slowest = i;
  }
  const double total = t_min[slowest];

  Segment seg;
  seg.from = from;
  seg.to = to;
  seg.duration = total;
  for (std::size_t i = 0; i < kActuators; ++i) {
    const auto& j = d.joints[i];
    seg.axes[i] = fit_axis(a[i], b[i] - a[i], j.vmax_rad_s * speed_scale,
                           j.amax_rad_s2 * speed_scale, total, i == slowest);
  }
  std::vector<Segment> segs;
  if (total > 0.0) segs.push_back(seg);
  return Trajectory(std::move(segs), d, from);
}

PlanResult plan_cartesian_line(const ToolPose& from, const ToolPose& to,
                               const RobotDescription& d, double step, const LineOptions& opts) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    return error(PlanErrorKind::InvalidArgument, "line step must be positive");
  }
  if (!finite(from) || !finite(to)) return error(PlanErrorKind::InvalidArgument, "non-finite pose");

  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double dz = to.z - from.z;
  const double dpitch = normalize_angle(to.pitch - from.pitch);
  const double length = std::sqrt(dx * dx + dy * dy + dz * dz);
  const std::size_t n =
      same_pose(from, to) ? 0 : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(length / step - 1e-12)));

  std::vector<JointVector> qs;
  std::vector<ToolPose> poses;
  Branch branch = opts.branch;
  for (std::size_t k = 0; k <= n; ++k) {
    const double s = n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
    ToolPose p{from.x + s * dx, from.y + s * dy, from.z + s * dz,
               normalize_angle(from.pitch + s * dpitch)};
    if (k == n && n > 0) p = to;
    const auto ik = inverse_analytic(p, d, branch);
    if (std::holds_alternative<Unreachable>(ik)) {
      PlanError e = error(PlanErrorKind::Unreachable,
                          "line sample " + std::to_string(k) + " is outside the workspace");
      e.sample_index = k;
      return e;
    }
    if (const auto* lv = std::get_if<LimitViolation>(&ik)) {
      PlanError e = error(PlanErrorKind::LimitViolation,
                          "line sample " + std::to_string(k) + " violates joint limits");
      e.sample_index = k;
      if (!lv->candidates.empty()) {
        JointVector q = lv->candidates.front().q;
        q.w = opts.gripper_width;
        e.limits = check_limits(q, d);
      }
      return e;
    }
    const auto& sol = std::get<IkSolution>(ik);
    if (k == 0) {
      branch = sol.branch;
    } else if (sol.branch != branch ||
               std::abs(normalize_angle(sol.q.q[0] - qs.back().q[0])) > std::numbers::pi / 2) {
      PlanError e = error(PlanErrorKind::BranchFlip,
                          "line sample " + std::to_string(k) + " requires a different branch");
      e.sample_index = k;
      return e;
    }
    JointVector q = sol.q;
    q.w = opts.gripper_width;
    qs.push_back(q);
    poses.push_back(p);
  }

  std::vector<Segment> segs;
  for (std::size_t k = 1; k < qs.size(); ++k) {
    auto part = plan_joint_move(qs[k - 1], qs[k], d, opts.speed_scale);
    if (auto* e = std::get_if<PlanError>(&part)) {
      e->sample_index = k;
      return *e;
    }
    const auto& traj = std::get<Trajectory>(part);
    segs.insert(segs.end(), traj.segments().begin(), traj.segments().end());
  }
  Trajectory t(std::move(segs), d, qs.front());
  t.waypoints = std::move(qs);
  t.waypoint_poses = std::move(poses);
  return t;
}

}  // namespace armstack
