#include "armstack/kinematics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace armstack {

namespace {

constexpr double kPi = std::numbers::pi;

struct PlanarPoint {
  double r;  // signed radial distance along the yaw direction
  double z;
};

PlanarPoint planar(const JointVector& q, const RobotDescription& d) {
  const double t2 = q.q[1];
  const double t23 = t2 + q.q[2];
  const double t234 = t23 + q.q[3];
  return {d.a2 * std::sin(t2) + d.a3 * std::sin(t23) + d.a4 * std::sin(t234),
          d.h0 + d.a2 * std::cos(t2) + d.a3 * std::cos(t23) + d.a4 * std::cos(t234)};
}

bool arm_within_limits(const JointVector& q, const RobotDescription& d) {
  for (std::size_t i = 0; i < kArmJoints; ++i) {
    if (!d.joints[i].within_limits(q.q[i])) return false;
  }
  return true;
}

}  // namespace

const char* to_string(Branch b) { return b == Branch::ElbowUp ? "elbow-up" : "elbow-down"; }

ToolPose forward(const JointVector& q, const RobotDescription& d) {
  const auto [r, z] = planar(q, d);
  return {r * std::cos(q.q[0]), r * std::sin(q.q[0]), z,
          normalize_angle(q.q[1] + q.q[2] + q.q[3])};
}

Jacobian jacobian(const JointVector& q, const RobotDescription& d) {
  const double c1 = std::cos(q.q[0]);
  const double s1 = std::sin(q.q[0]);
  const double t2 = q.q[1];
  const double t23 = t2 + q.q[2];
  const double t234 = t23 + q.q[3];

  const double r4 = d.a4 * std::sin(t234);
  const double r3 = d.a3 * std::sin(t23) + r4;
  const double r2 = d.a2 * std::sin(t2) + r3;  // = r

  const double dr4 = d.a4 * std::cos(t234);
  const double dr3 = d.a3 * std::cos(t23) + dr4;
  const double dr2 = d.a2 * std::cos(t2) + dr3;

  Jacobian j;
  j << -r2 * s1, c1 * dr2, c1 * dr3, c1 * dr4,  //
      r2 * c1, s1 * dr2, s1 * dr3, s1 * dr4,    //
      0.0, -r2, -r3, -r4,                       //
      0.0, 1.0, 1.0, 1.0;
  return j;
}

Eigen::Vector4d pose_error(const ToolPose& target, const ToolPose& actual) {
  return {target.x - actual.x, target.y - actual.y, target.z - actual.z,
          normalize_angle(target.pitch - actual.pitch)};
}

double pose_distance(const ToolPose& a, const ToolPose& b) { return pose_error(a, b).norm(); }

namespace {

std::vector<IkSolution> candidates_impl(const ToolPose& p, const RobotDescription& d,
                                        Branch preferred, double* worst_cos) {
  const double rho = std::hypot(p.x, p.y);
  const double yaw = rho < 1e-9 ? 0.0 : std::atan2(p.y, p.x);
  const double s_pitch = std::sin(p.pitch);
  const double c_pitch = std::cos(p.pitch);
  const Branch other = preferred == Branch::ElbowUp ? Branch::ElbowDown : Branch::ElbowUp;

  std::vector<IkSolution> out;
  // Yaw pointing at the target first; the flipped yaw reaches the same point
  // with a negative signed radius.
  const int yaw_options = rho < 1e-9 ? 1 : 2;
  for (int flip = 0; flip < yaw_options; ++flip) {
    const double q1 = flip == 0 ? yaw : normalize_angle(yaw + kPi);
    const double r_signed = flip == 0 ? rho : -rho;
    const double rw = r_signed - d.a4 * s_pitch;
    const double zw = p.z - d.h0 - d.a4 * c_pitch;
    double c3 = (rw * rw + zw * zw - d.a2 * d.a2 - d.a3 * d.a3) / (2.0 * d.a2 * d.a3);
    if (std::abs(c3) > 1.0 + 1e-12) {
      if (worst_cos && std::abs(c3) > std::abs(*worst_cos)) *worst_cos = c3;
      continue;
    }
    c3 = std::clamp(c3, -1.0, 1.0);
    const double elbow = std::acos(c3);

    for (Branch b : {preferred, other}) {
      const double q3 = b == Branch::ElbowUp ? elbow : -elbow;
      const double q2 =
          std::atan2(rw, zw) - std::atan2(d.a3 * std::sin(q3), d.a2 + d.a3 * std::cos(q3));
      IkSolution s;
      s.q.q = {q1, normalize_angle(q2), q3, 0.0};
      s.q.q[3] = normalize_angle(p.pitch - s.q.q[1] - s.q.q[2]);
      s.branch = b;
      s.residual = pose_distance(p, forward(s.q, d));
      s.within_limits = arm_within_limits(s.q, d);
      out.push_back(s);
      if (elbow == 0.0) break;  // both branches coincide at full stretch
    }
  }
  return out;
}

}  // namespace

std::vector<IkSolution> analytic_candidates(const ToolPose& p, const RobotDescription& d,
                                            Branch preferred) {
  return candidates_impl(p, d, preferred, nullptr);
}

AnalyticIkResult inverse_analytic(const ToolPose& p, const RobotDescription& d, Branch preferred) {
  double worst_cos = 0.0;
  auto all = candidates_impl(p, d, preferred, &worst_cos);
  if (all.empty()) return Unreachable{worst_cos};
  for (const auto& s : all) {
    if (s.within_limits) return s;
  }
  return LimitViolation{std::move(all)};
}

NumericIkResult inverse_numeric(const ToolPose& p, const RobotDescription& d,
                                const JointVector& seed, const DlsConfig& cfg) {
  JointVector q = seed;
  double lambda = cfg.damping;
  Eigen::Vector4d e = pose_error(p, forward(q, d));
  double err = e.norm();

  IkSolution best;
  best.q = q;
  best.residual = err;

  const auto finish = [&](int iterations) {
    best.iterations = iterations;
    best.branch = branch_of(best.q);
    best.within_limits = arm_within_limits(best.q, d);
  };

  for (int it = 0;; ++it) {
    if (err < cfg.tolerance) {
      finish(it);
      return best;
    }
    if (it >= cfg.max_iterations) {
      finish(it);
      return NotConverged{best};
    }
    const Jacobian j = jacobian(q, d);
    const Eigen::Matrix4d jjt = j * j.transpose() + lambda * lambda * Eigen::Matrix4d::Identity();
    Eigen::Vector4d dq = j.transpose() * jjt.ldlt().solve(e);
    const double peak = dq.cwiseAbs().maxCoeff();
    if (peak > cfg.max_step_rad) dq *= cfg.max_step_rad / peak;

    JointVector next = q;
    for (std::size_t i = 0; i < kArmJoints; ++i) next.q[i] = normalize_angle(q.q[i] + dq[i]);
    const Eigen::Vector4d next_e = pose_error(p, forward(next, d));
    const double next_err = next_e.norm();

    if (!cfg.adaptive || next_err < err) {
      q = next;
      e = next_e;
      err = next_err;
      if (cfg.adaptive) lambda = std::max(lambda * 0.5, cfg.min_damping);
      if (err < best.residual) {
        best.q = q;
        best.residual = err;
      }
    } else {
      lambda = std::min(lambda * 4.0, 1.0);
    }
  }
}

GripperMapping gripper_angle_for_width(double width_m, const GripperConfig& g) {
  GripperMapping m;
  double w = width_m;
  if (w < g.width_closed_m || w > g.width_open_m) {
    w = std::clamp(w, g.width_closed_m, g.width_open_m);
    m.clamped = true;
  }
  const double s = (w - g.width_closed_m) / (g.width_open_m - g.width_closed_m);
  m.value = g.angle_closed_rad + s * (g.angle_open_rad - g.angle_closed_rad);
  return m;
}

GripperMapping gripper_width_for_angle(double angle_rad, const GripperConfig& g) {
  GripperMapping m;
  double s = (angle_rad - g.angle_closed_rad) / (g.angle_open_rad - g.angle_closed_rad);
  if (s < 0.0 || s > 1.0) {
    s = std::clamp(s, 0.0, 1.0);
    m.clamped = true;
  }
  m.value = g.width_closed_m + s * (g.width_open_m - g.width_closed_m);
  return m;
}

namespace {

// Maximizes objective(q2, q3, q4) over the joint-limit box by compass search.
template <typename Objective>
double polish(std::array<double, 3> x, const std::array<double, 3>& lo,
              const std::array<double, 3>& hi, Objective objective) {
  double best = objective(x);
  for (double step = 0.05; step > 1e-10; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t i = 0; i < 3; ++i) {
        for (double dir : {1.0, -1.0}) {
          auto trial = x;
          trial[i] = std::clamp(trial[i] + dir * step, lo[i], hi[i]);
          const double v = objective(trial);
          if (v > best) {
            best = v;
            x = trial;
            improved = true;
          }
        }
      }
    }
  }
  return best;
}

}  // namespace

Envelope workspace_envelope(const RobotDescription& d, std::size_t n_samples, std::uint64_t seed) {
  std::array<double, 3> lo{}, hi{};
  for (std::size_t i = 0; i < 3; ++i) {
    lo[i] = d.joints[i + 1].limit_min_rad;
    hi[i] = d.joints[i + 1].limit_max_rad;
  }
  auto point = [&](const std::array<double, 3>& x) {
    JointVector q;
    q.q = {0.0, x[0], x[1], x[2]};
    return planar(q, d);
  };
  auto radius = [&](const std::array<double, 3>& x) { return std::abs(point(x).r); };
  auto height = [&](const std::array<double, 3>& x) { return point(x).z; };
  auto depth = [&](const std::array<double, 3>& x) { return -point(x).z; };

  std::vector<std::array<double, 3>> samples;
  samples.reserve(n_samples + 27);
  // Limit vertices, mid-points and (when admissible) the zero pose.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      for (int c = 0; c < 3; ++c) {
        std::array<double, 3> x{};
        const int pick[3] = {a, b, c};
        for (std::size_t i = 0; i < 3; ++i) {
          x[i] = pick[i] == 0 ? lo[i] : pick[i] == 1 ? hi[i] : std::clamp(0.0, lo[i], hi[i]);
        }
        samples.push_back(x);
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::array<std::uniform_real_distribution<double>, 3> dist{
      std::uniform_real_distribution<double>(lo[0], hi[0]),
      std::uniform_real_distribution<double>(lo[1], hi[1]),
      std::uniform_real_distribution<double>(lo[2], hi[2])};
  for (std::size_t k = 0; k < n_samples; ++k) {
    samples.push_back({dist[0](rng), dist[1](rng), dist[2](rng)});
  }

  auto argmax = [&](auto objective) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const double v = objective(samples[k]);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    return polish(samples[best], lo, hi, objective);
  };

  Envelope env;
  env.max_radius = argmax(radius);
  env.max_height = argmax(height);
  env.min_height = -argmax(depth);
  return env;
}

std::array<double, kActuators> actuator_angles(const JointVector& q, const RobotDescription& d) {
  return {q.q[0], q.q[1], q.q[2], q.q[3], gripper_angle_for_width(q.w, d.gripper).value};
}

JointVector from_actuator_angles(const std::array<double, kActuators>& a,
                                 const RobotDescription& d) {
  JointVector q;
  q.q = {a[0], a[1], a[2], a[3]};
  q.w = gripper_width_for_angle(a[kGripperIndex], d.gripper).value;
  return q;
}

}  // namespace armstack
