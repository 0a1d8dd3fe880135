// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "armstack/dxl_protocol.hpp"
#include "armstack/kinematics.hpp"
#include "armstack/motion.hpp"
#include "armstack/servo_sim.hpp"
#include "oracles.hpp"
#include "process.hpp"

using namespace armstack;
using nlohmann::json;
using std::numbers::pi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Workspace extrema from 100k samples.
Verdict workspace() {
  const auto t0 = Clock::now();
  const Envelope env = workspace_envelope(default_description(), 100000);
  const double t = seconds_since(t0);
  const bool ok = std::abs(env.max_radius - 0.300) <= 0.001 &&
                  std::abs(env.max_height - 0.400) <= 0.001 && t < 5.0;
  return {ok, fmt("max radius %.4f m (0.300 +/- 0.001), max height %.4f m (0.400 +/- 0.001), "
                  "%.3f s (< 5 s)",
                  env.max_radius, env.max_height, t)};
}

// 2. Analytic and numeric IK on 1000 forward-generated poses.
Verdict ik_round_trip() {
  const auto& d = default_description();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 0.1);
  const auto t0 = Clock::now();
  double worst_analytic = 0.0;
  int analytic_failures = 0, numeric_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const JointVector q = oracle::random_q(rng, d);
    const ToolPose p = forward(q, d);

    const auto a = inverse_analytic(p, d, branch_of(q));
    if (const auto* s = std::get_if<IkSolution>(&a)) {
      // Residual measured with the independent transform-chain model.
      const auto got = oracle::chain_fk(s->q.q, d);
      const double r = std::hypot((got.tip - Eigen::Vector3d(p.x, p.y, p.z)).norm(),
                                  normalize_angle(got.pitch - p.pitch));
      worst_analytic = std::max(worst_analytic, r);
    } else {
      ++analytic_failures;
    }

    JointVector seed = q;
    for (auto& v : seed.q) v += noise(rng);
    const auto n = inverse_numeric(p, d, seed);
    if (const auto* s = std::get_if<IkSolution>(&n)) {
      const auto got = oracle::chain_fk(s->q.q, d);
      const double r = std::hypot((got.tip - Eigen::Vector3d(p.x, p.y, p.z)).norm(),
                                  normalize_angle(got.pitch - p.pitch));
      if (r < 1e-8) ++numeric_ok;
    }
  }
  const double t = seconds_since(t0);
  const bool ok = analytic_failures == 0 && worst_analytic < 1e-9 && numeric_ok >= 990 && t < 2.0;
  return {ok, fmt("analytic worst residual %.2e (< 1e-9), %d rejected; numeric %d/1000 converged "
                  "(>= 990); %.3f s (< 2 s)",
                  worst_analytic, analytic_failures, numeric_ok, t)};
}

// 3. Jacobian against central differences of the forward map.
Verdict jacobian_check() {
  const auto& d = default_description();
  std::mt19937_64 rng(7);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const JointVector q = oracle::random_q(rng, d);
    const Jacobian j = jacobian(q, d);
    for (int c = 0; c < 4; ++c) {
      JointVector plus = q, minus = q;
      plus.q[static_cast<std::size_t>(c)] += h;
      minus.q[static_cast<std::size_t>(c)] -= h;
      const auto fp = oracle::chain_fk(plus.q, d);
      const auto fm = oracle::chain_fk(minus.q, d);
      const Eigen::Vector3d dpos = (fp.tip - fm.tip) / (2 * h);
      const double dpitch = normalize_angle(fp.pitch - fm.pitch) / (2 * h);
      for (int r = 0; r < 3; ++r) worst = std::max(worst, std::abs(j(r, c) - dpos(r)));
      worst = std::max(worst, std::abs(j(3, c) - dpitch));
    }
  }
  return {worst < 1e-5, fmt("max |J - J_fd| %.2e over 100 configurations (< 1e-5)", worst)};
}

// 4. Codec round trips, CRC oracle, framer fuzz.
Verdict codec() {
  using namespace armstack::dxl;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> byte(0, 255), coin(0, 1), which(0, 3);
  std::uniform_int_distribution<std::size_t> plen(0, 300), slen(0, 512);
  const auto random_bytes = [&](std::size_t n) {
    Bytes b(n);
    for (auto& v : b) v = static_cast<std::uint8_t>(byte(rng));
    return b;
  };
  static constexpr Instruction kInstr[] = {Instruction::Ping, Instruction::Read,
                                           Instruction::Write, Instruction::SyncWrite};
  const auto random_packet = [&]() -> Packet {
    const auto id = static_cast<std::uint8_t>(byte(rng) % (kMaxDeviceId + 1));
    if (coin(rng)) return StatusPacket{id, static_cast<std::uint8_t>(byte(rng)), random_bytes(plen(rng))};
    return InstructionPacket{id, kInstr[which(rng)], random_bytes(plen(rng))};
  };
  const auto encode_any = [](const Packet& p) {
    return std::visit([](const auto& v) { return encode(v); }, p);
  };

  int round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const Packet p = random_packet();
    try {
      if (!(decode(encode_any(p)) == p)) ++round_trip_failures;
    } catch (const std::exception&) {
      ++round_trip_failures;
    }
  }

  int crc_mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const Bytes b = random_bytes(slen(rng));
    if (crc16(b) != oracle::crc16_bitwise(b)) ++crc_mismatches;
  }

  // 1 MiB of noise cut into 101 runs with a golden frame after each of the first 100.
  std::vector<Packet> golden;
  Bytes stream;
  const std::size_t noise_total = 1 << 20;
  std::size_t noise_used = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = (noise_total - noise_used) / static_cast<std::size_t>(101 - i);
    const Bytes noise = random_bytes(n);
    stream.insert(stream.end(), noise.begin(), noise.end());
    noise_used += n;
    golden.push_back(random_packet());
    const Bytes f = encode_any(golden.back());
    stream.insert(stream.end(), f.begin(), f.end());
  }
  const Bytes tail = random_bytes(noise_total - noise_used);
  stream.insert(stream.end(), tail.begin(), tail.end());

  FrameBuffer fb;
  std::vector<Packet> got;
  std::uniform_int_distribution<std::size_t> chunk(1, 4096);
  for (std::size_t pos = 0; pos < stream.size();) {
    const std::size_t n = std::min(chunk(rng), stream.size() - pos);
    auto part = fb.feed(std::span<const std::uint8_t>(stream).subspan(pos, n));
    got.insert(got.end(), part.begin(), part.end());
    pos += n;
  }
  const bool frames_exact = got == golden;

  const bool ok = round_trip_failures == 0 && crc_mismatches == 0 && frames_exact;
  return {ok, fmt("%d/10000 round-trip failures, %d/10000 CRC mismatches, framer emitted %zu "
                  "frames for 100 golden in 1 MiB noise (%s)",
                  round_trip_failures, crc_mismatches, got.size(),
                  frames_exact ? "exact" : "MISMATCH")};
}

// 5. Simulated servo stepping 1024 ticks at about 512 ticks/s.
Verdict simulator() {
  VirtualServo servo(1);
  const auto pv = ticks_per_s_to_profile_velocity(512.0);
  const auto w32 = [](std::uint32_t v) {
    dxl::Bytes b;
    dxl::put_u32(b, v);
    return b;
  };
  servo.write(reg::kProfileVelocity, w32(pv));
  servo.write(reg::kTorqueEnable, dxl::Bytes{1});
  servo.write(reg::kGoalPosition, w32(2048 + 1024));

  const double dt = 1.0 / 50.0;
  int prev = servo.present_ticks(), reached = -1, overshoot = 0;
  bool monotone = true;
  for (int k = 1; k <= 250; ++k) {
    servo.step(dt);
    const int now = servo.present_ticks();
    monotone = monotone && now >= prev;
    overshoot = std::max(overshoot, now - 3072);
    if (reached < 0 && now == 3072) reached = k;
    prev = now;
  }
  const double t = reached * dt;
  const bool ok = reached > 0 && std::abs(reached - 100) <= 2 && overshoot <= 1 && monotone;
  return {ok, fmt("register %u = %.1f ticks/s, goal reached at %.2f s (2.00 +/- 0.04), "
                  "overshoot %d (<= 1), %s",
                  pv, profile_velocity_to_ticks_per_s(pv), t, overshoot,
                  monotone ? "monotone" : "NOT monotone")};
}

// 6. Velocity and acceleration bounds of planned moves.
Verdict trajectories() {
  const auto& d = default_description();
  std::mt19937_64 rng(6);
  const double h = 1e-3;
  double v_excess = -1e9, a_excess = -1e9;
  int endpoint_errors = 0, plan_failures = 0;
  for (int m = 0; m < 100; ++m) {
    const JointVector a = oracle::random_q(rng, d), b = oracle::random_q(rng, d);
    const auto r = plan_joint_move(a, b, d);
    if (!std::holds_alternative<Trajectory>(r)) {
      ++plan_failures;
      continue;
    }
    const auto& t = std::get<Trajectory>(r);
    if (!(t.sample(0.0).q == a) || !(t.sample(t.duration()).q == b)) ++endpoint_errors;
    for (double time = h; time + h <= t.duration(); time += h) {
      const auto s = t.sample(time);
      const auto prev = t.sample(time - h).actuator, next = t.sample(time + h).actuator;
      for (std::size_t i = 0; i < kActuators; ++i) {
        const auto& j = d.joints[i];
        v_excess = std::max(v_excess, std::abs(s.velocity[i]) - j.vmax_rad_s);
        const double acc = (next[i] - 2 * s.actuator[i] + prev[i]) / (h * h);
        a_excess = std::max(a_excess, std::abs(acc) - j.amax_rad_s2);
      }
    }
  }

  RobotDescription yaw = d;
  yaw.joints[0].vmax_rad_s = pi / 4;
  yaw.joints[0].amax_rad_s2 = pi / 2;
  JointVector from, to;
  to.q[0] = pi / 2;
  const auto trap = plan_joint_move(from, to, yaw);
  const double T = std::holds_alternative<Trajectory>(trap) ? std::get<Trajectory>(trap).duration()
                                                            : -1.0;

  const bool ok = plan_failures == 0 && endpoint_errors == 0 && v_excess <= 1e-9 &&
                  a_excess <= 1e-6 && std::abs(T - 2.5) < 1e-12;
  return {ok, fmt("max |v|-vmax %.1e (<= 1e-9), max |a|-amax %.1e (<= 1e-6), %d endpoint "
                  "errors, trapezoid T = %.12f s (2.5)",
                  v_excess, a_excess, endpoint_errors, T)};
}

// 7. Shipped demo end to end through the CLI on the simulator.
Verdict end_to_end() {
  const auto& d = default_description();
  const auto log = std::filesystem::temp_directory_path() / "armstack_acceptance_log.jsonl";
  std::filesystem::remove(log);
  const std::string demo = std::string(ARMSTACK_SOURCE_DIR) + "/demo/pick_place";
  const auto r = proc::run({ARMSTACK_CLI, "script", "run", demo, "--sim", "--log", log.string()},
                           {}, std::chrono::seconds(90));

  std::ifstream in(log);
  std::string line;
  int waypoints = 0, states = 0, limit_breaches = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.value("event", "") == "waypoint") {
      ++waypoints;
      const auto& a = j["actual"];
      const auto& t = j["target"];
      // Distance recomputed from the logged coordinates.
      const double e = std::hypot(a["x"].get<double>() - t["x"].get<double>(),
                                  a["y"].get<double>() - t["y"].get<double>(),
                                  a["z"].get<double>() - t["z"].get<double>());
      worst = std::max(worst, e);
    } else if (j.value("kind", "") == "state") {
      ++states;
      for (std::size_t i = 0; i < kActuators; ++i) {
        const auto& jc = d.joints[i];
        const double rad = ticks_to_angle(j["joints"][i]["ticks"].get<std::int64_t>(), jc);
        const double slack = pi / jc.ticks_per_rev;
        if (rad < jc.limit_min_rad - slack || rad > jc.limit_max_rad + slack) ++limit_breaches;
      }
    }
  }
  std::filesystem::remove(log);

  const bool ok = r.exit_code == 0 && waypoints > 0 && states > 0 && worst <= 0.002 &&
                  limit_breaches == 0 && r.seconds < 60.0;
  return {ok, fmt("exit %d, %d waypoints, worst error %.3f mm (<= 2), %d/%d state samples out "
                  "of limits, %.1f s wall (< 60 s)",
                  r.exit_code, waypoints, worst * 1000.0, limit_breaches, states, r.seconds)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"workspace envelope", workspace},
      {"IK round trip", ik_round_trip},
      {"Jacobian vs finite differences", jacobian_check},
      {"codec and framer", codec},
      {"simulator convergence", simulator},
      {"trajectory bounds", trajectories},
      {"pick_place end to end", end_to_end},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, run] : criteria) {
    ++n;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
