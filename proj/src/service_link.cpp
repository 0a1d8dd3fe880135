#include "armstack/service_link.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace armstack {

using nlohmann::json;

InProcessLink::InProcessLink(TeleopService& svc) : svc_(svc) {
  sub_ = svc_.subscribe([this](const RobotState& s) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(s);
      if (queue_.size() > 256) queue_.pop_front();
    }
    cv_.notify_all();
  });
}

json InProcessLink::send(const json& command) { return svc_.handle_command(command); }

std::optional<json> InProcessLink::wait_state(const std::function<bool(const json&)>& pred,
                                              std::chrono::milliseconds timeout,
                                              const std::function<void(const json&)>& observe) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(mu_);
  for (;;) {
    while (!queue_.empty()) {
      json s = to_json(queue_.front());
      queue_.pop_front();
      if (observe) observe(s);
      if (pred(s)) {
        std::optional<json> hit;
        hit.emplace(std::move(s));
        return hit;
      }
    }
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout && queue_.empty()) {
      return std::nullopt;
    }
  }
}

JointVector state_joints(const json& state) {
  JointVector q;
  for (std::size_t i = 0; i < kArmJoints; ++i) q.q[i] = state.at("q").at(i).get<double>();
  q.w = state.at("w").get<double>();
  return q;
}

ToolPose state_pose(const json& state) {
  const auto& p = state.at("pose");
  return {p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(),
          p.at("pitch").get<double>()};
}

namespace {

json pose_json(const ToolPose& p) {
  return {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"pitch", p.pitch}};
}

bool settled(const json& s, std::uint64_t seq) {
  if (s.at("cmd_seq").get<std::uint64_t>() < seq) return false;
  const auto mode = s.at("mode").get<std::string>();
  if (mode == "fault") return true;
  if (mode != "idle") return false;
  for (const auto& j : s.at("joints")) {
    if (j.at("moving").get<bool>()) return false;
  }
  return true;
}

void emit(const ScriptRunOptions& opts, const json& porcelain, const std::string& human) {
  if (!opts.out) return;
  if (opts.porcelain) *opts.out << porcelain.dump() << "\n";
  else *opts.out << human << "\n";
  opts.out->flush();
}

}  // namespace

ScriptOutcome run_script(const Script& script, const RobotDescription& d, ServiceLink* link,
                         const ScriptRunOptions& opts) {
  ScriptOutcome outcome;
  const auto fail = [&](int code, int line, std::string err, std::string message) {
    outcome.exit_code = code;
    outcome.failed_line = line;
    outcome.code = std::move(err);
    outcome.message = std::move(message);
    if (opts.porcelain && opts.out) {
      *opts.out << json{{"event", "error"}, {"line", line}, {"code", outcome.code},
                        {"message", outcome.message}}
                       .dump()
                << "\n";
      opts.out->flush();
    }
    return outcome;
  };
  const auto log = [&](const json& j) {
    if (opts.log) *opts.log << j.dump() << "\n";
  };

  JointVector start = home_configuration(d);
  if (link) {
    const auto s = link->wait_state([](const json&) { return true; }, std::chrono::seconds(2));
    if (!s) return fail(kExitTransport, 0, "timeout", "no state received from the service");
    if (s->at("mode") == "fault") return fail(kExitTransport, 0, "fault", "service is in fault");
    start = state_joints(*s);
    for (std::size_t i = 0; i < kArmJoints; ++i) {
      start.q[i] = std::clamp(start.q[i], d.joints[i].limit_min_rad, d.joints[i].limit_max_rad);
    }
    start.w = std::clamp(start.w, d.gripper.width_closed_m, d.gripper.width_open_m);
  }

  auto planned = plan_script(script, d, start, opts.speed_scale);
  if (auto* f = std::get_if<ScriptFailure>(&planned)) {
    return fail(kExitMotion, f->line, f->code, f->message);
  }
  const auto& plan = std::get<ScriptPlan>(planned);
  outcome.planned_duration = plan.total_duration;

  if (opts.dry_run || link == nullptr) {
    for (const auto& pc : plan.commands) {
      std::ostringstream human;
      human << "line " << std::setw(3) << pc.command->line << "  " << std::left << std::setw(12)
            << command_name(pc.command->step) << std::right << std::fixed << std::setprecision(3)
            << pc.duration << " s";
      emit(opts,
           {{"event", "planned"}, {"line", pc.command->line},
            {"command", command_name(pc.command->step)}, {"duration_s", pc.duration},
            {"targets", pc.targets.size()}},
           human.str());
    }
    std::ostringstream total;
    total << "total " << std::fixed << std::setprecision(3) << plan.total_duration << " s";
    emit(opts, {{"event", "total"}, {"duration_s", plan.total_duration}}, total.str());
    return outcome;
  }

  for (const auto& pc : plan.commands) {
    const int line = pc.command->line;
    if (const auto* w = std::get_if<WaitStep>(&pc.command->step)) {
      std::this_thread::sleep_for(std::chrono::duration<double>(w->seconds));
      emit(opts, {{"event", "done"}, {"line", line}, {"command", "wait"}}, "line " +
           std::to_string(line) + " wait done");
      continue;
    }
    for (std::size_t k = 0; k < pc.targets.size(); ++k) {
      const auto& target = pc.targets[k];
      json cmd;
      if (std::holds_alternative<GripperStep>(pc.command->step)) {
        cmd = {{"v", kProtocolVersion}, {"type", "gripper"}, {"width_m", target.w}};
      } else {
        cmd = {{"v", kProtocolVersion},
               {"type", "goto_joints"},
               {"q", {target.q[0], target.q[1], target.q[2], target.q[3]}},
               {"w", target.w}};
      }
      const json ack = link->send(cmd);
      ++outcome.commands_sent;
      if (!ack.value("ok", false)) {
        return fail(kExitMotion, line, ack.value("code", "rejected"), ack.value("message", ""));
      }
      const auto seq = ack.at("seq").get<std::uint64_t>();
      const auto budget = std::chrono::milliseconds(
          static_cast<long>(1000.0 * (pc.duration / opts.speed_scale) + 5000.0));
      const auto reached = link->wait_state([&](const json& s) { return settled(s, seq); }, budget,
                                            [&](const json& s) { log(s); });
      if (!reached) return fail(kExitTransport, line, "timeout", "motion did not settle");
      if (reached->at("mode") == "fault") {
        return fail(kExitTransport, line, "fault", reached->value("fault", std::string("fault")));
      }

      const ToolPose actual = state_pose(*reached);
      const ToolPose& expect = pc.poses[k];
      const double err = std::sqrt((actual.x - expect.x) * (actual.x - expect.x) +
                                   (actual.y - expect.y) * (actual.y - expect.y) +
                                   (actual.z - expect.z) * (actual.z - expect.z));
      outcome.max_waypoint_error_m = std::max(outcome.max_waypoint_error_m, err);
      ++outcome.waypoints_checked;
      log({{"event", "waypoint"}, {"line", line}, {"index", k}, {"target", pose_json(expect)},
           {"actual", pose_json(actual)}, {"error_m", err}});
      if (err > opts.waypoint_tolerance_m) {
        return fail(kExitMotion, line, "waypoint_missed",
                    "tool tip " + std::to_string(err * 1000.0) + " mm from waypoint");
      }
    }
    std::ostringstream human;
    human << "line " << line << " " << command_name(pc.command->step) << " done ("
          << pc.targets.size() << " waypoint" << (pc.targets.size() == 1 ? "" : "s") << ")";
    emit(opts, {{"event", "done"}, {"line", line}, {"command", command_name(pc.command->step)},
                {"waypoints", pc.targets.size()}},
         human.str());
  }
  emit(opts,
       {{"event", "complete"}, {"waypoints", outcome.waypoints_checked},
        {"max_error_m", outcome.max_waypoint_error_m}},
       "script complete: " + std::to_string(outcome.waypoints_checked) +
           " waypoints, max error " + std::to_string(outcome.max_waypoint_error_m * 1000.0) +
           " mm");
  return outcome;
}

}  // namespace armstack
