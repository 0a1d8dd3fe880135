#include "armstack/script.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace armstack {

namespace {

int line_of(const YAML::Node& n) { return n.IsDefined() ? n.Mark().line + 1 : 0; }

[[noreturn]] void fail(const YAML::Node& n, const std::string& msg) {
  const int line = line_of(n);
  throw ScriptParseError("line " + std::to_string(line) + ": " + msg, line);
}

double number(const YAML::Node& map, const char* key, const YAML::Node& owner) {
  const YAML::Node n = map[key];
  if (!n) fail(owner, std::string("missing '") + key + "'");
  double v = 0.0;
  try {
    v = n.as<double>();
  } catch (const YAML::Exception&) {
    fail(n, std::string("'") + key + "' must be a number");
  }
  if (!std::isfinite(v)) fail(n, std::string("'") + key + "' must be finite");
  return v;
}

void only_keys(const YAML::Node& map, std::initializer_list<std::string_view> keys,
               const std::string& cmd) {
  if (!map.IsMap()) fail(map, "arguments of '" + cmd + "' must be a mapping");
  for (const auto& kv : map) {
    const auto k = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : keys) ok = ok || k == a;
    if (!ok) fail(kv.first, "unknown argument '" + k + "' for '" + cmd + "'");
  }
}

ScriptStep parse_step(const std::string& kind, const YAML::Node& args) {
  if (kind == "move_joints") {
    only_keys(args, {"q", "w"}, kind);
    const YAML::Node q = args["q"];
    if (!q || !q.IsSequence() || q.size() != kArmJoints) fail(args, "'q' must list 4 angles");
    MoveJointsStep s;
    for (std::size_t i = 0; i < kArmJoints; ++i) {
      try {
        s.q[i] = q[i].as<double>();
      } catch (const YAML::Exception&) {
        fail(q[i], "joint angle must be a number");
      }
      if (!std::isfinite(s.q[i])) fail(q[i], "joint angle must be finite");
    }
    if (args["w"]) s.w = number(args, "w", args);
    return s;
  }
  if (kind == "move_line") {
    only_keys(args, {"x", "y", "z", "pitch", "step"}, kind);
    MoveLineStep s;
    s.target = {number(args, "x", args), number(args, "y", args), number(args, "z", args),
                number(args, "pitch", args)};
    if (args["step"]) {
      s.step = number(args, "step", args);
      if (!(s.step > 0.0)) fail(args["step"], "'step' must be positive");
    }
    return s;
  }
  if (kind == "gripper") {
    only_keys(args, {"width_m"}, kind);
    return GripperStep{number(args, "width_m", args)};
  }
  if (kind == "wait") {
    only_keys(args, {"seconds"}, kind);
    const double s = number(args, "seconds", args);
    if (s < 0.0) fail(args, "'seconds' must not be negative");
    return WaitStep{s};
  }
  fail(args, "unknown command '" + kind + "'");
}

}  // namespace

Script parse_script(std::string_view text, std::string name) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ScriptParseError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg,
                           e.mark.line + 1);
  }
  if (!root.IsMap()) throw ScriptParseError("line 1: script must be a mapping", 1);
  for (const auto& kv : root) {
    const auto k = kv.first.as<std::string>();
    if (k != "schema_version" && k != "commands" && k != "name") {
      fail(kv.first, "unknown key '" + k + "'");
    }
  }
  if (const auto v = root["schema_version"]; v && v.as<std::string>() != "1") {
    fail(v, "unsupported schema_version");
  }
  Script script;
  script.name = root["name"] ? root["name"].as<std::string>() : std::move(name);
  const YAML::Node cmds = root["commands"];
  if (!cmds || !cmds.IsSequence()) fail(root, "'commands' must be a sequence");
  for (const auto& item : cmds) {
    if (!item.IsMap() || item.size() != 1) fail(item, "each command must be a single-key mapping");
    const auto it = item.begin();
    const auto kind = it->first.as<std::string>();
    script.commands.push_back({parse_step(kind, it->second), line_of(item)});
  }
  return script;
}

Script load_script(const std::string& path) {
  namespace fs = std::filesystem;
  std::string resolved = path;
  if (!fs::exists(resolved) && fs::exists(path + ".yaml")) resolved = path + ".yaml";
  std::ifstream in(resolved);
  if (!in) throw std::runtime_error("cannot open script " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_script(ss.str(), fs::path(resolved).stem().string());
}

const char* command_name(const ScriptStep& s) {
  switch (s.index()) {
    case 0: return "move_joints";
    case 1: return "move_line";
    case 2: return "gripper";
    default: return "wait";
  }
}

JointVector home_configuration(const RobotDescription& d) {
  std::array<double, kActuators> zero{};
  return from_actuator_angles(zero, d);
}

std::variant<ScriptPlan, ScriptFailure> plan_script(const Script& script, const RobotDescription& d,
                                                    const JointVector& start, double speed_scale) {
  ScriptPlan plan;
  JointVector current = start;
  const auto failure = [](const ScriptCommand& c, const PlanError& e) {
    return ScriptFailure{c.line, to_string(e.kind), e.message};
  };

  for (const auto& c : script.commands) {
    PlannedCommand pc;
    pc.command = &c;
    if (const auto* s = std::get_if<MoveJointsStep>(&c.step)) {
      JointVector target;
      target.q = s->q;
      target.w = s->w.value_or(current.w);
      auto r = plan_joint_move(current, target, d, speed_scale);
      if (auto* e = std::get_if<PlanError>(&r)) return failure(c, *e);
      pc.duration = std::get<Trajectory>(r).duration();
      pc.targets = {target};
      pc.poses = {forward(target, d)};
      current = target;
    } else if (const auto* s = std::get_if<MoveLineStep>(&c.step)) {
      LineOptions opts;
      opts.branch = branch_of(current);
      opts.gripper_width = current.w;
      opts.speed_scale = speed_scale;
      auto r = plan_cartesian_line(forward(current, d), s->target, d, s->step, opts);
      if (auto* e = std::get_if<PlanError>(&r)) return failure(c, *e);
      const auto& traj = std::get<Trajectory>(r);
      if (!traj.waypoints.empty()) {
        const auto& first = traj.waypoints.front();
        for (std::size_t i = 0; i < kArmJoints; ++i) {
          if (std::abs(normalize_angle(first.q[i] - current.q[i])) > 1e-6) {
            return ScriptFailure{c.line, "branch_flip",
                                 "line start needs a different arm configuration"};
          }
        }
        pc.targets.assign(traj.waypoints.begin() + 1, traj.waypoints.end());
        pc.poses.assign(traj.waypoint_poses.begin() + 1, traj.waypoint_poses.end());
        if (!pc.targets.empty()) current = pc.targets.back();
      }
      pc.duration = traj.duration();
    } else if (const auto* s = std::get_if<GripperStep>(&c.step)) {
      JointVector target = current;
      target.w = s->width_m;
      auto r = plan_joint_move(current, target, d, speed_scale);
      if (auto* e = std::get_if<PlanError>(&r)) return failure(c, *e);
      pc.duration = std::get<Trajectory>(r).duration();
      pc.targets = {target};
      pc.poses = {forward(target, d)};
      current = target;
    } else {
      pc.duration = std::get<WaitStep>(c.step).seconds;
    }
    plan.total_duration += pc.duration;
    plan.commands.push_back(std::move(pc));
  }
  plan.end = current;
  return plan;
}

}  // namespace armstack
