#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "armstack/kinematics.hpp"
#include "armstack/motion.hpp"
#include "armstack/robot_model.hpp"

// Motion scripts are YAML documents:
//
//   schema_version: 1
//   commands:
//     - move_joints: {q: [0.0, 0.6, 0.9, 0.8], w: 0.04}
//     - move_line: {x: 0.20, y: 0.0, z: 0.05, pitch: 3.14159, step: 0.005}
//     - gripper: {width_m: 0.02}
//     - wait: {seconds: 0.5}

namespace armstack {

struct MoveJointsStep {
  std::array<double, kArmJoints> q{};
  std::optional<double> w;
};

struct MoveLineStep {
  ToolPose target;
  double step = kDefaultLineStep;
};

struct GripperStep {
  double width_m = 0.0;
};

struct WaitStep {
  double seconds = 0.0;
};

using ScriptStep = std::variant<MoveJointsStep, MoveLineStep, GripperStep, WaitStep>;

struct ScriptCommand {
  ScriptStep step;
  int line = 0;  // 1-based line in the script file
};

struct Script {
  std::string name;
  std::vector<ScriptCommand> commands;
};

class ScriptParseError : public std::runtime_error {
 public:
  ScriptParseError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

Script parse_script(std::string_view text, std::string name = "script");

/// Loads `path`, falling back to `path + ".yaml"`.
Script load_script(const std::string& path);

const char* command_name(const ScriptStep& s);

/// Joint targets that one script command turns into, in execution order.
struct PlannedCommand {
  const ScriptCommand* command = nullptr;
  double duration = 0.0;
  std::vector<JointVector> targets;  // empty for wait
  std::vector<ToolPose> poses;       // tool pose expected at each target
};

struct ScriptPlan {
  std::vector<PlannedCommand> commands;
  double total_duration = 0.0;
  JointVector end;
};

struct ScriptFailure {
  int line = 0;
  std::string code;  // wire error code vocabulary ("unreachable", "limit_violation", ...)
  std::string message;
};

/// Plans every command from `start` without touching any robot.
std::variant<ScriptPlan, ScriptFailure> plan_script(const Script& script, const RobotDescription& d,
                                                    const JointVector& start,
                                                    double speed_scale = 1.0);

/// Joint vector of the all-center configuration (arm up, gripper at its
/// center-tick width).
JointVector home_configuration(const RobotDescription& d);

}  // namespace armstack
