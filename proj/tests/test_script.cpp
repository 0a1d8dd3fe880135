#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>

#include "armstack/script.hpp"

using namespace armstack;

namespace {

const RobotDescription& desc() {
  static const RobotDescription d = default_description();
  return d;
}

int parse_error_line(const std::string& text) {
  try {
    parse_script(text);
  } catch (const ScriptParseError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("parse all four commands with their lines") {
  const auto s = parse_script(R"(schema_version: 1
name: sample
commands:
  - move_joints: {q: [0.1, 0.2, 0.3, 0.4], w: 0.03}
  - move_line: {x: 0.2, y: 0.0, z: 0.1, pitch: 1.0}
  - gripper: {width_m: 0.02}
  - wait: {seconds: 0.5}
)");
  CHECK(s.name == "sample");
  REQUIRE(s.commands.size() == 4);
  CHECK(s.commands[0].line == 4);
  CHECK(s.commands[3].line == 7);

  const auto& mj = std::get<MoveJointsStep>(s.commands[0].step);
  CHECK(mj.q[3] == doctest::Approx(0.4));
  CHECK(mj.w.value() == doctest::Approx(0.03));
  const auto& ml = std::get<MoveLineStep>(s.commands[1].step);
  CHECK(ml.target.x == doctest::Approx(0.2));
  CHECK(ml.step == doctest::Approx(kDefaultLineStep));
  CHECK(std::get<GripperStep>(s.commands[2].step).width_m == doctest::Approx(0.02));
  CHECK(std::get<WaitStep>(s.commands[3].step).seconds == doctest::Approx(0.5));
  CHECK(std::string(command_name(s.commands[1].step)) == "move_line");
}

TEST_CASE("parse errors carry the offending line") {
  CHECK(parse_error_line("commands:\n  - fly: {x: 1}\n") == 2);
  CHECK(parse_error_line("commands:\n  - wait: {seconds: 1}\n  - wait: {minutes: 1}\n") == 3);
  CHECK(parse_error_line("commands:\n  - move_joints: {q: [1, 2, 3]}\n") == 2);
  CHECK(parse_error_line("commands:\n  - gripper: {width_m: abc}\n") == 2);
  CHECK(parse_error_line("commands:\n  - wait: {seconds: -1}\n") == 2);
  CHECK(parse_error_line("commands:\n  - move_line: {x: 0.2, y: 0, z: 0.1, pitch: 0, step: 0}\n") ==
        2);
  CHECK(parse_error_line("schema_version: 2\ncommands: []\n") == 1);
  CHECK(parse_error_line("speed: 3\ncommands: []\n") == 1);
  CHECK(parse_error_line("commands: [\n") > 0);
  CHECK(parse_error_line("- just a list\n") == 1);
}

TEST_CASE("load_script falls back to the .yaml extension") {
  const std::string base = "armstack_test_script_load";
  {
    std::ofstream f(base + ".yaml");
    f << "commands:\n  - wait: {seconds: 0.1}\n";
  }
  const auto s = load_script(base);
  CHECK(s.name == base);
  CHECK(s.commands.size() == 1);
  std::remove((base + ".yaml").c_str());
  CHECK_THROWS_AS(load_script(base), std::runtime_error);
}

TEST_CASE("home configuration is the all-center pose") {
  const JointVector h = home_configuration(desc());
  for (double q : h.q) CHECK(q == doctest::Approx(0.0));
  const ToolPose p = forward(h, desc());
  CHECK(p.z == doctest::Approx(0.40));
}

TEST_CASE("shipped demo plans within the time budget") {
  const auto s = load_script(std::string(ARMSTACK_SOURCE_DIR) + "/demo/pick_place.yaml");
  const auto r = plan_script(s, desc(), home_configuration(desc()));
  if (const auto* f = std::get_if<ScriptFailure>(&r)) {
    FAIL("line " << f->line << ": " << f->code << ": " << f->message);
  }
  const auto& plan = std::get<ScriptPlan>(r);
  CHECK(plan.commands.size() == s.commands.size());
  CHECK(plan.total_duration > 1.0);
  CHECK(plan.total_duration < 60.0);

  double sum = 0.0;
  for (const auto& pc : plan.commands) {
    sum += pc.duration;
    CHECK(pc.targets.size() == pc.poses.size());
    for (std::size_t k = 0; k < pc.targets.size(); ++k) {
      CHECK(check_limits(pc.targets[k], desc()).empty());
      CHECK(pose_distance(forward(pc.targets[k], desc()), pc.poses[k]) < 1e-9);
    }
  }
  CHECK(sum == doctest::Approx(plan.total_duration));

  // The script returns to the home configuration.
  for (double q : plan.end.q) CHECK(std::abs(q) < 1e-12);
}

TEST_CASE("line beyond the reach fails at its own line") {
  const auto s = parse_script(R"(commands:
  - move_joints: {q: [0.0, 0.59, 1.3181, 1.2335]}
  - wait: {seconds: 0.1}
  - move_line: {x: 0.35, y: 0.0, z: 0.10, pitch: 1.5708}
  - wait: {seconds: 0.1}
)");
  const auto r = plan_script(s, desc(), home_configuration(desc()));
  REQUIRE(std::holds_alternative<ScriptFailure>(r));
  const auto& f = std::get<ScriptFailure>(r);
  CHECK(f.line == 4);
  CHECK(f.code == "unreachable");
}

TEST_CASE("joint move outside the limits fails with limit_violation") {
  const auto s = parse_script("commands:\n  - wait: {seconds: 0}\n  - move_joints: {q: [0, 2.0, 0, 0]}\n");
  const auto r = plan_script(s, desc(), home_configuration(desc()));
  REQUIRE(std::holds_alternative<ScriptFailure>(r));
  CHECK(std::get<ScriptFailure>(r).line == 3);
  CHECK(std::get<ScriptFailure>(r).code == "limit_violation");
}

TEST_CASE("speed scale stretches the plan") {
  const auto s = parse_script("commands:\n  - move_joints: {q: [1.0, 0.3, 0.2, 0.1]}\n");
  const auto full = std::get<ScriptPlan>(plan_script(s, desc(), home_configuration(desc()), 1.0));
  const auto half = std::get<ScriptPlan>(plan_script(s, desc(), home_configuration(desc()), 0.5));
  CHECK(half.total_duration > full.total_duration * 1.5);
}
