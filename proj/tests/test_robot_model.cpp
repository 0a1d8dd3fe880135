#include <doctest.h>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "armstack/robot_model.hpp"

using namespace armstack;
using std::numbers::pi;

namespace {

JointConfig joint(int center, int sign, int tpr = 4096) {
  JointConfig j;
  j.center_ticks = center;
  j.sign = sign;
  j.ticks_per_rev = tpr;
  return j;
}

// Rebuilds every mapping of a YAML tree with its keys in reverse order.
YAML::Node reversed(const YAML::Node& n) {
  if (n.IsMap()) {
    std::vector<std::pair<YAML::Node, YAML::Node>> items;
    for (const auto& kv : n) items.emplace_back(kv.first, kv.second);
    YAML::Node out(YAML::NodeType::Map);
    for (auto it = items.rbegin(); it != items.rend(); ++it) out[it->first] = reversed(it->second);
    return out;
  }
  if (n.IsSequence()) {
    YAML::Node out(YAML::NodeType::Sequence);
    for (const auto& item : n) out.push_back(reversed(item));
    return out;
  }
  return YAML::Clone(n);
}

}  // namespace

TEST_CASE("default description has the stated link lengths and reaches") {
  const auto& d = default_description();
  CHECK(d.h0 == doctest::Approx(0.10).epsilon(1e-15));
  CHECK(d.a2 == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(d.a3 == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(d.a4 == doctest::Approx(0.06).epsilon(1e-15));
  CHECK(std::abs(d.a2 + d.a3 + d.a4 - 0.30) < 1e-12);
  CHECK(std::abs(d.vertical_reach() - 0.40) < 1e-12);
  for (std::size_t i = 0; i < kActuators; ++i) {
    CHECK(d.joints[i].motor_id == static_cast<int>(i) + 1);
  }
  CHECK(d.base_size_m == doctest::Approx(0.09));
}

TEST_CASE("validation names the violated invariant") {
  const auto expect = [](const std::function<void(RobotDescription&)>& mutate,
                         const std::string& message) {
    RobotDescription d = default_description();
    mutate(d);
    CAPTURE(message);
    try {
      validate(d);
      FAIL("mutation accepted");
    } catch (const DescriptionValidationError& e) {
      CHECK(std::string(e.what()).find(message) != std::string::npos);
    }
  };
  expect([](auto& d) { d.joints[3].motor_id = 2; }, "duplicate motor id");
  expect([](auto& d) { d.a2 = 0.0; d.horizontal_reach = d.a3 + d.a4; }, "non-positive link length");
  expect([](auto& d) { d.a3 = -0.12; }, "non-positive link length");
  expect([](auto& d) { d.h0 = 0.0; }, "non-positive link length");
  expect([](auto& d) { d.a4 = std::nan(""); }, "non-finite link length");
  expect([](auto& d) { d.horizontal_reach = 0.31; }, "horizontal reach");
  expect([](auto& d) { d.joints[0].motor_id = 0; }, "motor id out of range");
  expect([](auto& d) { d.joints[4].motor_id = 254; }, "motor id out of range");
  expect([](auto& d) { d.joints[1].ticks_per_rev = 0; }, "non-positive ticks_per_rev");
  expect([](auto& d) { d.joints[1].center_ticks = 4096; }, "center_ticks outside");
  expect([](auto& d) { d.joints[1].center_ticks = -1; }, "center_ticks outside");
  expect([](auto& d) { d.joints[2].sign = 0; }, "sign must be");
  expect([](auto& d) { d.joints[2].limit_min_rad = 3.0; }, "limit_min_rad must be below");
  expect([](auto& d) { d.joints[2].limit_max_rad = INFINITY; }, "non-finite joint limit");
  expect([](auto& d) { d.joints[3].vmax_rad_s = 0.0; }, "non-positive velocity bound");
  expect([](auto& d) { d.joints[3].amax_rad_s2 = -1.0; }, "non-positive acceleration bound");
  expect([](auto& d) { d.gripper.width_open_m = 0.0; }, "open width must exceed");
  expect([](auto& d) { d.gripper.width_closed_m = -0.01; }, "negative gripper closed width");
  expect([](auto& d) { d.gripper.angle_open_rad = d.gripper.angle_closed_rad; },
         "degenerate gripper angle range");
  expect([](auto& d) { d.bus.baud = 0; }, "non-positive baud rate");
  expect([](auto& d) { d.bus.loop_hz = 0.0; }, "non-positive loop rate");
  expect([](auto& d) { d.schema_version = 2; }, "unsupported schema_version");
}

TEST_CASE("yaml documents are validated on load") {
  std::string text(default_description_text());

  SUBCASE("duplicate id") {
    const auto pos = text.find("motor_id: 4");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "motor_id: 3");
    CHECK_THROWS_WITH_AS(load_description(text), doctest::Contains("duplicate motor id"),
                         DescriptionValidationError);
  }
  SUBCASE("unknown key reports its line") {
    const auto pos = text.find("  a4: 0.06");
    REQUIRE(pos != std::string::npos);
    text.insert(pos, "  a5: 0.01\n");
    const int expected_line =
        static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
    try {
      load_description(text);
      FAIL("unknown key accepted");
    } catch (const DescriptionParseError& e) {
      CHECK(e.line() == expected_line);
      CHECK(std::string(e.what()).find("a5") != std::string::npos);
    }
  }
  SUBCASE("wrong joint count") {
    YAML::Node root = YAML::Load(text);
    root["joints"].remove(4);
    YAML::Emitter out;
    out << root;
    CHECK_THROWS_AS(load_description(out.c_str()), DescriptionValidationError);
  }
  SUBCASE("malformed yaml") {
    CHECK_THROWS_AS(load_description("geometry: [unclosed"), DescriptionParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS(load_description_file("/nonexistent/description.yaml"));
  }
}

TEST_CASE("loading is deterministic and independent of key order") {
  const std::string text(default_description_text());
  const auto a = dump_description(load_description(text));
  const auto b = dump_description(load_description(text));
  CHECK(a == b);

  YAML::Emitter out;
  out << reversed(YAML::Load(text));
  CHECK(dump_description(load_description(out.c_str())) == a);
}

TEST_CASE("dump and load round trip") {
  RobotDescription d = default_description();
  d.name = "custom";
  d.joints[2].sign = -1;
  d.joints[2].center_ticks = 1000;
  d.gripper.angle_open_rad = -1.0;
  const auto back = load_description(dump_description(d));
  CHECK(dump_description(back) == dump_description(d));
  CHECK(back.joints[2].sign == -1);
  CHECK(back.joints[2].center_ticks == 1000);
  CHECK(back.gripper.angle_open_rad == -1.0);
}

TEST_CASE("ticks to angle") {
  CHECK(ticks_to_angle(2048, joint(2048, 1)) == 0.0);
  CHECK(ticks_to_angle(3072, joint(2048, 1)) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(ticks_to_angle(1024, joint(2048, -1)) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(angle_to_ticks(0.0, joint(2048, 1)) == 2048);
  CHECK(angle_to_ticks(pi / 2, joint(2048, 1)) == 3072);
  CHECK(angle_to_ticks(pi / 2, joint(2048, -1)) == 1024);
}

TEST_CASE("tick round trip over the full range") {
  for (int sign : {1, -1}) {
    for (int tpr : {4096, 1024}) {
      const auto jc = joint(tpr / 2, sign, tpr);
      for (int t = 0; t < tpr; ++t) {
        if (angle_to_ticks(ticks_to_angle(t, jc), jc) != t) {
          FAIL("round trip broke at tick " << t << " sign " << sign << " tpr " << tpr);
        }
      }
    }
  }
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> tick(0, 4095), center(0, 4095);
  for (int i = 0; i < 10000; ++i) {
    const auto jc = joint(center(rng), i % 2 ? 1 : -1);
    const int t = tick(rng);
    REQUIRE(angle_to_ticks(ticks_to_angle(t, jc), jc) == t);
  }
}

TEST_CASE("normalize_angle wraps into (-pi, pi]") {
  CHECK(normalize_angle(pi) == doctest::Approx(pi));
  CHECK(normalize_angle(-pi) == doctest::Approx(pi));
  CHECK(normalize_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double n = normalize_angle(a);
    REQUIRE(n > -pi);
    REQUIRE(n <= pi);
    REQUIRE(std::abs(std::remainder(a - n, 2 * pi)) < 1e-9);
  }
}
