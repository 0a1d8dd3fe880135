#include "armstack/robot_model.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace armstack {

namespace detail {
extern const char* const kDefaultDescriptionYaml;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void parse_fail(const YAML::Node& n, const std::string& msg) {
  const int line = n.IsDefined() ? n.Mark().line + 1 : 0;
  throw DescriptionParseError("line " + std::to_string(line) + ": " + msg, line);
}

// Every mapping in the schema is closed: unknown keys are reported rather than
// silently ignored so that typos do not fall back to defaults.
void check_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!map.IsMap()) parse_fail(map, "'" + where + "' must be a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) parse_fail(kv.first, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T required(const YAML::Node& map, const char* key, const std::string& where) {
  const YAML::Node n = map[key];
  if (!n) parse_fail(map, "missing key '" + std::string(key) + "' in " + where);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    parse_fail(n, "bad value for '" + std::string(key) + "' in " + where);
  }
}

template <typename T>
T optional(const YAML::Node& map, const char* key, T fallback) {
  const YAML::Node n = map[key];
  if (!n) return fallback;
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    parse_fail(n, "bad value for '" + std::string(key) + "'");
  }
}

JointConfig parse_joint(const YAML::Node& n, std::size_t index) {
  const std::string where = "joints[" + std::to_string(index) + "]";
  check_keys(n,
             {"name", "motor_id", "ticks_per_rev", "center_ticks", "sign", "limit_min_rad",
              "limit_max_rad", "vmax_rad_s", "amax_rad_s2"},
             where);
  JointConfig j;
  j.name = optional<std::string>(n, "name", "joint" + std::to_string(index + 1));
  j.motor_id = required<int>(n, "motor_id", where);
  j.ticks_per_rev = required<int>(n, "ticks_per_rev", where);
  j.center_ticks = required<int>(n, "center_ticks", where);
  j.sign = required<int>(n, "sign", where);
  j.limit_min_rad = required<double>(n, "limit_min_rad", where);
  j.limit_max_rad = required<double>(n, "limit_max_rad", where);
  j.vmax_rad_s = required<double>(n, "vmax_rad_s", where);
  j.amax_rad_s2 = required<double>(n, "amax_rad_s2", where);
  return j;
}

void require(bool cond, const std::string& what) {
  if (!cond) throw DescriptionValidationError(what);
}

}  // namespace

void validate(const RobotDescription& d) {
  require(d.schema_version == 1, "unsupported schema_version");
  for (double len : {d.h0, d.a2, d.a3, d.a4}) {
    require(std::isfinite(len), "non-finite link length");
    require(len > 0.0, "non-positive link length");
  }
  require(std::abs(d.a2 + d.a3 + d.a4 - d.horizontal_reach) <= 1e-12,
          "horizontal reach does not equal a2 + a3 + a4");

  std::set<int> ids;
  for (const auto& j : d.joints) {
    require(j.motor_id >= 1 && j.motor_id <= 253, "motor id out of range 1..253");
    require(ids.insert(j.motor_id).second, "duplicate motor id");
    require(j.ticks_per_rev > 0, "non-positive ticks_per_rev");
    require(j.center_ticks >= 0 && j.center_ticks < j.ticks_per_rev,
            "center_ticks outside [0, ticks_per_rev)");
    require(j.sign == 1 || j.sign == -1, "sign must be +1 or -1");
    require(std::isfinite(j.limit_min_rad) && std::isfinite(j.limit_max_rad),
            "non-finite joint limit");
    require(j.limit_min_rad < j.limit_max_rad, "joint limit_min_rad must be below limit_max_rad");
    require(std::isfinite(j.vmax_rad_s) && j.vmax_rad_s > 0.0, "non-positive velocity bound");
    require(std::isfinite(j.amax_rad_s2) && j.amax_rad_s2 > 0.0,
            "non-positive acceleration bound");
  }

  const auto& g = d.gripper;
  require(std::isfinite(g.width_closed_m) && std::isfinite(g.width_open_m) &&
              std::isfinite(g.angle_closed_rad) && std::isfinite(g.angle_open_rad),
          "non-finite gripper calibration");
  require(g.width_closed_m >= 0.0, "negative gripper closed width");
  require(g.width_open_m > g.width_closed_m, "gripper open width must exceed closed width");
  require(g.angle_open_rad != g.angle_closed_rad, "degenerate gripper angle range");

  require(d.bus.baud > 0, "non-positive baud rate");
  require(std::isfinite(d.bus.loop_hz) && d.bus.loop_hz > 0.0, "non-positive loop rate");
}

RobotDescription load_description(std::string_view doc) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(doc));
  } catch (const YAML::ParserException& e) {
    throw DescriptionParseError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg,
                                e.mark.line + 1);
  }
  if (!root.IsMap()) throw DescriptionParseError("line 1: document must be a mapping", 1);
  check_keys(root, {"schema_version", "name", "base", "geometry", "joints", "gripper", "bus"},
             "document");

  RobotDescription d;
  d.schema_version = required<int>(root, "schema_version", "document");
  if (d.schema_version != 1) parse_fail(root["schema_version"], "unsupported schema_version");
  d.name = optional<std::string>(root, "name", "");

  if (const auto base = root["base"]) {
    check_keys(base, {"size_m"}, "base");
    d.base_size_m = optional<double>(base, "size_m", 0.0);
  }

  const auto geom = root["geometry"];
  if (!geom) parse_fail(root, "missing section 'geometry'");
  check_keys(geom, {"h0", "a2", "a3", "a4", "horizontal_reach"}, "geometry");
  d.h0 = required<double>(geom, "h0", "geometry");
  d.a2 = required<double>(geom, "a2", "geometry");
  d.a3 = required<double>(geom, "a3", "geometry");
  d.a4 = required<double>(geom, "a4", "geometry");
  d.horizontal_reach = required<double>(geom, "horizontal_reach", "geometry");

  const auto joints = root["joints"];
  if (!joints) parse_fail(root, "missing section 'joints'");
  if (!joints.IsSequence()) parse_fail(joints, "'joints' must be a sequence");
  if (joints.size() != kActuators) {
    throw DescriptionValidationError("expected exactly 5 joints, got " +
                                     std::to_string(joints.size()));
  }
  for (std::size_t i = 0; i < kActuators; ++i) d.joints[i] = parse_joint(joints[i], i);

  const auto grip = root["gripper"];
  if (!grip) parse_fail(root, "missing section 'gripper'");
  check_keys(grip, {"width_closed_m", "width_open_m", "angle_closed_rad", "angle_open_rad"},
             "gripper");
  d.gripper.width_closed_m = required<double>(grip, "width_closed_m", "gripper");
  d.gripper.width_open_m = required<double>(grip, "width_open_m", "gripper");
  d.gripper.angle_closed_rad = required<double>(grip, "angle_closed_rad", "gripper");
  d.gripper.angle_open_rad = required<double>(grip, "angle_open_rad", "gripper");

  if (const auto bus = root["bus"]) {
    check_keys(bus, {"baud", "loop_hz"}, "bus");
    d.bus.baud = optional<int>(bus, "baud", d.bus.baud);
    d.bus.loop_hz = optional<double>(bus, "loop_hz", d.bus.loop_hz);
  }

  validate(d);
  return d;
}

RobotDescription load_description_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open description file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_description(ss.str());
}

std::string_view default_description_text() { return detail::kDefaultDescriptionYaml; }

const RobotDescription& default_description() {
  static const RobotDescription d = load_description(default_description_text());
  return d;
}

std::string dump_description(const RobotDescription& d) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << d.schema_version;
  out << YAML::Key << "name" << YAML::Value << d.name;
  out << YAML::Key << "base" << YAML::Value << YAML::BeginMap << YAML::Key << "size_m"
      << YAML::Value << d.base_size_m << YAML::EndMap;
  out << YAML::Key << "geometry" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "h0" << YAML::Value << d.h0;
  out << YAML::Key << "a2" << YAML::Value << d.a2;
  out << YAML::Key << "a3" << YAML::Value << d.a3;
  out << YAML::Key << "a4" << YAML::Value << d.a4;
  out << YAML::Key << "horizontal_reach" << YAML::Value << d.horizontal_reach;
  out << YAML::EndMap;
  out << YAML::Key << "joints" << YAML::Value << YAML::BeginSeq;
  for (const auto& j : d.joints) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << j.name;
    out << YAML::Key << "motor_id" << YAML::Value << j.motor_id;
    out << YAML::Key << "ticks_per_rev" << YAML::Value << j.ticks_per_rev;
    out << YAML::Key << "center_ticks" << YAML::Value << j.center_ticks;
    out << YAML::Key << "sign" << YAML::Value << j.sign;
    out << YAML::Key << "limit_min_rad" << YAML::Value << j.limit_min_rad;
    out << YAML::Key << "limit_max_rad" << YAML::Value << j.limit_max_rad;
    out << YAML::Key << "vmax_rad_s" << YAML::Value << j.vmax_rad_s;
    out << YAML::Key << "amax_rad_s2" << YAML::Value << j.amax_rad_s2;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "gripper" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "width_closed_m" << YAML::Value << d.gripper.width_closed_m;
  out << YAML::Key << "width_open_m" << YAML::Value << d.gripper.width_open_m;
  out << YAML::Key << "angle_closed_rad" << YAML::Value << d.gripper.angle_closed_rad;
  out << YAML::Key << "angle_open_rad" << YAML::Value << d.gripper.angle_open_rad;
  out << YAML::EndMap;
  out << YAML::Key << "bus" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "baud" << YAML::Value << d.bus.baud;
  out << YAML::Key << "loop_hz" << YAML::Value << d.bus.loop_hz;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

double ticks_to_angle(std::int64_t ticks, const JointConfig& jc) {
  return static_cast<double>(jc.sign) * static_cast<double>(ticks - jc.center_ticks) * kTwoPi /
         static_cast<double>(jc.ticks_per_rev);
}

std::int64_t angle_to_ticks(double angle, const JointConfig& jc) {
  const double offset = static_cast<double>(jc.sign) * angle *
                        static_cast<double>(jc.ticks_per_rev) / kTwoPi;
  // llround rounds half away from zero.
  return std::llround(static_cast<double>(jc.center_ticks) + offset);
}

double normalize_angle(double a) {
  double r = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

bool finite(const JointVector& q) {
  for (double v : q.q) {
    if (!std::isfinite(v)) return false;
  }
  return std::isfinite(q.w);
}

}  // namespace armstack
