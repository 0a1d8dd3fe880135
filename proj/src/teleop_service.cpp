#include "armstack/teleop_service.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numbers>

#include "armstack/servo_sim.hpp"

namespace armstack {

using nlohmann::json;

namespace {

constexpr std::uint16_t kStatusBlockStart = reg::kMoving;  // Moving .. PresentPosition
constexpr std::uint16_t kStatusBlockLength = reg::kPresentPosition + 4 - reg::kMoving;

CommandError invalid(const std::string& msg) { return {err::kInvalidField, msg}; }

// Looks up a finite number; nullopt when absent, error text when malformed.
std::variant<std::monostate, double, CommandError> number_field(const json& msg, const char* key) {
  const auto it = msg.find(key);
  if (it == msg.end()) return std::monostate{};
  if (!it->is_number()) return invalid(std::string("'") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) return invalid(std::string("'") + key + "' must be finite");
  return v;
}

std::variant<double, CommandError> required_number(const json& msg, const char* key) {
  auto v = number_field(msg, key);
  if (std::holds_alternative<std::monostate>(v)) {
    return invalid(std::string("missing field '") + key + "'");
  }
  if (auto* e = std::get_if<CommandError>(&v)) return *e;
  return std::get<double>(v);
}

std::variant<int, CommandError> required_int(const json& msg, const char* key) {
  const auto it = msg.find(key);
  if (it == msg.end()) return invalid(std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) return invalid(std::string("'") + key + "' must be an integer");
  const auto v = it->get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    return invalid(std::string("'") + key + "' out of range");
  }
  return static_cast<int>(v);
}

bool ticks_within_limits(std::int64_t ticks, const JointConfig& jc, double tol) {
  return jc.within_limits(ticks_to_angle(ticks, jc), tol);
}

json ack_ok(std::uint64_t seq) {
  return {{"v", kProtocolVersion}, {"kind", "ack"}, {"ok", true}, {"seq", seq}};
}

json ack_error(const CommandError& e) {
  return {{"v", kProtocolVersion}, {"kind", "ack"}, {"ok", false}, {"code", e.code},
          {"message", e.message}};
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Idle: return "idle";
    case Mode::Jog: return "jog";
    case Mode::Trajectory: return "trajectory";
    case Mode::Fault: return "fault";
  }
  return "unknown";
}

bool RobotState::any_moving() const {
  for (const auto& a : actuators) {
    if (a.moving) return true;
  }
  return false;
}

json to_json(const RobotState& s) {
  json joints = json::array();
  for (std::size_t i = 0; i < kActuators; ++i) {
    const auto& a = s.actuators[i];
    json j = {{"id", a.id}, {"ticks", a.ticks}, {"rad", a.rad}, {"moving", a.moving}};
    if (i == kGripperIndex) j["width_m"] = s.q.w;
    joints.push_back(std::move(j));
  }
  return {{"v", kProtocolVersion},
          {"kind", "state"},
          {"seq", s.seq},
          {"t_ms", s.t_ms},
          {"mode", to_string(s.mode)},
          {"cmd_seq", s.cmd_seq},
          {"speed_scale", s.speed_scale},
          {"joints", std::move(joints)},
          {"q", {s.q.q[0], s.q.q[1], s.q.q[2], s.q.q[3]}},
          {"w", s.q.w},
          {"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"z", s.pose.z}, {"pitch", s.pose.pitch}}},
          {"fault", s.fault.empty() ? json(nullptr) : json(s.fault)}};
}

json to_json(const RobotDescription& d) {
  json joints = json::array();
  for (const auto& j : d.joints) {
    joints.push_back({{"name", j.name},
                      {"motor_id", j.motor_id},
                      {"ticks_per_rev", j.ticks_per_rev},
                      {"center_ticks", j.center_ticks},
                      {"sign", j.sign},
                      {"limit_min_rad", j.limit_min_rad},
                      {"limit_max_rad", j.limit_max_rad},
                      {"vmax_rad_s", j.vmax_rad_s},
                      {"amax_rad_s2", j.amax_rad_s2}});
  }
  return {{"v", kProtocolVersion},
          {"schema_version", d.schema_version},
          {"name", d.name},
          {"base", {{"size_m", d.base_size_m}}},
          {"geometry",
           {{"h0", d.h0}, {"a2", d.a2}, {"a3", d.a3}, {"a4", d.a4},
            {"horizontal_reach", d.horizontal_reach}}},
          {"joints", std::move(joints)},
          {"gripper",
           {{"width_closed_m", d.gripper.width_closed_m},
            {"width_open_m", d.gripper.width_open_m},
            {"angle_closed_rad", d.gripper.angle_closed_rad},
            {"angle_open_rad", d.gripper.angle_open_rad}}},
          {"bus", {{"baud", d.bus.baud}, {"loop_hz", d.bus.loop_hz}}}};
}

std::variant<Command, CommandError> parse_command(const json& msg) {
  if (!msg.is_object()) return invalid("command must be a JSON object");
  if (const auto v = msg.find("v"); v != msg.end()) {
    if (!v->is_number_integer() || v->get<std::int64_t>() != kProtocolVersion) {
      return CommandError{err::kUnsupportedVersion, "only protocol version 1 is supported"};
    }
  }
  const auto t = msg.find("type");
  if (t == msg.end() || !t->is_string()) return invalid("missing string field 'type'");
  const auto type = t->get<std::string>();

  if (type == "jog") {
    const auto joint = required_int(msg, "joint");
    if (auto* e = std::get_if<CommandError>(&joint)) return *e;
    const auto delta = required_int(msg, "delta_ticks");
    if (auto* e = std::get_if<CommandError>(&delta)) return *e;
    const int j = std::get<int>(joint);
    if (j < 1 || j > static_cast<int>(kActuators)) return invalid("'joint' must be in 1..5");
    return JogCmd{j, std::get<int>(delta)};
  }
  if (type == "goto_joints") {
    const auto q = msg.find("q");
    if (q == msg.end() || !q->is_array() || q->size() != kArmJoints) {
      return invalid("'q' must be an array of 4 numbers");
    }
    GotoJointsCmd c;
    for (std::size_t i = 0; i < kArmJoints; ++i) {
      if (!(*q)[i].is_number() || !std::isfinite((*q)[i].get<double>())) {
        return invalid("'q' must be an array of 4 finite numbers");
      }
      c.q[i] = (*q)[i].get<double>();
    }
    const auto w = number_field(msg, "w");
    if (auto* e = std::get_if<CommandError>(&w)) return *e;
    if (auto* v = std::get_if<double>(&w)) c.w = *v;
    return c;
  }
  if (type == "goto_pose") {
    GotoPoseCmd c;
    double* fields[] = {&c.pose.x, &c.pose.y, &c.pose.z, &c.pose.pitch};
    const char* names[] = {"x", "y", "z", "pitch"};
    for (int i = 0; i < 4; ++i) {
      const auto v = required_number(msg, names[i]);
      if (auto* e = std::get_if<CommandError>(&v)) return *e;
      *fields[i] = std::get<double>(v);
    }
    if (const auto b = msg.find("branch"); b != msg.end()) {
      if (*b == "elbow-up") c.branch = Branch::ElbowUp;
      else if (*b == "elbow-down") c.branch = Branch::ElbowDown;
      else return invalid("'branch' must be \"elbow-up\" or \"elbow-down\"");
    }
    return c;
  }
  if (type == "gripper") {
    const auto v = required_number(msg, "width_m");
    if (auto* e = std::get_if<CommandError>(&v)) return *e;
    return GripperCmd{std::get<double>(v)};
  }
  if (type == "home") return HomeCmd{};
  if (type == "stop") return StopCmd{};
  if (type == "set_speed_scale") {
    const auto v = required_number(msg, "scale");
    if (auto* e = std::get_if<CommandError>(&v)) return *e;
    const double s = std::get<double>(v);
    if (!(s > 0.0 && s <= 1.0)) return invalid("'scale' must be in (0, 1]");
    return SetSpeedScaleCmd{s};
  }
  return CommandError{err::kUnknownType, "unknown command type '" + type + "'"};
}

TeleopService::TeleopService(RobotDescription d, std::unique_ptr<Transport> transport,
                             ServiceOptions opts)
    : desc_(std::move(d)),
      transport_(std::move(transport)),
      opts_(opts),
      bus_(*transport_, opts.bus_timeout) {
  validate(desc_);
  for (std::size_t i = 0; i < kActuators; ++i) last_read_[i].id = desc_.joints[i].motor_id;
}

TeleopService::~TeleopService() { stop(); }

TeleopService::Subscription& TeleopService::Subscription::operator=(Subscription&& o) noexcept {
  if (this != &o) {
    if (svc_) svc_->unsubscribe(id_);
    svc_ = std::exchange(o.svc_, nullptr);
    id_ = o.id_;
  }
  return *this;
}

TeleopService::Subscription::~Subscription() {
  if (svc_) svc_->unsubscribe(id_);
}

TeleopService::Subscription TeleopService::subscribe(Listener fn) {
  std::lock_guard lock(state_mu_);
  const auto id = next_listener_++;
  listeners_.emplace(id, std::move(fn));
  return Subscription(this, id);
}

void TeleopService::unsubscribe(std::uint64_t id) {
  std::lock_guard lock(state_mu_);
  listeners_.erase(id);
}

RobotState TeleopService::latest_state() const {
  std::lock_guard lock(state_mu_);
  return latest_;
}

void TeleopService::publish(RobotState s) {
  std::lock_guard lock(state_mu_);
  latest_ = std::move(s);
  for (auto& [id, fn] : listeners_) fn(latest_);
}

JointVector TeleopService::joint_vector_from_ticks(
    const std::array<std::int32_t, kActuators>& ticks) const {
  std::array<double, kActuators> a{};
  for (std::size_t i = 0; i < kActuators; ++i) a[i] = ticks_to_angle(ticks[i], desc_.joints[i]);
  return from_actuator_angles(a, desc_);
}

void TeleopService::initialize() {
  for (const auto& j : desc_.joints) {
    const auto id = static_cast<std::uint8_t>(j.motor_id);
    if (!bus_.ping(id)) {
      throw TransportError("servo " + std::to_string(j.motor_id) + " does not answer ping on " +
                           transport_->describe());
    }
  }
  try {
    for (const auto& j : desc_.joints) {
      const auto id = static_cast<std::uint8_t>(j.motor_id);
      bus_.write_u8(id, reg::kTorqueEnable, 0);
      // Setpoints are streamed every tick, so the servo runs unprofiled.
      bus_.write_u32(id, reg::kProfileVelocity, 0);
      const auto present = bus_.read(id, reg::kPresentPosition, 4);
      bus_.write(id, reg::kGoalPosition, present);
      bus_.write_u8(id, reg::kTorqueEnable, 1);
    }
  } catch (const std::exception& e) {
    throw TransportError(std::string("servo configuration failed: ") + e.what());
  }

  if (!read_actuators()) throw TransportError("initial state read failed");
  std::array<std::int32_t, kActuators> ticks{};
  for (std::size_t i = 0; i < kActuators; ++i) ticks[i] = last_read_[i].ticks;
  setpoint_ = joint_vector_from_ticks(ticks);
  // Start inside the limits even if the hardware woke up outside them.
  for (std::size_t i = 0; i < kArmJoints; ++i) {
    setpoint_.q[i] = std::clamp(setpoint_.q[i], desc_.joints[i].limit_min_rad,
                                desc_.joints[i].limit_max_rad);
  }
  setpoint_.w = std::clamp(setpoint_.w, desc_.gripper.width_closed_m, desc_.gripper.width_open_m);
  {
    std::lock_guard lock(ref_mu_);
    const auto a = actuator_angles(setpoint_, desc_);
    for (std::size_t i = 0; i < kActuators; ++i) {
      jog_reference_[i] = static_cast<std::int32_t>(angle_to_ticks(a[i], desc_.joints[i]));
    }
  }
  control_tick(0.0);
}

std::optional<CommandError> TeleopService::check_against_state(const Command& c) {
  std::lock_guard lock(ref_mu_);
  const bool motion = !std::holds_alternative<HomeCmd>(c) && !std::holds_alternative<StopCmd>(c) &&
                      !std::holds_alternative<SetSpeedScaleCmd>(c);
  if (faulted_ && motion) {
    return CommandError{err::kFault, "bus fault latched; send home or stop first"};
  }
  if (const auto* jog = std::get_if<JogCmd>(&c)) {
    const std::size_t i = static_cast<std::size_t>(jog->joint - 1);
    const std::int64_t target =
        static_cast<std::int64_t>(jog_reference_[i]) + pending_jog_[i] + jog->delta_ticks;
    const auto& jc = desc_.joints[i];
    bool ok = ticks_within_limits(target, jc, 0.0);
    if (ok && i == kGripperIndex) {
      const auto w = gripper_width_for_angle(ticks_to_angle(target, jc), desc_.gripper);
      ok = !w.clamped;
    }
    if (!ok) {
      return CommandError{err::kLimitViolation,
                          "jog would move " + jc.name + " to tick " + std::to_string(target) +
                              ", outside its limits"};
    }
    pending_jog_[i] += jog->delta_ticks;
  }
  return std::nullopt;
}

json TeleopService::handle_command(const json& msg) {
  auto parsed = parse_command(msg);
  if (auto* e = std::get_if<CommandError>(&parsed)) return ack_error(*e);
  Command cmd = std::get<Command>(std::move(parsed));

  // Stateless checks that need the kinematics.
  if (const auto* g = std::get_if<GotoPoseCmd>(&cmd)) {
    const auto ik = inverse_analytic(g->pose, desc_, g->branch);
    if (std::holds_alternative<Unreachable>(ik)) {
      return ack_error({err::kUnreachable, "pose is outside the workspace"});
    }
    if (std::holds_alternative<LimitViolation>(ik)) {
      return ack_error({err::kLimitViolation, "every IK solution violates a joint limit"});
    }
  } else if (const auto* g = std::get_if<GotoJointsCmd>(&cmd)) {
    JointVector q;
    q.q = g->q;
    q.w = g->w.value_or(desc_.gripper.width_closed_m);
    const auto report = check_limits(q, desc_);
    if (!report.empty()) return ack_error({err::kLimitViolation, describe(report, desc_)});
  } else if (const auto* g = std::get_if<GripperCmd>(&cmd)) {
    if (g->width_m < desc_.gripper.width_closed_m || g->width_m > desc_.gripper.width_open_m) {
      return ack_error({err::kLimitViolation, "gripper width outside the calibrated range"});
    }
  }

  // Sequence numbers are assigned while holding the mailbox lock so queue
  // order equals seq order.
  std::lock_guard lock(mailbox_mu_);
  if (auto e = check_against_state(cmd)) return ack_error(*e);
  const auto seq = next_cmd_seq_.fetch_add(1);
  mailbox_.push_back({seq, std::move(cmd)});
  return ack_ok(seq);
}

std::string TeleopService::handle_command(std::string_view msg) {
  json parsed;
  try {
    parsed = json::parse(msg);
  } catch (const json::parse_error& e) {
    return ack_error({err::kBadJson, e.what()}).dump();
  }
  json ack = handle_command(parsed);
  if (parsed.is_object()) {
    if (const auto id = parsed.find("id"); id != parsed.end()) ack["id"] = *id;
  }
  return ack.dump();
}

void TeleopService::begin_move(const JointVector& target, Mode mode) {
  auto plan = plan_joint_move(setpoint_, target, desc_, speed_scale_);
  if (auto* e = std::get_if<PlanError>(&plan)) {
    spdlog::warn("dropping move: {}", e->message);
    return;
  }
  active_ = std::get<Trajectory>(std::move(plan));
  active_time_ = 0.0;
  mode_ = mode;
}

void TeleopService::apply(std::vector<Pending>& batch) {
  if (batch.empty()) return;
  applied_seq_ = std::max(applied_seq_, batch.back().seq);

  const bool stop = std::any_of(batch.begin(), batch.end(), [](const Pending& p) {
    return std::holds_alternative<StopCmd>(p.cmd);
  });
  if (stop) {
    // Freeze at the current sampled setpoint; everything else in the batch is dropped.
    active_.reset();
    if (mode_ == Mode::Fault) recover_from_fault();
    mode_ = Mode::Idle;
    return;
  }

  std::array<std::int32_t, kActuators> jog_sum{};
  bool jogged = false;
  for (const auto& p : batch) {
    if (mode_ == Mode::Fault && !std::holds_alternative<HomeCmd>(p.cmd)) continue;
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, JogCmd>) {
            jog_sum[static_cast<std::size_t>(c.joint - 1)] += c.delta_ticks;
            jogged = true;
          } else if constexpr (std::is_same_v<T, SetSpeedScaleCmd>) {
            speed_scale_ = c.scale;
          } else if constexpr (std::is_same_v<T, HomeCmd>) {
            if (mode_ == Mode::Fault && !recover_from_fault()) return;
            std::array<double, kActuators> zero{};
            JointVector home = from_actuator_angles(zero, desc_);
            home.q = {0.0, 0.0, 0.0, 0.0};
            begin_move(home, Mode::Trajectory);
            jogged = false;
            jog_sum.fill(0);
          } else if constexpr (std::is_same_v<T, GotoJointsCmd>) {
            JointVector q;
            q.q = c.q;
            q.w = c.w.value_or(setpoint_.w);
            begin_move(q, Mode::Trajectory);
            jogged = false;
            jog_sum.fill(0);
          } else if constexpr (std::is_same_v<T, GotoPoseCmd>) {
            const auto ik = inverse_analytic(c.pose, desc_, c.branch);
            if (const auto* s = std::get_if<IkSolution>(&ik)) {
              JointVector q = s->q;
              q.w = setpoint_.w;
              begin_move(q, Mode::Trajectory);
            }
            jogged = false;
            jog_sum.fill(0);
          } else if constexpr (std::is_same_v<T, GripperCmd>) {
            JointVector q = setpoint_;
            q.w = c.width_m;
            begin_move(q, Mode::Trajectory);
            jogged = false;
            jog_sum.fill(0);
          }
        },
        p.cmd);
  }

  if (jogged && mode_ != Mode::Fault) {
    // Jogs accumulate on top of the previous jog target while a jog is running.
    const auto current = actuator_angles(setpoint_, desc_);
    std::array<std::int32_t, kActuators> base{};
    for (std::size_t i = 0; i < kActuators; ++i) {
      base[i] = (mode_ == Mode::Jog && active_)
                    ? jog_target_[i]
                    : static_cast<std::int32_t>(angle_to_ticks(current[i], desc_.joints[i]));
    }
    std::array<double, kActuators> target = current;
    for (std::size_t i = 0; i < kActuators; ++i) {
      jog_target_[i] = base[i] + jog_sum[i];
      if (jog_sum[i] != 0 || (mode_ == Mode::Jog && active_)) {
        target[i] = ticks_to_angle(jog_target_[i], desc_.joints[i]);
      }
    }
    begin_move(from_actuator_angles(target, desc_), Mode::Jog);
  }
}

void TeleopService::write_goals(const std::array<double, kActuators>& actuator) {
  std::vector<std::pair<std::uint8_t, std::uint32_t>> goals;
  for (std::size_t i = 0; i < kActuators; ++i) {
    const auto& jc = desc_.joints[i];
    const auto ticks = angle_to_ticks(actuator[i], jc);
    // Half a tick of slack covers rounding of an in-limit angle.
    const double half_tick = std::numbers::pi / jc.ticks_per_rev;
    if (!ticks_within_limits(ticks, jc, half_tick) || ticks < 0 || ticks >= jc.ticks_per_rev) {
      enter_fault("refused goal outside limits for " + jc.name);
      return;
    }
    goals.emplace_back(static_cast<std::uint8_t>(jc.motor_id), static_cast<std::uint32_t>(ticks));
  }
  bus_.sync_write_u32(reg::kGoalPosition, goals);
  goal_writes_.fetch_add(1);
}

bool TeleopService::read_actuators() {
  try {
    for (std::size_t i = 0; i < kActuators; ++i) {
      const auto& jc = desc_.joints[i];
      const auto block =
          bus_.read(static_cast<std::uint8_t>(jc.motor_id), kStatusBlockStart, kStatusBlockLength);
      auto& a = last_read_[i];
      a.moving = block[0] != 0;
      a.ticks = static_cast<std::int32_t>(dxl::get_le(
          std::span<const std::uint8_t>(block).subspan(reg::kPresentPosition - kStatusBlockStart, 4)));
      a.rad = ticks_to_angle(a.ticks, jc);
    }
    return true;
  } catch (const BusTimeout& e) {
    enter_fault(e.what());
  } catch (const BusStatusError& e) {
    enter_fault(e.what());
  } catch (const TransportError& e) {
    enter_fault(e.what());
  }
  return false;
}

void TeleopService::enter_fault(const std::string& why) {
  if (mode_ != Mode::Fault) spdlog::error("entering fault: {}", why);
  mode_ = Mode::Fault;
  fault_ = why;
  active_.reset();
  {
    std::lock_guard lock(ref_mu_);
    faulted_ = true;
  }
  try {
    std::vector<dxl::SyncWriteEntry> entries;
    for (const auto& j : desc_.joints) entries.push_back({static_cast<std::uint8_t>(j.motor_id), {0}});
    bus_.sync_write(reg::kTorqueEnable, 1, entries);
  } catch (const std::exception& e) {
    spdlog::error("torque-off broadcast failed: {}", e.what());
  }
}

bool TeleopService::recover_from_fault() {
  // Hold the present position, then re-enable torque.
  mode_ = Mode::Idle;
  fault_.clear();
  if (!read_actuators()) return false;
  std::vector<std::pair<std::uint8_t, std::uint32_t>> hold;
  std::vector<dxl::SyncWriteEntry> torque;
  std::array<std::int32_t, kActuators> ticks{};
  for (std::size_t i = 0; i < kActuators; ++i) {
    const auto id = static_cast<std::uint8_t>(desc_.joints[i].motor_id);
    ticks[i] = last_read_[i].ticks;
    hold.emplace_back(id, static_cast<std::uint32_t>(ticks[i]));
    torque.push_back({id, {1}});
  }
  bus_.sync_write_u32(reg::kGoalPosition, hold);
  bus_.sync_write(reg::kTorqueEnable, 1, torque);
  setpoint_ = joint_vector_from_ticks(ticks);
  for (std::size_t i = 0; i < kArmJoints; ++i) {
    setpoint_.q[i] = std::clamp(setpoint_.q[i], desc_.joints[i].limit_min_rad,
                                desc_.joints[i].limit_max_rad);
  }
  setpoint_.w = std::clamp(setpoint_.w, desc_.gripper.width_closed_m, desc_.gripper.width_open_m);
  {
    std::lock_guard lock(ref_mu_);
    faulted_ = false;
  }
  spdlog::info("fault cleared");
  return true;
}

void TeleopService::control_tick(double dt) {
  std::vector<Pending> batch;
  {
    std::lock_guard lock(mailbox_mu_);
    batch.swap(mailbox_);
    std::lock_guard ref(ref_mu_);
    pending_jog_.fill(0);
  }
  apply(batch);

  if (mode_ != Mode::Fault && active_) {
    active_time_ += dt;
    const auto sample = active_->sample(active_time_);
    setpoint_ = sample.q;
    write_goals(sample.actuator);
    if (active_time_ >= active_->duration() && mode_ != Mode::Fault) {
      active_.reset();
      mode_ = Mode::Idle;
    }
  }

  if (dt > 0.0) transport_->advance(dt);
  read_actuators();

  {
    std::lock_guard lock(ref_mu_);
    const auto a = actuator_angles(setpoint_, desc_);
    for (std::size_t i = 0; i < kActuators; ++i) {
      jog_reference_[i] = (mode_ == Mode::Jog && active_)
                              ? jog_target_[i]
                              : static_cast<std::int32_t>(angle_to_ticks(a[i], desc_.joints[i]));
    }
  }

  clock_ms_ += dt * 1000.0;
  RobotState s;
  s.seq = ++state_seq_;
  s.t_ms = clock_ms_;
  s.actuators = last_read_;
  std::array<std::int32_t, kActuators> ticks{};
  for (std::size_t i = 0; i < kActuators; ++i) ticks[i] = last_read_[i].ticks;
  s.q = joint_vector_from_ticks(ticks);
  s.pose = forward(s.q, desc_);
  s.mode = mode_;
  s.cmd_seq = applied_seq_;
  s.speed_scale = speed_scale_;
  s.fault = fault_;
  publish(std::move(s));
}

void TeleopService::start() {
  if (running_.exchange(true)) return;
  loop_ = std::thread([this] {
    const double dt = 1.0 / desc_.bus.loop_hz;
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(dt));
    auto next = std::chrono::steady_clock::now();
    while (running_.load()) {
      next += period;
      try {
        control_tick(dt);
      } catch (const std::exception& e) {
        spdlog::error("control tick failed: {}", e.what());
      }
      std::this_thread::sleep_until(next);
      // Do not try to catch up after a stall.
      const auto now = std::chrono::steady_clock::now();
      if (now - next > 5 * period) next = now;
    }
  });
}

void TeleopService::stop() {
  if (!running_.exchange(false)) return;
  if (loop_.joinable()) loop_.join();
}

}  // namespace armstack
