#include "armstack/servo_sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <thread>

namespace armstack {

using dxl::ErrorCode;

namespace {

struct Writable {
  std::uint16_t address;
  std::size_t width;
};

constexpr Writable kWritable[] = {
    {reg::kOperatingMode, 1}, {reg::kTorqueEnable, 1},  {reg::kLed, 1},
    {reg::kProfileVelocity, 4}, {reg::kGoalPosition, 4},
};

constexpr std::size_t kMaxLog = 512;

std::uint8_t code(ErrorCode e) { return static_cast<std::uint8_t>(e); }

}  // namespace

double profile_velocity_to_ticks_per_s(std::uint32_t raw, int ticks_per_rev) {
  return static_cast<double>(raw) * reg::kVelocityUnitRpm * ticks_per_rev / 60.0;
}

std::uint32_t ticks_per_s_to_profile_velocity(double ticks_per_s, int ticks_per_rev) {
  return static_cast<std::uint32_t>(
      std::llround(ticks_per_s * 60.0 / (reg::kVelocityUnitRpm * ticks_per_rev)));
}

ControlTable::ControlTable() {
  set(reg::kModelNumber, 2, reg::kXl430ModelNumber);
  set(reg::kFirmwareVersion, 1, reg::kFirmware);
  set(reg::kBaudRate, 1, 1);  // 57600
  set(reg::kOperatingMode, 1, reg::kPositionControlMode);
}

std::uint32_t ControlTable::get(std::uint16_t address, std::size_t width) const {
  return dxl::get_le(std::span<const std::uint8_t>(data_).subspan(address, width));
}

void ControlTable::set(std::uint16_t address, std::size_t width, std::uint32_t value) {
  for (std::size_t i = 0; i < width; ++i) {
    data_[address + i] = static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF);
  }
}

std::span<const std::uint8_t> ControlTable::bytes(std::uint16_t address, std::size_t length) const {
  return std::span<const std::uint8_t>(data_).subspan(address, length);
}

ErrorCode ControlTable::check_write(std::uint16_t address,
                                    std::span<const std::uint8_t> data) const {
  if (data.empty()) return ErrorCode::DataLengthError;
  if (static_cast<std::size_t>(address) + data.size() > reg::kTableSize) {
    return ErrorCode::DataRangeError;
  }
  // Every touched byte must belong to a writable register that is written whole.
  std::size_t pos = address;
  const std::size_t end = address + data.size();
  while (pos < end) {
    const auto it = std::find_if(std::begin(kWritable), std::end(kWritable),
                                 [&](const Writable& w) { return w.address == pos; });
    if (it == std::end(kWritable) || pos + it->width > end) return ErrorCode::AccessError;
    pos += it->width;
  }
  return ErrorCode::None;
}

VirtualServo::VirtualServo(std::uint8_t id, int ticks_per_rev, std::int32_t initial_ticks,
                           ServoPolicy policy)
    : id_(id), ticks_per_rev_(ticks_per_rev), position_(initial_ticks), policy_(policy) {
  table_.set(reg::kId, 1, id);
  table_.set(reg::kGoalPosition, 4, static_cast<std::uint32_t>(initial_ticks));
  sync_registers();
}

std::int32_t VirtualServo::present_ticks() const {
  return static_cast<std::int32_t>(table_.get(reg::kPresentPosition, 4));
}

std::int32_t VirtualServo::goal_ticks() const {
  return static_cast<std::int32_t>(table_.get(reg::kGoalPosition, 4));
}

bool VirtualServo::torque_enabled() const { return table_.get(reg::kTorqueEnable, 1) != 0; }

ErrorCode VirtualServo::write(std::uint16_t address, std::span<const std::uint8_t> data) {
  if (const auto e = table_.check_write(address, data); e != ErrorCode::None) return e;

  const auto covers = [&](std::uint16_t a) {
    return a >= address && a < address + data.size();
  };
  const auto value_at = [&](std::uint16_t a, std::size_t width) {
    return dxl::get_le(data.subspan(a - address, width));
  };

  if (covers(reg::kOperatingMode) && torque_enabled()) return ErrorCode::AccessError;
  if (covers(reg::kTorqueEnable) && value_at(reg::kTorqueEnable, 1) > 1) {
    return ErrorCode::DataLimitError;
  }
  if (covers(reg::kGoalPosition)) {
    const auto goal = static_cast<std::int32_t>(value_at(reg::kGoalPosition, 4));
    if (goal < 0 || goal >= ticks_per_rev_) return ErrorCode::DataLimitError;
    const bool torque_after =
        covers(reg::kTorqueEnable) ? value_at(reg::kTorqueEnable, 1) != 0 : torque_enabled();
    if (!torque_after && policy_.reject_goal_when_torque_off) return ErrorCode::AccessError;
  }

  for (std::size_t i = 0; i < data.size(); ++i) {
    table_.set(static_cast<std::uint16_t>(address + i), 1, data[i]);
  }
  sync_registers();
  return ErrorCode::None;
}

void VirtualServo::step(double dt) {
  if (torque_enabled()) {
    const double goal = goal_ticks();
    const double diff = goal - position_;
    const std::uint32_t pv = table_.get(reg::kProfileVelocity, 4);
    if (pv == 0) {
      position_ = goal;
    } else {
      const double max_move = profile_velocity_to_ticks_per_s(pv, ticks_per_rev_) * dt;
      position_ = std::abs(diff) <= max_move ? goal : position_ + std::copysign(max_move, diff);
    }
  }
  sync_registers();
}

void VirtualServo::sync_registers() {
  const auto present = static_cast<std::int32_t>(std::lround(position_));
  table_.set(reg::kPresentPosition, 4, static_cast<std::uint32_t>(present));
  const bool moving = torque_enabled() && std::abs(goal_ticks() - present) > 1;
  table_.set(reg::kMoving, 1, moving ? 1 : 0);
}

VirtualBus::VirtualBus(const std::vector<std::uint8_t>& ids, ServoPolicy policy) {
  for (auto id : ids) {
    if (id > dxl::kMaxDeviceId) throw std::invalid_argument("servo id out of range");
    if (!servos_.try_emplace(id, id, 4096, 2048, policy).second) {
      throw std::invalid_argument("duplicate servo id " + std::to_string(id));
    }
  }
}

VirtualBus VirtualBus::from_description(const RobotDescription& d, ServoPolicy policy) {
  std::vector<std::uint8_t> ids;
  for (const auto& j : d.joints) ids.push_back(static_cast<std::uint8_t>(j.motor_id));
  VirtualBus bus(ids, policy);
  bus.servos_.clear();
  for (const auto& j : d.joints) {
    const auto id = static_cast<std::uint8_t>(j.motor_id);
    bus.servos_.try_emplace(id, id, j.ticks_per_rev, j.center_ticks, policy);
  }
  return bus;
}

VirtualServo* VirtualBus::find(std::uint8_t id) {
  const auto it = servos_.find(id);
  return it == servos_.end() ? nullptr : &it->second;
}

const VirtualServo* VirtualBus::find(std::uint8_t id) const {
  const auto it = servos_.find(id);
  return it == servos_.end() ? nullptr : &it->second;
}

std::vector<std::uint8_t> VirtualBus::ids() const {
  std::vector<std::uint8_t> out;
  for (const auto& [id, s] : servos_) out.push_back(id);
  return out;
}

void VirtualBus::note(std::string event) {
  if (diag_.log.size() >= kMaxLog) diag_.log.erase(diag_.log.begin());
  diag_.log.push_back(std::move(event));
}

dxl::Bytes VirtualBus::handle(std::span<const std::uint8_t> frame_bytes) {
  dxl::Bytes out;
  const auto packets = framer_.feed(frame_bytes);
  diag_.crc_failures = framer_.crc_failures();
  for (const auto& pkt : packets) {
    if (const auto* ins = std::get_if<dxl::InstructionPacket>(&pkt)) {
      ++diag_.frames;
      respond(*ins, out);
    } else {
      ++diag_.status_frames;
    }
  }
  return out;
}

void VirtualBus::respond(const dxl::InstructionPacket& p, dxl::Bytes& out) {
  const auto reply = [&](std::uint8_t id, std::uint8_t err, dxl::Bytes params) {
    const auto bytes = dxl::encode(dxl::StatusPacket{id, err, std::move(params)});
    out.insert(out.end(), bytes.begin(), bytes.end());
    ++diag_.responses;
  };
  const auto ping_params = [](const VirtualServo& s) {
    dxl::Bytes b;
    dxl::put_u16(b, static_cast<std::uint16_t>(s.table().get(reg::kModelNumber, 2)));
    b.push_back(static_cast<std::uint8_t>(s.table().get(reg::kFirmwareVersion, 1)));
    return b;
  };

  if (p.id == dxl::kBroadcastId) {
    if (p.instruction == dxl::Instruction::Ping) {
      note("ping broadcast");
      for (auto& [id, s] : servos_) reply(id, 0, ping_params(s));
    } else if (p.instruction == dxl::Instruction::SyncWrite) {
      if (p.params.size() < 4) return;
      const std::uint16_t address = static_cast<std::uint16_t>(dxl::get_le({p.params.data(), 2}));
      const std::size_t length = dxl::get_le({p.params.data() + 2, 2});
      const std::size_t stride = length + 1;
      if (length == 0 || (p.params.size() - 4) % stride != 0) return;
      note("sync_write @" + std::to_string(address) + " x" +
           std::to_string((p.params.size() - 4) / stride));
      for (std::size_t off = 4; off < p.params.size(); off += stride) {
        if (auto* s = find(p.params[off])) {
          const auto data = std::span<const std::uint8_t>(p.params).subspan(off + 1, length);
          if (s->write(address, data) == ErrorCode::None) ++diag_.register_writes;
        }
      }
    }
    return;
  }

  VirtualServo* s = find(p.id);
  if (s == nullptr) return;  // absent devices stay silent

  switch (p.instruction) {
    case dxl::Instruction::Ping:
      note("ping " + std::to_string(p.id));
      reply(p.id, 0, ping_params(*s));
      return;
    case dxl::Instruction::Read: {
      if (p.params.size() != 4) {
        reply(p.id, code(ErrorCode::DataLengthError), {});
        return;
      }
      const auto address = static_cast<std::uint16_t>(dxl::get_le({p.params.data(), 2}));
      const std::size_t length = dxl::get_le({p.params.data() + 2, 2});
      if (length == 0 || address + length > reg::kTableSize) {
        reply(p.id, code(ErrorCode::DataRangeError), {});
        return;
      }
      const auto b = s->table().bytes(address, length);
      reply(p.id, 0, dxl::Bytes(b.begin(), b.end()));
      return;
    }
    case dxl::Instruction::Write: {
      if (p.params.size() < 3) {
        reply(p.id, code(ErrorCode::DataLengthError), {});
        return;
      }
      const auto address = static_cast<std::uint16_t>(dxl::get_le({p.params.data(), 2}));
      const auto e = s->write(address, std::span<const std::uint8_t>(p.params).subspan(2));
      if (e == ErrorCode::None) ++diag_.register_writes;
      note("write " + std::to_string(p.id) + " @" + std::to_string(address) +
           (e == ErrorCode::None ? "" : " rejected"));
      reply(p.id, code(e), {});
      return;
    }
    default:
      reply(p.id, code(ErrorCode::InstructionError), {});
      return;
  }
}

void VirtualBus::step(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step dt must be positive");
  for (auto& [id, s] : servos_) s.step(dt);
}

void SimTransport::write(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  const auto resp = bus_.handle(bytes);
  pending_.insert(pending_.end(), resp.begin(), resp.end());
}

std::size_t SimTransport::read(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
  {
    std::lock_guard lock(mu_);
    if (!pending_.empty()) {
      const std::size_t n = std::min(out.size(), pending_.size());
      std::copy_n(pending_.begin(), n, out.begin());
      pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
      return n;
    }
  }
  // Responses are produced synchronously, so an empty queue stays empty.
  if (timeout.count() > 0) std::this_thread::sleep_for(std::min(timeout, std::chrono::milliseconds(1)));
  return 0;
}

void SimTransport::advance(double dt) {
  std::lock_guard lock(mu_);
  bus_.step(dt);
}

}  // namespace armstack
