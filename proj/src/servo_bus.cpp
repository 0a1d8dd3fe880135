#include "armstack/servo_bus.hpp"

#include <array>

namespace armstack {

ServoBus::ServoBus(Transport& transport, std::chrono::milliseconds timeout)
    : transport_(transport), timeout_(timeout) {}

void ServoBus::discard_input() {
  std::array<std::uint8_t, 256> scratch{};
  while (transport_.read(scratch, std::chrono::milliseconds(0)) > 0) {
  }
  backlog_.clear();
  framer_.reset();
}

void ServoBus::send(const dxl::InstructionPacket& p) {
  const auto bytes = dxl::encode(p);
  transport_.write(bytes);
}

dxl::StatusPacket ServoBus::await_status(std::uint8_t id) {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::array<std::uint8_t, 256> chunk{};
  for (;;) {
    for (auto it = backlog_.begin(); it != backlog_.end(); ++it) {
      if (it->id == id) {
        dxl::StatusPacket s = std::move(*it);
        backlog_.erase(it);
        return s;
      }
    }
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) throw BusTimeout("no status from servo " + std::to_string(id));
    const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
    const std::size_t n = transport_.read(chunk, std::max(wait, std::chrono::milliseconds(1)));
    if (n == 0) continue;
    for (auto& pkt : framer_.feed(std::span<const std::uint8_t>(chunk.data(), n))) {
      // Our own instruction echoed back on a half-duplex adapter is skipped.
      if (auto* s = std::get_if<dxl::StatusPacket>(&pkt)) backlog_.push_back(std::move(*s));
    }
  }
}

std::optional<PingInfo> ServoBus::ping(std::uint8_t id) {
  discard_input();
  send(dxl::make_ping(id));
  try {
    const auto s = await_status(id);
    PingInfo info;
    if (s.params.size() >= 3) {
      info.model = static_cast<std::uint16_t>(dxl::get_le({s.params.data(), 2}));
      info.firmware = s.params[2];
    }
    return info;
  } catch (const BusTimeout&) {
    return std::nullopt;
  }
}

dxl::Bytes ServoBus::read(std::uint8_t id, std::uint16_t address, std::uint16_t length) {
  discard_input();
  send(dxl::make_read(id, address, length));
  auto s = await_status(id);
  if ((s.error & 0x7F) != 0) throw BusStatusError(id, s.error);
  if (s.params.size() != length) throw BusStatusError(id, static_cast<std::uint8_t>(dxl::ErrorCode::DataLengthError));
  return std::move(s.params);
}

void ServoBus::write(std::uint8_t id, std::uint16_t address, std::span<const std::uint8_t> data) {
  discard_input();
  send(dxl::make_write(id, address, data));
  const auto s = await_status(id);
  if ((s.error & 0x7F) != 0) throw BusStatusError(id, s.error);
}

void ServoBus::write_u8(std::uint8_t id, std::uint16_t address, std::uint8_t value) {
  const std::uint8_t b[1] = {value};
  write(id, address, b);
}

void ServoBus::write_u32(std::uint8_t id, std::uint16_t address, std::uint32_t value) {
  dxl::Bytes b;
  dxl::put_u32(b, value);
  write(id, address, b);
}

void ServoBus::sync_write(std::uint16_t address, std::uint16_t length,
                          std::span<const dxl::SyncWriteEntry> entries) {
  send(dxl::make_sync_write(address, length, entries));
}

void ServoBus::sync_write_u32(std::uint16_t address,
                              std::span<const std::pair<std::uint8_t, std::uint32_t>> values) {
  std::vector<dxl::SyncWriteEntry> entries;
  entries.reserve(values.size());
  for (const auto& [id, v] : values) {
    dxl::SyncWriteEntry e{id, {}};
    dxl::put_u32(e.data, v);
    entries.push_back(std::move(e));
  }
  sync_write(address, 4, entries);
}

}  // namespace armstack
