#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "armstack/dxl_protocol.hpp"
#include "armstack/transport.hpp"

namespace armstack {

class BusTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A status packet came back with a non-zero error code.
class BusStatusError : public std::runtime_error {
 public:
  BusStatusError(std::uint8_t id, std::uint8_t error)
      : std::runtime_error("servo " + std::to_string(id) + " reported error 0x" +
                           std::to_string(error)),
        id_(id),
        error_(error) {}
  std::uint8_t id() const { return id_; }
  std::uint8_t error() const { return error_; }

 private:
  std::uint8_t id_;
  std::uint8_t error_;
};

struct PingInfo {
  std::uint16_t model = 0;
  std::uint8_t firmware = 0;
};

/// Host side of the bus: one request, at most one status reply.
class ServoBus {
 public:
  explicit ServoBus(Transport& transport,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(20));

  /// nullopt when the device does not answer.
  std::optional<PingInfo> ping(std::uint8_t id);

  dxl::Bytes read(std::uint8_t id, std::uint16_t address, std::uint16_t length);
  void write(std::uint8_t id, std::uint16_t address, std::span<const std::uint8_t> data);
  void write_u8(std::uint8_t id, std::uint16_t address, std::uint8_t value);
  void write_u32(std::uint8_t id, std::uint16_t address, std::uint32_t value);

  /// Broadcast, no replies expected.
  void sync_write(std::uint16_t address, std::uint16_t length,
                  std::span<const dxl::SyncWriteEntry> entries);
  void sync_write_u32(std::uint16_t address, std::span<const std::pair<std::uint8_t, std::uint32_t>> values);

  Transport& transport() { return transport_; }
  std::size_t crc_failures() const { return framer_.crc_failures(); }

 private:
  void send(const dxl::InstructionPacket& p);
  dxl::StatusPacket await_status(std::uint8_t id);
  void discard_input();

  Transport& transport_;
  std::chrono::milliseconds timeout_;
  dxl::FrameBuffer framer_;
  std::vector<dxl::StatusPacket> backlog_;
};

}  // namespace armstack
