#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// Dynamixel Protocol 2.0 framing:
//
//   FF FF FD 00 | ID | LEN_L LEN_H | INST | [ERR] | PARAMS... | CRC_L CRC_H
//
// LEN counts everything after itself (instruction, optional error byte,
// stuffed parameters, CRC). Inside the instruction..params region every
// FF FF FD is escaped as FF FF FD FD. The CRC covers the whole stuffed frame
// from the first header byte up to the CRC itself.

namespace armstack::dxl {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kBroadcastId = 0xFE;
inline constexpr std::uint8_t kMaxDeviceId = 253;
inline constexpr std::uint8_t kStatusInstruction = 0x55;
inline constexpr std::size_t kMaxParams = 65528;
inline constexpr std::size_t kMaxFrameBytes = 1024;
inline constexpr std::size_t kHeaderBytes = 7;  // FF FF FD 00 ID LEN_L LEN_H

/// Instruction byte. Only Ping/Read/Write/SyncWrite are produced by this
/// stack; other values survive decoding so the set can grow.
enum class Instruction : std::uint8_t {
  Ping = 0x01,
  Read = 0x02,
  Write = 0x03,
  SyncWrite = 0x83,
};

/// Low 7 bits of the status error byte. Bit 7 is the hardware alert flag.
enum class ErrorCode : std::uint8_t {
  None = 0x00,
  ResultFail = 0x01,
  InstructionError = 0x02,
  CrcError = 0x03,
  DataRangeError = 0x04,
  DataLengthError = 0x05,
  DataLimitError = 0x06,
  AccessError = 0x07,
};
inline constexpr std::uint8_t kAlertBit = 0x80;

struct InstructionPacket {
  std::uint8_t id = 0;
  Instruction instruction = Instruction::Ping;
  Bytes params;

  bool operator==(const InstructionPacket&) const = default;
};

struct StatusPacket {
  std::uint8_t id = 0;
  std::uint8_t error = 0;
  Bytes params;

  bool operator==(const StatusPacket&) const = default;
};

using Packet = std::variant<InstructionPacket, StatusPacket>;

class EncodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Table-driven CRC-16 (poly 0x8005, init 0, MSB first, no reflection).
std::uint16_t crc16(std::span<const std::uint8_t> bytes, std::uint16_t crc = 0);

/// Throws EncodeError for an oversize packet, an ID above 253 that is not the
/// broadcast ID, or a broadcast Read/Write.
Bytes encode(const InstructionPacket& p);
Bytes encode(const StatusPacket& p);

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes exactly one complete frame. Throws DecodeError on a CRC mismatch,
/// a truncated frame, or trailing bytes.
Packet decode(std::span<const std::uint8_t> frame);

/// Escape / unescape the FF FF FD pattern.
Bytes stuff(std::span<const std::uint8_t> raw);
Bytes unstuff(std::span<const std::uint8_t> stuffed);

struct CrcMismatch {
  std::uint16_t expected = 0;
  std::uint16_t received = 0;
  std::uint8_t id = 0;
};

/// Incremental frame extractor for a byte stream of arbitrary chunking.
/// Memory stays bounded by a few maximum-size frames regardless of input.
class FrameBuffer {
 public:
  /// Appends bytes and returns every complete, CRC-valid frame in order.
  std::vector<Packet> feed(std::span<const std::uint8_t> bytes);

  const std::vector<CrcMismatch>& diagnostics() const { return diagnostics_; }
  std::size_t crc_failures() const { return crc_failures_; }
  std::size_t oversize_frames() const { return oversize_; }
  std::size_t buffered() const { return buf_.size(); }
  void clear_diagnostics() { diagnostics_.clear(); }
  void reset();

 private:
  void drain(std::vector<Packet>& out);

  Bytes buf_;
  std::vector<CrcMismatch> diagnostics_;
  std::size_t crc_failures_ = 0;
  std::size_t oversize_ = 0;
};

// Little-endian helpers used by the register layer.
inline void put_u16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xFF));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_le(std::span<const std::uint8_t> b) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < b.size() && i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

// Instruction builders.
InstructionPacket make_ping(std::uint8_t id);
InstructionPacket make_read(std::uint8_t id, std::uint16_t address, std::uint16_t length);
InstructionPacket make_write(std::uint8_t id, std::uint16_t address,
                             std::span<const std::uint8_t> data);

struct SyncWriteEntry {
  std::uint8_t id;
  Bytes data;  // exactly `length` bytes
};
InstructionPacket make_sync_write(std::uint16_t address, std::uint16_t length,
                                  std::span<const SyncWriteEntry> entries);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace armstack::dxl
