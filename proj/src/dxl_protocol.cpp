#include "armstack/dxl_protocol.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace armstack::dxl {

namespace {

constexpr std::array<std::uint16_t, 256> make_crc_table() {
  std::array<std::uint16_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint16_t c = static_cast<std::uint16_t>(i << 8);
    for (int bit = 0; bit < 8; ++bit) {
      c = (c & 0x8000) ? static_cast<std::uint16_t>((c << 1) ^ 0x8005)
                       : static_cast<std::uint16_t>(c << 1);
    }
    table[i] = c;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

constexpr std::array<std::uint8_t, 4> kHeader{0xFF, 0xFF, 0xFD, 0x00};
constexpr std::size_t kMaxDiagnostics = 256;

bool ends_with_pattern(const Bytes& b) {
  const auto n = b.size();
  return n >= 3 && b[n - 3] == 0xFF && b[n - 2] == 0xFF && b[n - 1] == 0xFD;
}

Bytes frame(std::uint8_t id, const Bytes& raw_body) {
  const Bytes body = stuff(raw_body);
  const std::size_t len = body.size() + 2;
  if (len > 0xFFFF) throw EncodeError("packet too large for the 16-bit length field");
  Bytes out;
  out.reserve(kHeaderBytes + len);
  out.insert(out.end(), kHeader.begin(), kHeader.end());
  out.push_back(id);
  put_u16(out, static_cast<std::uint16_t>(len));
  out.insert(out.end(), body.begin(), body.end());
  put_u16(out, crc16(out));
  return out;
}

}  // namespace

std::uint16_t crc16(std::span<const std::uint8_t> bytes, std::uint16_t crc) {
  for (std::uint8_t b : bytes) {
    crc = static_cast<std::uint16_t>((crc << 8) ^ kCrcTable[((crc >> 8) ^ b) & 0xFF]);
  }
  return crc;
}

Bytes stuff(std::span<const std::uint8_t> raw) {
  Bytes out;
  out.reserve(raw.size() + raw.size() / 3 + 1);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.push_back(raw[i]);
    if (i >= 2 && raw[i - 2] == 0xFF && raw[i - 1] == 0xFF && raw[i] == 0xFD) out.push_back(0xFD);
  }
  return out;
}

Bytes unstuff(std::span<const std::uint8_t> stuffed) {
  Bytes out;
  out.reserve(stuffed.size());
  bool skip_next = false;
  for (std::uint8_t b : stuffed) {
    if (skip_next) {
      skip_next = false;
      if (b == 0xFD) continue;
    }
    out.push_back(b);
    skip_next = ends_with_pattern(out);
  }
  return out;
}

Bytes encode(const InstructionPacket& p) {
  if (p.id > kMaxDeviceId && p.id != kBroadcastId) throw EncodeError("invalid packet id");
  if (p.id == kBroadcastId &&
      (p.instruction == Instruction::Read || p.instruction == Instruction::Write)) {
    throw EncodeError("broadcast id is only valid with ping or sync write");
  }
  if (p.params.size() > kMaxParams) throw EncodeError("parameter block exceeds 65528 bytes");
  Bytes body;
  body.reserve(p.params.size() + 1);
  body.push_back(static_cast<std::uint8_t>(p.instruction));
  body.insert(body.end(), p.params.begin(), p.params.end());
  return frame(p.id, body);
}

Bytes encode(const StatusPacket& p) {
  if (p.id > kMaxDeviceId) throw EncodeError("invalid status id");
  if (p.params.size() > kMaxParams) throw EncodeError("parameter block exceeds 65528 bytes");
  Bytes body;
  body.reserve(p.params.size() + 2);
  body.push_back(kStatusInstruction);
  body.push_back(p.error);
  body.insert(body.end(), p.params.begin(), p.params.end());
  return frame(p.id, body);
}

void FrameBuffer::reset() {
  buf_.clear();
  diagnostics_.clear();
  crc_failures_ = 0;
  oversize_ = 0;
}

std::vector<Packet> FrameBuffer::feed(std::span<const std::uint8_t> bytes) {
  std::vector<Packet> out;
  // Slice the input so the buffer never holds more than two maximal frames.
  while (!bytes.empty()) {
    const std::size_t take = std::min(bytes.size(), kMaxFrameBytes);
    buf_.insert(buf_.end(), bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(take));
    bytes = bytes.subspan(take);
    drain(out);
  }
  return out;
}

void FrameBuffer::drain(std::vector<Packet>& out) {
  std::size_t start = 0;
  for (;;) {
    const auto it = std::search(buf_.begin() + static_cast<std::ptrdiff_t>(start), buf_.end(),
                                kHeader.begin(), kHeader.end());
    if (it == buf_.end()) {
      // Keep a possible partial header at the tail.
      const std::size_t keep = std::min<std::size_t>(buf_.size() - start, 3);
      start = buf_.size() - keep;
      break;
    }
    start = static_cast<std::size_t>(it - buf_.begin());
    const std::size_t avail = buf_.size() - start;
    if (avail < kHeaderBytes) break;

    const std::size_t len = buf_[start + 5] | (static_cast<std::size_t>(buf_[start + 6]) << 8);
    const std::size_t total = kHeaderBytes + len;
    if (len < 3 || total > kMaxFrameBytes) {
      ++oversize_;
      ++start;
      continue;
    }
    if (avail < total) break;

    const std::span<const std::uint8_t> f(buf_.data() + start, total);
    const std::uint16_t expected = crc16(f.first(total - 2));
    const std::uint16_t received =
        static_cast<std::uint16_t>(f[total - 2] | (static_cast<std::uint16_t>(f[total - 1]) << 8));
    if (expected != received) {
      ++crc_failures_;
      if (diagnostics_.size() < kMaxDiagnostics) diagnostics_.push_back({expected, received, f[4]});
      ++start;
      continue;
    }

    Bytes raw = unstuff(f.subspan(kHeaderBytes, total - kHeaderBytes - 2));
    const std::uint8_t id = f[4];
    if (raw[0] == kStatusInstruction) {
      if (raw.size() < 2) {
        ++start;  // status frame without an error byte
        continue;
      }
      out.emplace_back(StatusPacket{id, raw[1], Bytes(raw.begin() + 2, raw.end())});
    } else {
      out.emplace_back(
          InstructionPacket{id, static_cast<Instruction>(raw[0]), Bytes(raw.begin() + 1, raw.end())});
    }
    start += total;
  }
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(start));
}

Packet decode(std::span<const std::uint8_t> frame) {
  FrameBuffer fb;
  auto packets = fb.feed(frame);
  if (fb.crc_failures() > 0) throw DecodeError("crc mismatch");
  if (packets.size() != 1 || fb.buffered() != 0) {
    throw DecodeError("expected exactly one complete frame");
  }
  return std::move(packets.front());
}

InstructionPacket make_ping(std::uint8_t id) { return {id, Instruction::Ping, {}}; }

InstructionPacket make_read(std::uint8_t id, std::uint16_t address, std::uint16_t length) {
  InstructionPacket p{id, Instruction::Read, {}};
  put_u16(p.params, address);
  put_u16(p.params, length);
  return p;
}

InstructionPacket make_write(std::uint8_t id, std::uint16_t address,
                             std::span<const std::uint8_t> data) {
  InstructionPacket p{id, Instruction::Write, {}};
  put_u16(p.params, address);
  p.params.insert(p.params.end(), data.begin(), data.end());
  return p;
}

InstructionPacket make_sync_write(std::uint16_t address, std::uint16_t length,
                                  std::span<const SyncWriteEntry> entries) {
  InstructionPacket p{kBroadcastId, Instruction::SyncWrite, {}};
  put_u16(p.params, address);
  put_u16(p.params, length);
  for (const auto& e : entries) {
    if (e.data.size() != length) throw EncodeError("sync write entry has the wrong data length");
    p.params.push_back(e.id);
    p.params.insert(p.params.end(), e.data.begin(), e.data.end());
  }
  return p;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string s;
  s.reserve(bytes.size() * 3);
  char tmp[4];
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    std::snprintf(tmp, sizeof tmp, i == 0 ? "%02X" : " %02X", bytes[i]);
    s += tmp;
  }
  return s;
}

}  // namespace armstack::dxl
