#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace armstack {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Byte pipe to a half-duplex servo bus. Implemented by the real serial port
/// and by the simulator so the layers above never know which one they drive.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual void write(std::span<const std::uint8_t> bytes) = 0;

  /// Reads whatever is available, waiting at most `timeout` for the first
  /// byte. Returns the number of bytes stored in `out` (0 on timeout).
  virtual std::size_t read(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) = 0;

  /// Advances simulated time. Real hardware ignores it.
  virtual void advance(double /*dt*/) {}

  virtual std::string describe() const = 0;
};

/// POSIX serial port, 8N1, raw mode.
class SerialTransport final : public Transport {
 public:
  SerialTransport(const std::string& path, int baud);
  ~SerialTransport() override;
  SerialTransport(const SerialTransport&) = delete;
  SerialTransport& operator=(const SerialTransport&) = delete;

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;
  std::string describe() const override;

 private:
  int fd_ = -1;
  std::string path_;
  int baud_;
};

// Capture files: an 8-byte magic "DXLCAP01" followed by records of
//   u64 LE  timestamp, microseconds since capture start
//   u8      direction (0 = host to bus, 1 = bus to host)
//   u32 LE  chunk length
//   bytes   chunk
enum class Direction : std::uint8_t { HostToBus = 0, BusToHost = 1 };

struct CaptureRecord {
  std::uint64_t timestamp_us = 0;
  Direction direction = Direction::HostToBus;
  std::vector<std::uint8_t> bytes;

  bool operator==(const CaptureRecord&) const = default;
};

class CaptureWriter {
 public:
  explicit CaptureWriter(const std::string& path);
  void append(const CaptureRecord& r);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

std::vector<CaptureRecord> read_capture(const std::string& path);

/// Records every chunk passing through another transport.
class RecordingTransport final : public Transport {
 public:
  RecordingTransport(std::unique_ptr<Transport> inner, const std::string& capture_path);

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;
  void advance(double dt) override { inner_->advance(dt); }
  std::string describe() const override { return inner_->describe() + " (recording)"; }

 private:
  std::uint64_t now_us() const;

  std::unique_ptr<Transport> inner_;
  CaptureWriter writer_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace armstack
