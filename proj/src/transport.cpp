#include "armstack/transport.hpp"

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace armstack {

namespace {

speed_t baud_constant(int baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 500000: return B500000;
    case 576000: return B576000;
    case 921600: return B921600;
    case 1000000: return B1000000;
    case 2000000: return B2000000;
    case 3000000: return B3000000;
    case 4000000: return B4000000;
    default: throw TransportError("unsupported baud rate " + std::to_string(baud));
  }
}

constexpr char kCaptureMagic[8] = {'D', 'X', 'L', 'C', 'A', 'P', '0', '1'};

void put_le(std::ofstream& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

bool get_le(std::ifstream& in, std::uint64_t& v, int n) {
  v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = in.get();
    if (c == EOF) return false;
    v |= static_cast<std::uint64_t>(c & 0xFF) << (8 * i);
  }
  return true;
}

}  // namespace

SerialTransport::SerialTransport(const std::string& path, int baud) : path_(path), baud_(baud) {
  const speed_t speed = baud_constant(baud);
  fd_ = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw TransportError("cannot open " + path + ": " + std::strerror(errno));

  termios tio{};
  if (::tcgetattr(fd_, &tio) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw TransportError("not a serial device " + path + ": " + err);
  }
  ::cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~(CSTOPB | PARENB | CRTSCTS);
  tio.c_cflag = (tio.c_cflag & ~CSIZE) | CS8;
  tio.c_cc[VMIN] = 0;
  tio.c_cc[VTIME] = 0;
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw TransportError("cannot configure " + path + ": " + err);
  }
  ::tcflush(fd_, TCIOFLUSH);
}

SerialTransport::~SerialTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void SerialTransport::write(std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EAGAIN || errno == EINTR) {
        pollfd p{fd_, POLLOUT, 0};
        ::poll(&p, 1, 10);
        continue;
      }
      throw TransportError("serial write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  ::tcdrain(fd_);
}

std::size_t SerialTransport::read(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (ready < 0 && errno != EINTR) {
    throw TransportError("serial poll failed: " + std::string(std::strerror(errno)));
  }
  if (ready <= 0) return 0;
  const ssize_t n = ::read(fd_, out.data(), out.size());
  if (n < 0) {
    if (errno == EAGAIN || errno == EINTR) return 0;
    throw TransportError("serial read failed: " + std::string(std::strerror(errno)));
  }
  return static_cast<std::size_t>(n);
}

std::string SerialTransport::describe() const {
  return "serial " + path_ + " @ " + std::to_string(baud_);
}

CaptureWriter::CaptureWriter(const std::string& path) : out_(path, std::ios::binary) {
  if (!out_) throw TransportError("cannot create capture file " + path);
  out_.write(kCaptureMagic, sizeof kCaptureMagic);
}

void CaptureWriter::append(const CaptureRecord& r) {
  put_le(out_, r.timestamp_us, 8);
  out_.put(static_cast<char>(r.direction));
  put_le(out_, r.bytes.size(), 4);
  out_.write(reinterpret_cast<const char*>(r.bytes.data()),
             static_cast<std::streamsize>(r.bytes.size()));
}

std::vector<CaptureRecord> read_capture(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TransportError("cannot open capture file " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCaptureMagic, sizeof magic) != 0) {
    throw TransportError("not a capture file: " + path);
  }
  std::vector<CaptureRecord> records;
  for (;;) {
    CaptureRecord r;
    std::uint64_t ts = 0;
    if (!get_le(in, ts, 8)) break;
    const int dir = in.get();
    std::uint64_t len = 0;
    if (dir == EOF || dir > 1 || !get_le(in, len, 4)) throw TransportError("truncated capture record");
    r.timestamp_us = ts;
    r.direction = static_cast<Direction>(dir);
    r.bytes.resize(len);
    if (!in.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(len))) {
      throw TransportError("truncated capture record");
    }
    records.push_back(std::move(r));
  }
  return records;
}

RecordingTransport::RecordingTransport(std::unique_ptr<Transport> inner,
                                       const std::string& capture_path)
    : inner_(std::move(inner)), writer_(capture_path), start_(std::chrono::steady_clock::now()) {}

std::uint64_t RecordingTransport::now_us() const {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                        std::chrono::steady_clock::now() - start_)
                                        .count());
}

void RecordingTransport::write(std::span<const std::uint8_t> bytes) {
  writer_.append({now_us(), Direction::HostToBus, {bytes.begin(), bytes.end()}});
  inner_->write(bytes);
}

std::size_t RecordingTransport::read(std::span<std::uint8_t> out,
                                     std::chrono::milliseconds timeout) {
  const std::size_t n = inner_->read(out, timeout);
  if (n > 0) writer_.append({now_us(), Direction::BusToHost, {out.begin(), out.begin() + n}});
  return n;
}

}  // namespace armstack
