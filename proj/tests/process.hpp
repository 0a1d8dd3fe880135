#pragma once

// Minimal fork/exec helpers for driving the CLI binary from tests.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace proc {

struct Result {
  int exit_code = -1;  // -1 when killed after the timeout
  std::string out;
  std::string err;
  double seconds = 0.0;
};

class Child {
 public:
  Child(const std::vector<std::string>& argv, const std::vector<std::string>& env = {}) {
    int in[2], out[2], err[2];
    if (pipe(in) || pipe(out) || pipe(err)) throw std::runtime_error("pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      dup2(in[0], STDIN_FILENO);
      dup2(out[1], STDOUT_FILENO);
      dup2(err[1], STDERR_FILENO);
      for (int fd : {in[0], in[1], out[0], out[1], err[0], err[1]}) close(fd);
      for (const auto& e : env) putenv(const_cast<char*>(e.c_str()));
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execv(args[0], args.data());
      _exit(127);
    }
    close(in[0]);
    close(out[1]);
    close(err[1]);
    in_ = in[1];
    out_ = out[0];
    err_ = err[0];
    start_ = std::chrono::steady_clock::now();
  }

  ~Child() {
    if (pid_ > 0 && !reaped_) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    for (int fd : {in_, out_, err_}) {
      if (fd >= 0) close(fd);
    }
  }

  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;

  void write_stdin(const std::string& data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const auto n = ::write(in_, data.data() + done, data.size() - done);
      if (n <= 0) break;
      done += static_cast<std::size_t>(n);
    }
  }

  void close_stdin() {
    if (in_ >= 0) close(in_);
    in_ = -1;
  }

  /// Reads stdout until a full line is available; nullopt on timeout or EOF.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
    const auto end = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto nl = out_buf_.find('\n'); nl != std::string::npos) {
        std::string line = out_buf_.substr(0, nl);
        out_buf_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          end - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      if (!pump(static_cast<int>(left.count()))) {
        if (out_ < 0) return std::nullopt;
      }
    }
  }

  void signal(int sig) { kill(pid_, sig); }

  /// Waits for exit while collecting output; kills the child on timeout.
  Result wait(std::chrono::milliseconds timeout) {
    Result r;
    const auto end = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    for (;;) {
      const pid_t w = waitpid(pid_, &status, WNOHANG);
      if (w == pid_) break;
      if (std::chrono::steady_clock::now() > end) {
        kill(pid_, SIGKILL);
        waitpid(pid_, &status, 0);
        reaped_ = true;
        r.exit_code = -1;
        drain_all();
        r.out = out_buf_;
        r.err = err_buf_;
        return r;
      }
      pump(10);
    }
    reaped_ = true;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    drain_all();
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = out_buf_;
    r.err = err_buf_;
    return r;
  }

 private:
  // Moves available output into the buffers; false when nothing was read.
  bool pump(int timeout_ms) {
    pollfd fds[2] = {{out_, POLLIN, 0}, {err_, POLLIN, 0}};
    if (poll(fds, 2, timeout_ms) <= 0) return false;
    bool any = false;
    char buf[4096];
    for (int i = 0; i < 2; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP))) continue;
      int& fd = i == 0 ? out_ : err_;
      if (fd < 0) continue;
      const auto n = read(fd, buf, sizeof buf);
      if (n > 0) {
        (i == 0 ? out_buf_ : err_buf_).append(buf, static_cast<std::size_t>(n));
        any = true;
      } else {
        close(fd);
        fd = -1;
      }
    }
    return any;
  }

  void drain_all() {
    while (out_ >= 0 || err_ >= 0) {
      pollfd fds[2] = {{out_, POLLIN, 0}, {err_, POLLIN, 0}};
      if (poll(fds, 2, 200) <= 0) break;
      pump(0);
    }
  }

  pid_t pid_ = -1;
  bool reaped_ = false;
  int in_ = -1, out_ = -1, err_ = -1;
  std::string out_buf_, err_buf_;
  std::chrono::steady_clock::time_point start_;
};

/// Runs a command to completion with `input` on stdin.
inline Result run(const std::vector<std::string>& argv, const std::string& input = {},
                  std::chrono::milliseconds timeout = std::chrono::seconds(30),
                  const std::vector<std::string>& env = {}) {
  Child c(argv, env);
  c.write_stdin(input);
  c.close_stdin();
  return c.wait(timeout);
}

}  // namespace proc
