// armstack: run the teleop service, jog from a terminal, run motion scripts.

#include <poll.h>
#include <signal.h>
#include <termios.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>

#include "armstack/client.hpp"
#include "armstack/robot_model.hpp"
#include "armstack/script.hpp"
#include "armstack/server.hpp"
#include "armstack/service_link.hpp"
#include "armstack/servo_sim.hpp"
#include "armstack/teleop_service.hpp"
#include "armstack/transport.hpp"

using namespace armstack;
using nlohmann::json;

namespace {

constexpr const char* kDefaultBind = "127.0.0.1:8700";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_endpoint() {
  const char* env = std::getenv("ARMSTACK_BIND");
  return env && *env ? env : kDefaultBind;
}

Endpoint endpoint_or_config_error(const std::string& text) {
  try {
    return parse_endpoint(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RobotDescription load_or_default(const std::string& path) {
  if (path.empty()) return default_description();
  try {
    return load_description_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::unique_ptr<TeleopService> make_sim_service(const RobotDescription& d) {
  auto svc = std::make_unique<TeleopService>(
      d, std::make_unique<SimTransport>(VirtualBus::from_description(d)));
  svc->initialize();
  svc->start();
  return svc;
}

void setup_logging(int verbosity) {
  auto logger = spdlog::stderr_color_mt("armstack");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbosity >= 2 ? spdlog::level::trace
                    : verbosity == 1 ? spdlog::level::debug
                                     : spdlog::level::info);
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  bool sim = false;
  std::string serial;
  int baud = 0;
  std::string bind;
  std::string ui_dir;
  std::string capture;
};

int cmd_serve(const ServeArgs& a, const RobotDescription& d) {
  if (a.sim == !a.serial.empty()) {
    throw ConfigError("choose exactly one transport: --sim or --serial PATH");
  }
  const Endpoint ep = endpoint_or_config_error(a.bind.empty() ? default_endpoint() : a.bind);

  // Signals are consumed synchronously below; block them before any thread starts.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<Transport> transport;
  if (a.sim) {
    transport = std::make_unique<SimTransport>(VirtualBus::from_description(d));
  } else {
    transport = std::make_unique<SerialTransport>(a.serial, a.baud > 0 ? a.baud : d.bus.baud);
  }
  if (!a.capture.empty()) {
    transport = std::make_unique<RecordingTransport>(std::move(transport), a.capture);
  }
  TeleopService svc(d, std::move(transport));
  svc.initialize();
  svc.start();

  Server server(svc, {ep, a.ui_dir});
  try {
    server.start();
  } catch (const std::system_error& e) {
    svc.stop();
    throw TransportError("cannot bind " + ep.host + ":" + std::to_string(ep.port) + ": " +
                         e.what());
  }
  std::cout << "listening on " << ep.host << ":" << server.port() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("shutting down on signal {}", sig);
  server.stop();
  svc.stop();
  return kExitOk;
}

// ---------------------------------------------------------------- jog

class RawTerminal {
 public:
  RawTerminal() {
    if (!isatty(STDIN_FILENO) || tcgetattr(STDIN_FILENO, &saved_) != 0) return;
    termios raw = saved_;
    raw.c_lflag &= ~static_cast<tcflag_t>(ICANON | ECHO);
    raw.c_cc[VMIN] = 1;
    raw.c_cc[VTIME] = 0;
    active_ = tcsetattr(STDIN_FILENO, TCSANOW, &raw) == 0;
  }
  ~RawTerminal() {
    if (active_) tcsetattr(STDIN_FILENO, TCSANOW, &saved_);
  }

 private:
  termios saved_{};
  bool active_ = false;
};

struct JogArgs {
  std::string connect;
  bool sim = false;
  int step = 20;
  bool porcelain = false;
};

class StatePrinter {
 public:
  explicit StatePrinter(bool porcelain) : porcelain_(porcelain) {}

  void operator()(const json& s) {
    std::vector<int> ticks;
    for (const auto& j : s.at("joints")) ticks.push_back(j.at("ticks").get<int>());
    const auto mode = s.at("mode").get<std::string>();
    if (ticks == last_ticks_ && mode == last_mode_) return;
    last_ticks_ = ticks;
    last_mode_ = mode;
    if (porcelain_) {
      std::cout << s.dump() << "\n";
    } else {
      const auto& p = s.at("pose");
      std::cout << std::fixed << std::setprecision(4) << "x " << p.at("x").get<double>() << "  y "
                << p.at("y").get<double>() << "  z " << p.at("z").get<double>() << "  pitch "
                << p.at("pitch").get<double>() << "  ticks";
      for (int t : ticks) std::cout << " " << t;
      std::cout << "  " << mode << "\n";
    }
    std::cout.flush();
  }

 private:
  bool porcelain_;
  std::vector<int> last_ticks_;
  std::string last_mode_;
};

int cmd_jog(const JogArgs& a, const RobotDescription& d) {
  std::unique_ptr<TeleopService> svc;
  std::unique_ptr<ServiceLink> link;
  if (a.sim) {
    svc = make_sim_service(d);
    link = std::make_unique<InProcessLink>(*svc);
  } else {
    link = std::make_unique<WsClient>(
        endpoint_or_config_error(a.connect.empty() ? default_endpoint() : a.connect));
  }

  StatePrinter print(a.porcelain);
  const auto drain = [&] {
    link->wait_state([](const json&) { return false; }, std::chrono::milliseconds(0), print);
  };
  const auto report = [&](const json& ack) {
    if (a.porcelain) {
      std::cout << ack.dump() << "\n";
    } else if (ack.value("ok", false)) {
      std::cout << "ack seq " << ack.at("seq").get<std::uint64_t>() << "\n";
    } else {
      std::cout << "rejected: " << ack.value("code", "") << ": " << ack.value("message", "")
                << "\n";
    }
    std::cout.flush();
  };

  if (!a.porcelain) {
    std::cerr << "keys: 1-5 select joint, +/- jog " << a.step
              << " ticks, g/G close/open gripper, h home, s stop, q quit\n";
  }

  RawTerminal terminal;
  int joint = 1;
  std::uint64_t last_seq = 0;
  bool sent = false;
  for (;;) {
    pollfd pfd{STDIN_FILENO, POLLIN, 0};
    const int ready = poll(&pfd, 1, 20);
    drain();
    if (ready <= 0) continue;
    char c = 0;
    if (read(STDIN_FILENO, &c, 1) != 1 || c == 'q') break;

    json cmd;
    if (c >= '1' && c <= '5') {
      joint = c - '0';
      if (!a.porcelain) std::cerr << "joint " << joint << " selected\n";
      continue;
    }
    switch (c) {
      case '+': case '=':
        cmd = {{"v", 1}, {"type", "jog"}, {"joint", joint}, {"delta_ticks", a.step}};
        break;
      case '-': case '_':
        cmd = {{"v", 1}, {"type", "jog"}, {"joint", joint}, {"delta_ticks", -a.step}};
        break;
      case 'g':
        cmd = {{"v", 1}, {"type", "gripper"}, {"width_m", d.gripper.width_closed_m}};
        break;
      case 'G':
        cmd = {{"v", 1}, {"type", "gripper"}, {"width_m", d.gripper.width_open_m}};
        break;
      case 'h': cmd = {{"v", 1}, {"type", "home"}}; break;
      case 's': case ' ': cmd = {{"v", 1}, {"type", "stop"}}; break;
      default: continue;
    }
    const json ack = link->send(cmd);
    report(ack);
    if (ack.value("ok", false)) {
      last_seq = ack.at("seq").get<std::uint64_t>();
      sent = true;
    }
  }

  if (sent) {
    link->wait_state(
        [&](const json& s) {
          if (s.at("cmd_seq").get<std::uint64_t>() < last_seq) return false;
          if (s.at("mode") == "fault") return true;
          if (s.at("mode") != "idle") return false;
          for (const auto& j : s.at("joints")) {
            if (j.at("moving").get<bool>()) return false;
          }
          return true;
        },
        std::chrono::seconds(10), print);
  }
  drain();
  if (svc) svc->stop();
  return kExitOk;
}

// ---------------------------------------------------------------- script

struct ScriptArgs {
  std::string file;
  bool sim = false;
  std::string connect;
  bool dry_run = false;
  std::string log;
  bool porcelain = false;
  double speed_scale = 1.0;
};

int cmd_script(const ScriptArgs& a, const RobotDescription& d) {
  Script script;
  try {
    script = load_script(a.file);
  } catch (const ScriptParseError& e) {
    throw ConfigError(a.file + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw ConfigError("cannot write log file " + a.log);
  }

  std::unique_ptr<TeleopService> svc;
  std::unique_ptr<ServiceLink> link;
  if (a.sim) {
    svc = make_sim_service(d);
    link = std::make_unique<InProcessLink>(*svc);
  } else if (!a.connect.empty() || !a.dry_run) {
    link = std::make_unique<WsClient>(
        endpoint_or_config_error(a.connect.empty() ? default_endpoint() : a.connect));
  }

  ScriptRunOptions opts;
  opts.dry_run = a.dry_run;
  opts.speed_scale = a.speed_scale;
  opts.log = log.is_open() ? &log : nullptr;
  opts.out = &std::cout;
  opts.porcelain = a.porcelain;
  const ScriptOutcome out = run_script(script, d, link.get(), opts);
  if (svc) svc->stop();
  if (out.exit_code != kExitOk) {
    std::cerr << a.file;
    if (out.failed_line > 0) std::cerr << ":" << out.failed_line;
    std::cerr << ": " << out.code << ": " << out.message << "\n";
  }
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk manipulator teleoperation service and tools"};
  app.require_subcommand(1);
  std::string description;
  int verbosity = 0;
  app.add_option("--description", description, "Robot description YAML (default: built in)")
      ->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", verbosity, "More logging (repeat for trace)");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the teleop service");
  serve_cmd->add_flag("--sim", serve.sim, "Use the built-in servo simulator");
  serve_cmd->add_option("--serial", serve.serial, "Serial device of the servo bus");
  serve_cmd->add_option("--baud", serve.baud, "Serial baud rate (default: from description)");
  serve_cmd->add_option("--bind", serve.bind,
                        "host:port to listen on (default: $ARMSTACK_BIND or 127.0.0.1:8700)");
  serve_cmd->add_option("--ui-dir", serve.ui_dir, "Directory served under /ui");
  serve_cmd->add_option("--capture", serve.capture, "Record bus traffic to this file");

  JogArgs jog;
  auto* jog_cmd = app.add_subcommand("jog", "Jog joints from the keyboard");
  jog_cmd->add_option("--connect", jog.connect, "Service host:port");
  jog_cmd->add_flag("--sim", jog.sim, "Run against an in-process simulator");
  jog_cmd->add_option("--step", jog.step, "Jog step in ticks")->check(CLI::Range(1, 4095));
  jog_cmd->add_flag("--porcelain", jog.porcelain, "JSON lines on stdout");

  ScriptArgs script;
  auto* script_cmd = app.add_subcommand("script", "Motion scripts");
  script_cmd->require_subcommand(1);
  auto* run_cmd = script_cmd->add_subcommand("run", "Plan and execute a motion script");
  run_cmd->add_option("file", script.file, "Script file (.yaml suffix optional)")->required();
  run_cmd->add_flag("--sim", script.sim, "Run against an in-process simulator");
  run_cmd->add_option("--connect", script.connect, "Service host:port");
  run_cmd->add_flag("--dry-run", script.dry_run, "Plan and print durations only");
  run_cmd->add_option("--log", script.log, "Write states and waypoint checks as JSON lines");
  run_cmd->add_flag("--porcelain", script.porcelain, "JSON lines on stdout");
  run_cmd->add_option("--speed-scale", script.speed_scale, "Scale on velocity limits")
      ->check(CLI::Range(1e-3, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  setup_logging(verbosity);
  try {
    const RobotDescription d = load_or_default(description);
    if (*serve_cmd) return cmd_serve(serve, d);
    if (*jog_cmd) return cmd_jog(jog, d);
    if (*run_cmd) return cmd_script(script, d);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (*serve_cmd) std::cerr << serve_cmd->help();
    return kExitConfig;
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTransport;
  }
  return kExitConfig;
}
