#include <doctest.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "armstack/client.hpp"
#include "process.hpp"

using nlohmann::json;
using namespace std::chrono_literals;

namespace {

const std::string kCli = ARMSTACK_CLI;
const std::string kSource = ARMSTACK_SOURCE_DIR;

std::vector<std::string> cli(std::initializer_list<std::string> args) {
  std::vector<std::string> v{kCli};
  v.insert(v.end(), args);
  return v;
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

// A `serve --sim` child on an ephemeral port.
struct Service {
  proc::Child child;
  armstack::Endpoint ep;

  Service() : child(cli({"serve", "--sim", "--bind", "127.0.0.1:0"})) {
    const auto line = child.read_line(5s);
    REQUIRE(line.has_value());
    const std::string prefix = "listening on ";
    REQUIRE(line->rfind(prefix, 0) == 0);
    ep = armstack::parse_endpoint(line->substr(prefix.size()));
  }

  std::string address() const { return ep.host + ":" + std::to_string(ep.port); }

  json state() { return json::parse(armstack::http_get(ep, "/state").body); }

  int shutdown() {
    child.signal(SIGINT);
    return child.wait(10s).exit_code;
  }
};

std::string temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << content;
  return path.string();
}

}  // namespace

TEST_CASE("serve --sim answers GET /state within a second and exits 0 on SIGINT") {
  const auto t0 = std::chrono::steady_clock::now();
  Service s;
  const auto st = s.state();
  CHECK(std::chrono::steady_clock::now() - t0 < 1s);
  CHECK(st["kind"] == "state");
  CHECK(st["joints"][0]["ticks"] == 2048);
  CHECK(s.shutdown() == 0);
}

TEST_CASE("serve honors the bind environment variable") {
  proc::Child c(cli({"serve", "--sim"}), {"ARMSTACK_BIND=127.0.0.1:0"});
  const auto line = c.read_line(5s);
  REQUIRE(line.has_value());
  CHECK(line->find("127.0.0.1:") != std::string::npos);
  CHECK(line->find(":8700") == std::string::npos);
  c.signal(SIGTERM);
  CHECK(c.wait(10s).exit_code == 0);
}

TEST_CASE("serve configuration and transport errors") {
  const auto missing = proc::run(cli({"serve", "--serial", "/nonexistent"}));
  CHECK(missing.exit_code == 3);
  CHECK(missing.err.find("/nonexistent") != std::string::npos);

  const auto none = proc::run(cli({"serve"}));
  CHECK(none.exit_code == 2);
  CHECK(none.err.find("--sim") != std::string::npos);

  const auto both = proc::run(cli({"serve", "--sim", "--serial", "/dev/null"}));
  CHECK(both.exit_code == 2);

  CHECK(proc::run(cli({"serve", "--sim", "--bind", "nonsense"})).exit_code == 2);
  CHECK(proc::run(cli({"--description", "/no/such.yaml", "serve", "--sim"})).exit_code == 2);
  CHECK(proc::run(cli({"frobnicate"})).exit_code == 2);
}

TEST_CASE("serve fails with exit 3 when the port is taken") {
  Service s;
  const auto r = proc::run(cli({"serve", "--sim", "--bind", s.address()}));
  CHECK(r.exit_code == 3);
  s.shutdown();
}

TEST_CASE("jog '1 + + q' sends two jogs and moves the base by two steps") {
  Service s;
  const auto r = proc::run(cli({"jog", "--connect", s.address(), "--porcelain"}), "1++q", 20s);
  REQUIRE(r.exit_code == 0);
  int acks = 0;
  json last_state;
  for (const auto& j : json_lines(r.out)) {
    if (j["kind"] == "ack") {
      CHECK(j["ok"] == true);
      ++acks;
    } else if (j["kind"] == "state") {
      last_state = j;
    }
  }
  CHECK(acks == 2);
  REQUIRE(last_state.is_object());
  CHECK(last_state["joints"][0]["ticks"] == 2048 + 2 * 20);
  CHECK(s.state()["joints"][0]["ticks"] == 2088);
  s.shutdown();
}

TEST_CASE("jog quitting immediately sends nothing") {
  Service s;
  const auto before = s.state()["cmd_seq"];
  const auto r = proc::run(cli({"jog", "--connect", s.address()}), "q", 10s);
  CHECK(r.exit_code == 0);
  CHECK(s.state()["cmd_seq"] == before);
  CHECK(r.out.find("ack") == std::string::npos);
  s.shutdown();
}

TEST_CASE("jog against a stopped service exits 3") {
  std::string address;
  {
    Service s;
    address = s.address();
    s.shutdown();
  }
  const auto r = proc::run(cli({"jog", "--connect", address}), "q", 10s);
  CHECK(r.exit_code == 3);
}

TEST_CASE("jog on the in-process simulator") {
  const auto r = proc::run(cli({"jog", "--sim", "--step", "50", "--porcelain"}), "3-q", 20s);
  REQUIRE(r.exit_code == 0);
  json last;
  for (const auto& j : json_lines(r.out)) {
    if (j["kind"] == "state") last = j;
  }
  CHECK(last["joints"][2]["ticks"] == 2048 - 50);
}

TEST_CASE("script beyond the reach exits 4 naming the line") {
  const auto path = temp_file("armstack_far.yaml", R"(schema_version: 1
commands:
  - wait: {seconds: 0.1}
  - move_line: {x: 0.35, y: 0.0, z: 0.10, pitch: 1.5708}
)");
  const auto r = proc::run(cli({"script", "run", path, "--sim"}));
  CHECK(r.exit_code == 4);
  CHECK(r.err.find(":4:") != std::string::npos);
  CHECK(r.err.find("unreachable") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("script parse errors and missing files exit 2") {
  const auto path = temp_file("armstack_bad.yaml", "commands:\n  - teleport: {x: 1}\n");
  const auto bad = proc::run(cli({"script", "run", path, "--dry-run"}));
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("line 2") != std::string::npos);
  std::filesystem::remove(path);
  CHECK(proc::run(cli({"script", "run", "/no/such/script", "--dry-run"})).exit_code == 2);
}

TEST_CASE("dry run prints the total and sends no commands") {
  Service s;
  const auto before = s.state();
  const auto r = proc::run(
      cli({"script", "run", kSource + "/demo/pick_place", "--dry-run", "--connect", s.address()}));
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("total") != std::string::npos);
  const auto after = s.state();
  CHECK(after["cmd_seq"] == before["cmd_seq"]);
  CHECK(after["joints"] == before["joints"]);

  const auto porcelain =
      proc::run(cli({"script", "run", kSource + "/demo/pick_place", "--dry-run", "--porcelain"}));
  REQUIRE(porcelain.exit_code == 0);
  const auto lines = json_lines(porcelain.out);
  REQUIRE_FALSE(lines.empty());
  CHECK(lines.back()["event"] == "total");
  CHECK(lines.back()["duration_s"].get<double>() > 1.0);
  s.shutdown();
}

TEST_CASE("script runs against a served simulator over WebSocket") {
  Service s;
  const auto path = temp_file("armstack_short.yaml", R"(commands:
  - move_joints: {q: [0.3, 0.4, 0.5, 0.2]}
  - gripper: {width_m: 0.04}
  - move_joints: {q: [0.0, 0.0, 0.0, 0.0]}
)");
  const auto r = proc::run(cli({"script", "run", path, "--connect", s.address(), "--porcelain"}),
                           {}, 30s);
  CHECK(r.exit_code == 0);
  const auto lines = json_lines(r.out);
  REQUIRE_FALSE(lines.empty());
  CHECK(lines.back()["event"] == "complete");
  CHECK(lines.back()["max_error_m"].get<double>() < 0.002);
  std::filesystem::remove(path);
  s.shutdown();
}
