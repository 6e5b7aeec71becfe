#include "doctest.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "cardioloop/errors.hpp"
#include "cardioloop/server.hpp"
#include "cardioloop/websocket.hpp"

using namespace cardioloop;
using namespace cardioloop::net;
using namespace std::chrono_literals;

namespace {

// Reads frames until `pred` matches one; fails the test on timeout.
template <typename T>
T expect(LineClient& c, const std::function<bool(const T&)>& pred = [](const T&) { return true; },
         std::chrono::milliseconds budget = 5000ms) {
  const auto deadline = std::chrono::steady_clock::now() + budget;
  while (std::chrono::steady_clock::now() < deadline) {
    const auto f = c.read_frame(200ms);
    if (!f) continue;
    if (const T* t = std::get_if<T>(&*f); t && pred(*t)) return *t;
  }
  FAIL("expected frame did not arrive");
  return T{};
}

ErrorFrame expect_error(LineClient& c, const std::string& code) {
  return expect<ErrorFrame>(c, [&](const ErrorFrame& e) { return e.code == code; });
}

AckFrame expect_ack(LineClient& c, const std::string& ref) {
  return expect<AckFrame>(c, [&](const AckFrame& a) { return a.ref == ref; });
}

void hello(LineClient& c, Role r) {
  c.send_frame(HelloFrame{r});
  const auto ack = expect_ack(c, "hello");
  CHECK(ack.detail["role"] == std::string(to_string(r)));
}

CmdFrame cmd(CommandKind k) {
  CmdFrame f;
  f.cmd = k;
  return f;
}

ServerConfig fast_config() {
  ServerConfig cfg;
  cfg.session.training_s = 600.0;
  return cfg;
}

class RawSocket {
 public:
  explicit RawSocket(std::uint16_t port, std::optional<int> rcvbuf = std::nullopt) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (rcvbuf) ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &*rcvbuf, sizeof *rcvbuf);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) throw IoError("connect failed");
    timeval tv{0, 200000};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
  ~RawSocket() { ::close(fd_); }

  void send(std::string_view s) {
    while (!s.empty()) {
      const ssize_t n = ::send(fd_, s.data(), s.size(), MSG_NOSIGNAL);
      if (n <= 0) throw IoError("send failed");
      s.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  // Appends whatever arrives within one receive timeout; false on EOF.
  bool pump() {
    char chunk[16384];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n == 0) return false;
    if (n > 0) buf.append(chunk, static_cast<std::size_t>(n));
    return true;
  }

  std::string read_until(std::string_view marker, std::chrono::milliseconds budget = 5000ms) {
    const auto deadline = std::chrono::steady_clock::now() + budget;
    while (buf.find(marker) == std::string::npos && std::chrono::steady_clock::now() < deadline)
      if (!pump()) break;
    const auto at = buf.find(marker);
    if (at == std::string::npos) return {};
    std::string out = buf.substr(0, at + marker.size());
    buf.erase(0, at + marker.size());
    return out;
  }

  std::string read_all(std::chrono::milliseconds budget = 5000ms) {
    const auto deadline = std::chrono::steady_clock::now() + budget;
    while (std::chrono::steady_clock::now() < deadline)
      if (!pump()) break;
    return std::exchange(buf, {});
  }

  std::optional<ws::Decoded> read_ws(std::chrono::milliseconds budget = 5000ms) {
    const auto deadline = std::chrono::steady_clock::now() + budget;
    for (;;) {
      if (auto d = ws::decode_frame(buf, 1 << 20)) {
        buf.erase(0, d->consumed);
        return d;
      }
      if (std::chrono::steady_clock::now() >= deadline || !pump()) return std::nullopt;
    }
  }

  std::string buf;

 private:
  int fd_ = -1;
};

}  // namespace

TEST_CASE("only one sensor may connect") {
  Server server(fast_config());
  server.start();
  LineClient first("127.0.0.1", server.port());
  hello(first, Role::Sensor);
  LineClient second("127.0.0.1", server.port());
  second.send_frame(HelloFrame{Role::Sensor});
  expect_error(second, "sensor_taken");
  CHECK(second.wait_closed(3000ms));

  // The first sensor is unaffected, and its seat frees up once it leaves.
  first.send_frame(HelloFrame{Role::Sensor});
  expect_error(first, "duplicate_hello");
  first.close();
  std::this_thread::sleep_for(300ms);
  LineClient third("127.0.0.1", server.port());
  hello(third, Role::Sensor);
  server.stop();
}

TEST_CASE("roles gate what a client may send") {
  Server server(fast_config());
  server.start();
  LineClient anon("127.0.0.1", server.port());
  anon.send_frame(EffortFrame{100.0});
  expect_error(anon, "hello_required");

  LineClient obs("127.0.0.1", server.port());
  hello(obs, Role::Observer);
  obs.send_line(R"({"type":"ecg","t":0.0,"v":0.1})");
  expect_error(obs, "forbidden");
  CmdFrame start = cmd(CommandKind::Start);
  start.id = "x1";
  obs.send_frame(start);
  CHECK(expect_error(obs, "forbidden").id == "x1");
  obs.send_frame(AckFrame{"hello", std::nullopt, {}});
  expect_error(obs, "unexpected_frame");

  LineClient console("127.0.0.1", server.port());
  hello(console, Role::Console);
  console.send_line(R"({"type":"ecg","t":0.0,"v":0.1})");
  expect_error(console, "forbidden");
  server.stop();
}

TEST_CASE("console drives a sensor-mode session") {
  Server server(fast_config());
  server.start();
  LineClient console("127.0.0.1", server.port());
  console.send_frame(HelloFrame{Role::Console});
  const AckFrame hi = expect_ack(console, "hello");
  CHECK(hi.detail["session_active"] == false);
  CHECK(hi.detail["mode"] == "sensor");
  CHECK(hi.detail["hr_max_bpm"].get<double>() == doctest::Approx(187.0));

  // Bad input is reported and the connection stays usable.
  console.send_line("{this is not json");
  expect_error(console, "malformed_json");
  console.send_line(R"({"type":"warp","speed":9})");
  expect_error(console, "unknown_type");
  console.send_frame(EffortFrame{150.0});
  expect_error(console, "wrong_mode");
  console.send_frame(cmd(CommandKind::Stop));
  expect_error(console, "wrong_phase");
  CmdFrame bad_age = cmd(CommandKind::SetAge);
  bad_age.age = 3;
  bad_age.id = "age";
  console.send_frame(bad_age);
  CHECK(expect_error(console, "bad_param").id == "age");

  CmdFrame start = cmd(CommandKind::Start);
  start.id = "s1";
  start.age = 30;
  start.condition = Condition::AdaptiveNpc;
  console.send_frame(start);
  const AckFrame started = expect_ack(console, "start");
  CHECK(started.id == "s1");
  CHECK(started.detail["session_active"] == true);
  CHECK(started.detail["config"]["age"] == 30);

  const StateFrame first = expect<StateFrame>(console);
  CHECK(first.state.phase == Phase::Training);
  CHECK(first.state.target_zone == ZoneId{1});
  CHECK(first.state.condition == Condition::AdaptiveNpc);
  CHECK(first.state.npc);
  CHECK_FALSE(first.state.hr_bpm);
  const StateFrame second = expect<StateFrame>(console);
  CHECK(second.seq > first.seq);
  CHECK(second.tick_ns > first.tick_ns);

  console.send_frame(start);
  expect_error(console, "wrong_phase");
  CmdFrame set_mode = cmd(CommandKind::SetMode);
  set_mode.mode = ServeMode::Manual;
  console.send_frame(set_mode);
  expect_error(console, "wrong_phase");

  console.send_frame(cmd(CommandKind::Stop));
  const StateFrame last = expect<StateFrame>(console, [](const StateFrame& s) { return s.state.phase == Phase::Finished; });
  CHECK(last.state.end_prompt);
  const AckFrame stopped = expect_ack(console, "stop");
  CHECK(stopped.detail["session_active"] == false);
  CHECK(server.sessions_finished() == 1);
  server.stop();
}

TEST_CASE("sensor samples reach the session and regressions are reported") {
  ServerConfig cfg = fast_config();
  cfg.session.hr_window_s = 4.0;
  Server server(cfg);
  server.start();
  LineClient console("127.0.0.1", server.port());
  hello(console, Role::Console);
  LineClient sensor("127.0.0.1", server.port());
  hello(sensor, Role::Sensor);
  console.send_frame(cmd(CommandKind::Start));
  expect_ack(console, "start");

  sensor.send_line(R"({"type":"ecg","t":[5.0,5.01],"v":[0,0]})");
  sensor.send_line(R"({"type":"ecg","t":1.0,"v":0})");
  const ErrorFrame e = expect_error(sensor, "timestamp_regression");
  CHECK(e.message.find("1 sample") != std::string::npos);
  server.stop();
}

TEST_CASE("manual mode clamps effort and the simulated heart rate responds") {
  ServerConfig cfg = fast_config();
  cfg.mode = ServeMode::Manual;
  cfg.session.hr_window_s = 4.0;
  cfg.simulation.rider.tau_up_s = 2.0;
  cfg.simulation.rider.tau_down_s = 2.0;
  cfg.simulation.rider.noise_bpm_sd = 0.0;
  Server server(cfg);
  server.start();
  LineClient console("127.0.0.1", server.port());
  hello(console, Role::Console);

  console.send_frame(EffortFrame{-5.0});
  const AckFrame low = expect_ack(console, "effort");
  CHECK(low.detail["power_w"] == 0.0);
  CHECK(low.detail["requested_w"] == -5.0);
  CHECK(low.detail["clamped"] == true);
  console.send_frame(EffortFrame{9000.0});
  CHECK(expect_ack(console, "effort").detail["power_w"] == 400.0);
  console.send_frame(EffortFrame{300.0});
  CHECK(expect_ack(console, "effort").detail["clamped"] == false);

  console.send_frame(cmd(CommandKind::Start));
  expect_ack(console, "start");
  // Steady state is 60 + 0.3 * 300 = 150 bpm.
  const StateFrame s = expect<StateFrame>(
      console, [](const StateFrame& f) { return f.state.hr_bpm && *f.state.hr_bpm > 130.0; }, 25000ms);
  CHECK(s.state.speed_mps > 0.0);
  server.stop();
}

TEST_CASE("sim mode runs a session to completion on its own") {
  ServerConfig cfg;
  cfg.mode = ServeMode::Sim;
  cfg.tick_hz = 250.0;
  cfg.session.training_s = 0.5;
  cfg.session.zone_schedule = {{ZoneId{1}, 0.5}, {ZoneId{2}, 0.5}};
  const auto dir = std::filesystem::temp_directory_path() / "cardioloop_server_logs";
  std::filesystem::remove_all(dir);
  cfg.log_dir = dir;
  cfg.auto_start = true;
  Server server(cfg);
  server.start();
  const auto deadline = std::chrono::steady_clock::now() + 10s;
  while (server.sessions_finished() == 0 && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(20ms);
  server.stop();
  CHECK(server.sessions_finished() == 1);
  CHECK(server.ticks_emitted() == 375);
  std::size_t logs = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    ++logs;
    CHECK(entry.path().filename().string().rfind("P00-adaptive-", 0) == 0);
  }
  CHECK(logs == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a stalled observer loses frames without slowing the tick") {
  ServerConfig cfg = fast_config();
  cfg.tick_hz = 200.0;
  cfg.client_queue_frames = 8;
  cfg.client_send_buffer_bytes = 4096;
  cfg.auto_start = true;
  Server server(cfg);
  server.start();

  RawSocket stalled(server.port(), 4096);
  stalled.send("{\"type\":\"hello\",\"role\":\"observer\"}\n");
  LineClient live("127.0.0.1", server.port());
  hello(live, Role::Observer);

  const auto t0 = std::chrono::steady_clock::now();
  const auto ticks0 = server.ticks_emitted();
  // The live observer keeps up throughout.
  std::uint64_t live_frames = 0, live_dropped = 0;
  while (std::chrono::steady_clock::now() - t0 < 3s) {
    if (const auto f = live.read_frame(100ms)) {
      if (const auto* s = std::get_if<StateFrame>(&*f)) {
        ++live_frames;
        live_dropped += s->dropped;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rate = static_cast<double>(server.ticks_emitted() - ticks0) / secs;
  CHECK(rate == doctest::Approx(200.0).epsilon(0.05));
  CHECK(live_dropped == 0);
  CHECK(static_cast<double>(live_frames) >= 0.9 * 200.0 * secs);

  // Now drain the stalled one: somewhere in its stream the gap is reported.
  std::uint64_t dropped = 0;
  const auto deadline = std::chrono::steady_clock::now() + 10s;
  while (dropped == 0 && std::chrono::steady_clock::now() < deadline) {
    const std::string line = stalled.read_until("\n", 500ms);
    if (line.empty()) continue;
    const Frame f = parse_frame(std::string_view(line).substr(0, line.size() - 1));
    if (const auto* s = std::get_if<StateFrame>(&f)) dropped += s->dropped;
  }
  CHECK(dropped > 0);
  server.stop();
}

TEST_CASE("websocket gateway speaks the same frames") {
  Server server(fast_config());
  server.start();
  RawSocket sock(server.port());
  sock.send(
      "GET /ws HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  const std::string head = sock.read_until("\r\n\r\n");
  CHECK(head.rfind("HTTP/1.1 101", 0) == 0);
  CHECK(head.find("s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);

  sock.send(ws::encode_frame(ws::Opcode::Text, serialize(HelloFrame{Role::Console}), 0x12345678u));
  auto d = sock.read_ws();
  REQUIRE(d);
  CHECK(d->opcode == ws::Opcode::Text);
  const auto ack = std::get<AckFrame>(parse_frame(d->payload));
  CHECK(ack.ref == "hello");
  CHECK(ack.detail["role"] == "console");

  // A message split across two fragments.
  const std::string start = serialize(cmd(CommandKind::Start));
  std::string first = ws::encode_frame(ws::Opcode::Text, start.substr(0, 10), 0x01020304u);
  first[0] = static_cast<char>(first[0] & 0x7F);  // clear FIN
  sock.send(first + ws::encode_frame(ws::Opcode::Continuation, start.substr(10), 0x01020304u));
  bool got_start = false, got_state = false;
  for (int i = 0; i < 50 && !(got_start && got_state); ++i) {
    d = sock.read_ws();
    REQUIRE(d);
    const Frame f = parse_frame(d->payload);
    if (const auto* a = std::get_if<AckFrame>(&f); a && a->ref == "start") got_start = true;
    if (std::holds_alternative<StateFrame>(f)) got_state = true;
  }
  CHECK(got_start);
  CHECK(got_state);

  sock.send(ws::encode_frame(ws::Opcode::Ping, "hb", 0x0u));
  bool pong = false;
  for (int i = 0; i < 200 && !pong; ++i) {
    d = sock.read_ws();
    REQUIRE(d);
    pong = d->opcode == ws::Opcode::Pong && d->payload == "hb";
  }
  CHECK(pong);

  sock.send(ws::encode_frame(ws::Opcode::Close, "", 0x0u));
  bool closed = false;
  for (int i = 0; i < 200 && !closed; ++i) {
    d = sock.read_ws();
    if (!d) break;
    closed = d->opcode == ws::Opcode::Close;
  }
  CHECK(closed);
  server.stop();
}

TEST_CASE("plain HTTP requests get the console's static files") {
  const auto dir = std::filesystem::temp_directory_path() / "cardioloop_console_test";
  std::filesystem::create_directories(dir / "assets");
  std::ofstream(dir / "index.html") << "<!doctype html><title>console</title>";
  std::ofstream(dir / "assets" / "app.js") << "console.log(1);";
  ServerConfig cfg = fast_config();
  cfg.console_dir = dir;
  Server server(cfg);
  server.start();

  auto get = [&](const std::string& path) {
    RawSocket s(server.port());
    s.send("GET " + path + " HTTP/1.1\r\nHost: localhost\r\n\r\n");
    return s.read_all();
  };
  const std::string index = get("/");
  CHECK(index.rfind("HTTP/1.1 200", 0) == 0);
  CHECK(index.find("Content-Type: text/html") != std::string::npos);
  CHECK(index.find("<title>console</title>") != std::string::npos);
  const std::string js = get("/assets/app.js?v=2");
  CHECK(js.find("text/javascript") != std::string::npos);
  CHECK(js.find("console.log(1);") != std::string::npos);
  CHECK(get("/missing.css").rfind("HTTP/1.1 404", 0) == 0);
  CHECK(get("/../etc/passwd").rfind("HTTP/1.1 400", 0) == 0);
  server.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("oversized lines are rejected and the stream resynchronises") {
  Server server(fast_config());
  server.start();
  LineClient c("127.0.0.1", server.port());
  c.send_line(std::string(kMaxFrameBytes + 10, 'x'));
  expect_error(c, "frame_too_large");
  hello(c, Role::Observer);
  server.stop();
}

TEST_CASE("server configuration is validated") {
  ServerConfig cfg;
  cfg.client_queue_frames = 0;
  CHECK_THROWS_AS(Server{cfg}, ParameterError);
  cfg = ServerConfig{};
  cfg.session.age = 1;
  CHECK_THROWS_AS(Server{cfg}, ParameterError);
  cfg = ServerConfig{};
  cfg.host = "256.0.0.1";
  Server bad(cfg);
  CHECK_THROWS_AS(bad.start(), IoError);
}
