#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "cardioloop/protocol.hpp"
#include "cardioloop/session.hpp"

namespace cardioloop::net {

struct ServerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  double tick_hz = 50.0;   // replaces session.tick_hz
  ServeMode mode = ServeMode::Sensor;
  SessionConfig session;
  SimulationSetup simulation;  // rider model for manual, rider and policy for sim
  std::optional<std::filesystem::path> console_dir;
  std::optional<std::filesystem::path> log_dir;  // falls back to CARDIOLOOP_LOG_DIR
  std::size_t client_queue_frames = 256;
  std::optional<int> client_send_buffer_bytes;  // SO_SNDBUF for accepted sockets
  bool auto_start = false;
  bool quiet = true;
};

// One session at a time. Connection readers and per-client writers run on
// their own threads; every session mutation goes through the command queue
// drained by the tick thread. Connections that open with an HTTP GET are
// served as a WebSocket gateway (same frames, one per text message) or as
// static files from `console_dir`.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and spawns the threads. Throws IoError if the address is unusable.
  void start();
  void stop();
  // Blocks until stop() has been called.
  void wait();

  std::uint16_t port() const;
  std::uint64_t ticks_emitted() const;
  std::size_t sessions_finished() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocking NDJSON client used by tests and tooling.
class LineClient {
 public:
  LineClient(const std::string& host, std::uint16_t port);
  ~LineClient();
  LineClient(const LineClient&) = delete;
  LineClient& operator=(const LineClient&) = delete;

  void send_frame(const Frame& f);
  void send_line(std::string_view line);

  // nullopt on timeout; throws IoError once the peer has closed.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);
  std::optional<Frame> read_frame(std::chrono::milliseconds timeout);

  // True if the peer closes within `timeout` (pending lines are discarded).
  bool wait_closed(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::string buf_;
};

}  // namespace cardioloop::net
