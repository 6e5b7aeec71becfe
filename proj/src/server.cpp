#include "cardioloop/server.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <deque>
#include <fstream>
#include <list>
#include <mutex>
#include <sstream>
#include <thread>
#include <variant>
#include <vector>

#include "cardioloop/errors.hpp"
#include "cardioloop/metrics.hpp"
#include "cardioloop/session_log.hpp"
#include "cardioloop/simulation.hpp"
#include "cardioloop/websocket.hpp"

namespace cardioloop::net {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch()).count();
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

std::string_view content_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json" || ext == ".jsonl") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

std::string http_response(int status, std::string_view reason, std::string_view type, std::string_view body) {
  return fmt::format("HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}", status,
                     reason, type, body.size(), body);
}

enum class OutKind { Raw, Frame, State };

struct OutFrame {
  OutKind kind;
  std::shared_ptr<const std::string> text;
};

struct Client {
  explicit Client(int f, std::uint64_t i) : fd(f), id(i) {}

  int fd;
  std::uint64_t id;
  std::atomic<bool> websocket{false};
  std::atomic<int> role{-1};
  std::atomic<bool> dead{false};
  std::atomic<bool> reader_done{false};
  std::atomic<bool> writer_done{false};

  std::mutex mu;
  std::condition_variable cv;
  std::deque<OutFrame> queue;
  std::uint64_t dropped = 0;
  bool closing = false;

  std::thread reader;
  std::thread writer;

  std::optional<Role> current_role() const {
    const int r = role.load();
    if (r < 0) return std::nullopt;
    return static_cast<Role>(r);
  }
};

using ClientPtr = std::shared_ptr<Client>;

struct Command {
  ClientPtr from;
  std::variant<CmdFrame, EffortFrame> body;
};

}  // namespace

struct Server::Impl {
  explicit Impl(ServerConfig c) : cfg(std::move(c)), pending(cfg.session), mode(cfg.mode) {
    if (!(cfg.tick_hz > 0.0)) throw ParameterError("tick_hz must be positive");
    if (cfg.client_queue_frames == 0) throw ParameterError("client_queue_frames must be positive");
    if (cfg.client_send_buffer_bytes && *cfg.client_send_buffer_bytes <= 0)
      throw ParameterError("client_send_buffer_bytes must be positive");
    pending.tick_hz = cfg.tick_hz;
    pending.validate();
    cfg.simulation.validate();
    if (!cfg.log_dir) {
      if (const char* env = std::getenv("CARDIOLOOP_LOG_DIR"); env && *env) cfg.log_dir = std::filesystem::path(env);
    }
    refresh_snapshot();
  }

  ServerConfig cfg;

  // Tick-thread state.
  SessionConfig pending;
  std::optional<Session> session;
  std::optional<SimulatedRider> rider;
  double manual_power_w = 0.0;
  SessionLog log;
  std::uint64_t seq = 0;
  std::uint64_t session_counter = 0;
  double last_sample_t = -1.0;

  std::atomic<ServeMode> mode;
  std::atomic<bool> running{false};
  std::atomic<std::uint64_t> ticks{0};
  std::atomic<std::size_t> finished{0};

  int listen_fd = -1;
  std::uint16_t bound_port = 0;
  std::thread accept_thread;
  std::thread tick_thread;

  std::mutex clients_mu;
  std::list<ClientPtr> clients;
  std::uint64_t next_client_id = 1;

  std::mutex sensor_mu;
  std::weak_ptr<Client> sensor;

  std::mutex ingress_mu;
  std::vector<EcgSample> ingress;

  std::mutex cmd_mu;
  std::vector<Command> commands;

  std::mutex snapshot_mu;
  nlohmann::ordered_json snapshot;

  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stopped = false;

  // ---- outbound -----------------------------------------------------------

  void enqueue(const ClientPtr& c, OutKind kind, std::shared_ptr<const std::string> text) {
    {
      std::lock_guard lk(c->mu);
      if (c->dead || c->closing) return;
      if (kind == OutKind::State && c->queue.size() >= cfg.client_queue_frames) {
        ++c->dropped;
        return;
      }
      c->queue.push_back({kind, std::move(text)});
    }
    c->cv.notify_one();
  }

  void send_frame(const ClientPtr& c, const Frame& f) {
    enqueue(c, OutKind::Frame, std::make_shared<const std::string>(serialize(f)));
  }

  void send_error(const ClientPtr& c, std::string code, std::string message, std::optional<std::string> id = {}) {
    send_frame(c, ErrorFrame{std::move(code), std::move(message), std::move(id)});
  }

  void close_after_flush(const ClientPtr& c) {
    {
      std::lock_guard lk(c->mu);
      c->closing = true;
    }
    c->cv.notify_one();
  }

  void writer_loop(const ClientPtr& c) {
    for (;;) {
      OutFrame out;
      std::uint64_t dropped = 0;
      {
        std::unique_lock lk(c->mu);
        c->cv.wait(lk, [&] { return !c->queue.empty() || c->dead || c->closing; });
        if (c->dead) break;
        if (c->queue.empty()) break;  // closing and drained
        out = std::move(c->queue.front());
        c->queue.pop_front();
        if (out.kind == OutKind::State) {
          dropped = c->dropped;
          c->dropped = 0;
        }
      }
      std::string wire;
      if (out.kind == OutKind::Raw) {
        wire = *out.text;
      } else {
        std::string text = out.kind == OutKind::State ? state_frame_with_body(dropped, *out.text) : *out.text;
        if (c->websocket) {
          wire = ws::encode_frame(ws::Opcode::Text, text);
        } else {
          wire = std::move(text);
          wire.push_back('\n');
        }
      }
      if (!send_all(c->fd, wire)) {
        c->dead = true;
        break;
      }
    }
    ::shutdown(c->fd, SHUT_RDWR);
    c->writer_done = true;
  }

  void broadcast_state(const LoopState& state, std::int64_t tick_ns) {
    auto body = std::make_shared<const std::string>(state_body(seq++, tick_ns, state));
    std::lock_guard lk(clients_mu);
    for (const auto& c : clients) {
      const auto role = c->current_role();
      if (role == Role::Console || role == Role::Observer) enqueue(c, OutKind::State, body);
    }
  }

  void broadcast_frame(const Frame& f, Role to) {
    auto text = std::make_shared<const std::string>(serialize(f));
    std::lock_guard lk(clients_mu);
    for (const auto& c : clients)
      if (c->current_role() == to) enqueue(c, OutKind::Frame, text);
  }

  // ---- config snapshot ----------------------------------------------------

  void refresh_snapshot() {
    const SessionConfig& sc = session ? session->config() : pending;
    const ZoneModel model = compute_zone_model(AthleteProfile{sc.age, sc.formula, std::nullopt});
    const AdaptationConfig adapt = sc.adaptation.resolved_for(model);
    nlohmann::ordered_json j;
    j["mode"] = std::string(to_string(mode.load()));
    j["tick_hz"] = cfg.tick_hz;
    j["session_active"] = session.has_value();
    j["hr_max_bpm"] = model.hr_max_bpm;
    j["zone_boundaries_bpm"] = model.boundaries;
    j["green_radius_m"] = *adapt.green_radius_m;
    j["max_offset_m"] = adapt.max_offset_m;
    j["p_max_w"] = cfg.simulation.rider.p_max_w;
    j["hr_rest_bpm"] = cfg.simulation.rider.hr_rest_bpm;
    j["config"] = config_to_json(sc, mode.load() == ServeMode::Sensor ? nullptr : &cfg.simulation);
    std::lock_guard lk(snapshot_mu);
    snapshot = std::move(j);
  }

  nlohmann::ordered_json snapshot_copy() {
    std::lock_guard lk(snapshot_mu);
    return snapshot;
  }

  // ---- inbound ------------------------------------------------------------

  void handle_line(const ClientPtr& c, std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) return;
    Frame frame;
    try {
      frame = parse_frame(line);
    } catch (const ProtocolError& e) {
      send_error(c, e.code(), e.what());
      return;
    }
    const auto role = c->current_role();

    if (const auto* hello = std::get_if<HelloFrame>(&frame)) {
      if (role) {
        send_error(c, "duplicate_hello", "role already declared");
        return;
      }
      if (hello->role == Role::Sensor) {
        std::lock_guard lk(sensor_mu);
        const auto current = sensor.lock();
        if (current && !current->dead) {
          send_error(c, "sensor_taken", "a sensor is already connected");
          close_after_flush(c);
          return;
        }
        sensor = c;
      }
      c->role = static_cast<int>(hello->role);
      auto detail = snapshot_copy();
      detail["role"] = std::string(to_string(hello->role));
      send_frame(c, AckFrame{"hello", std::nullopt, std::move(detail)});
      return;
    }
    if (!role) {
      send_error(c, "hello_required", "declare a role with a hello frame first");
      return;
    }

    if (auto* ecg = std::get_if<EcgFrame>(&frame)) {
      if (*role != Role::Sensor) {
        send_error(c, "forbidden", "only the sensor may send ecg frames");
      } else if (mode.load() != ServeMode::Sensor) {
        send_error(c, "wrong_mode", "ecg frames are accepted in sensor mode only");
      } else {
        std::lock_guard lk(ingress_mu);
        ingress.insert(ingress.end(), ecg->samples.begin(), ecg->samples.end());
      }
      return;
    }
    if (auto* effort = std::get_if<EffortFrame>(&frame)) {
      if (*role != Role::Console) {
        send_error(c, "forbidden", "only a console may send effort frames");
        return;
      }
      std::lock_guard lk(cmd_mu);
      commands.push_back({c, *effort});
      return;
    }
    if (auto* cmd = std::get_if<CmdFrame>(&frame)) {
      if (*role != Role::Console) {
        send_error(c, "forbidden", "only a console may send commands", cmd->id);
        return;
      }
      std::lock_guard lk(cmd_mu);
      commands.push_back({c, *cmd});
      return;
    }
    send_error(c, "unexpected_frame", "frame type is server-to-client only");
  }

  void serve_static(const ClientPtr& c, const ws::HttpRequest& req) {
    auto respond = [&](std::string r) {
      enqueue(c, OutKind::Raw, std::make_shared<const std::string>(std::move(r)));
      close_after_flush(c);
    };
    if (!cfg.console_dir) {
      respond(http_response(404, "Not Found", "text/plain", "no console directory configured\n"));
      return;
    }
    std::string path = req.path.substr(0, req.path.find('?'));
    if (path.empty() || path.front() != '/' || path.find("..") != std::string::npos) {
      respond(http_response(400, "Bad Request", "text/plain", "bad path\n"));
      return;
    }
    std::filesystem::path file = *cfg.console_dir / path.substr(1);
    std::error_code ec;
    if (std::filesystem::is_directory(file, ec)) file /= "index.html";
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      respond(http_response(404, "Not Found", "text/plain", "not found\n"));
      return;
    }
    std::ostringstream body;
    body << in.rdbuf();
    respond(http_response(200, "OK", content_type(file), body.str()));
  }

  void reader_loop(const ClientPtr& c) {
    enum class Transport { Unknown, Lines, Http, WebSocket };
    Transport transport = Transport::Unknown;
    std::string buf;
    std::string fragments;
    bool discarding = false;
    char chunk[8192];

    for (;;) {
      const ssize_t n = ::recv(c->fd, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));

      if (transport == Transport::Unknown) {
        constexpr std::string_view get = "GET ";
        if (buf.size() < get.size() && get.substr(0, buf.size()) == buf) continue;
        transport = buf.compare(0, get.size(), get) == 0 ? Transport::Http : Transport::Lines;
      }

      if (transport == Transport::Http) {
        std::size_t consumed = 0;
        std::optional<ws::HttpRequest> req;
        try {
          req = ws::parse_http_request(buf, consumed);
        } catch (const ws::WsError&) {
          enqueue(c, OutKind::Raw, std::make_shared<const std::string>(http_response(400, "Bad Request", "text/plain", "")));
          close_after_flush(c);
          break;
        }
        if (!req) {
          if (buf.size() > kMaxFrameBytes) break;
          continue;
        }
        buf.erase(0, consumed);
        if (!req->is_websocket_upgrade()) {
          serve_static(c, *req);
          break;
        }
        enqueue(c, OutKind::Raw, std::make_shared<const std::string>(ws::handshake_response(*req->header("sec-websocket-key"))));
        c->websocket = true;
        transport = Transport::WebSocket;
      }

      if (transport == Transport::WebSocket) {
        bool close = false;
        try {
          while (auto d = ws::decode_frame(buf, kMaxFrameBytes)) {
            buf.erase(0, d->consumed);
            switch (d->opcode) {
              case ws::Opcode::Text:
              case ws::Opcode::Binary:
              case ws::Opcode::Continuation:
                fragments += d->payload;
                if (fragments.size() > kMaxFrameBytes) {
                  send_error(c, "frame_too_large", "frame exceeds 64 KiB");
                  fragments.clear();
                } else if (d->fin) {
                  handle_line(c, fragments);
                  fragments.clear();
                }
                break;
              case ws::Opcode::Ping:
                enqueue(c, OutKind::Raw, std::make_shared<const std::string>(ws::encode_frame(ws::Opcode::Pong, d->payload)));
                break;
              case ws::Opcode::Close:
                enqueue(c, OutKind::Raw, std::make_shared<const std::string>(ws::encode_frame(ws::Opcode::Close, "")));
                close = true;
                break;
              default:
                break;
            }
            if (close) break;
          }
        } catch (const ws::WsError& e) {
          send_error(c, "frame_too_large", e.what());
          enqueue(c, OutKind::Raw, std::make_shared<const std::string>(ws::encode_frame(ws::Opcode::Close, "")));
          close = true;
        }
        if (close) {
          close_after_flush(c);
          break;
        }
        continue;
      }

      // Newline-delimited JSON.
      std::size_t start = 0;
      for (;;) {
        const std::size_t nl = buf.find('\n', start);
        if (nl == std::string::npos) break;
        if (discarding) {
          discarding = false;
        } else if (nl - start > kMaxFrameBytes) {
          send_error(c, "frame_too_large", "frame exceeds 64 KiB");
        } else {
          handle_line(c, std::string_view(buf).substr(start, nl - start));
        }
        start = nl + 1;
      }
      buf.erase(0, start);
      if (buf.size() > kMaxFrameBytes) {
        if (!discarding) send_error(c, "frame_too_large", "frame exceeds 64 KiB");
        discarding = true;
        buf.clear();
      }
    }

    {
      std::lock_guard lk(c->mu);
      if (!c->closing) c->dead = true;
    }
    c->cv.notify_one();
    c->reader_done = true;
  }

  // ---- tick thread --------------------------------------------------------

  void start_session(std::optional<std::string> id, const ClientPtr& from) {
    session.emplace(pending);
    log = SessionLog{};
    const bool simulated = mode.load() != ServeMode::Sensor;
    log.config = config_to_json(session->config(), simulated ? &cfg.simulation : nullptr);
    last_sample_t = -1.0;
    {
      std::lock_guard lk(ingress_mu);
      ingress.clear();
    }
    if (simulated) {
      SimulationSetup setup = cfg.simulation;
      rider.emplace(setup, session->config());
      if (mode.load() == ServeMode::Manual) rider->set_power(manual_power_w);
    } else {
      rider.reset();
    }
    refresh_snapshot();
    if (from) send_frame(from, AckFrame{"start", std::move(id), snapshot_copy()});
    if (!cfg.quiet)
      fmt::print(stderr, "session started: {} {} age {}\n", pending.participant_id, to_string(pending.condition),
                 pending.age);
  }

  void finish_session() {
    try {
      log.summary = optimal_hr_ratio(log.ticks);
    } catch (const UndefinedMetricError&) {
      log.summary.reset();
    }
    ++session_counter;
    if (cfg.log_dir) {
      const auto name = fmt::format("{}-{}-{}-{}.jsonl", session->config().participant_id,
                                    to_string(session->config().condition), static_cast<long long>(std::time(nullptr)),
                                    session_counter);
      const auto path = *cfg.log_dir / name;
      try {
        std::filesystem::create_directories(*cfg.log_dir);
        write_session_log(path.string(), log);
        if (!cfg.quiet) fmt::print(stderr, "session log written to {}\n", path.string());
      } catch (const std::exception& e) {
        broadcast_frame(ErrorFrame{"log_write_failed", e.what(), std::nullopt}, Role::Console);
        if (!cfg.quiet) fmt::print(stderr, "cannot write session log: {}\n", e.what());
      }
    }
    session.reset();
    rider.reset();
    log = SessionLog{};
    ++finished;
    refresh_snapshot();
  }

  std::optional<double> current_power() const {
    if (rider) return rider->power_w();
    return std::nullopt;
  }

  void apply(Command& cmd) {
    if (auto* effort = std::get_if<EffortFrame>(&cmd.body)) {
      if (mode.load() != ServeMode::Manual) {
        send_error(cmd.from, "wrong_mode", "effort frames are accepted in manual mode only");
        return;
      }
      const double p_max = cfg.simulation.rider.p_max_w;
      const double applied = std::clamp(effort->power_w, 0.0, p_max);
      manual_power_w = applied;
      if (rider) rider->set_power(applied);
      nlohmann::ordered_json detail;
      detail["power_w"] = applied;
      detail["requested_w"] = effort->power_w;
      detail["clamped"] = applied != effort->power_w;
      send_frame(cmd.from, AckFrame{"effort", std::nullopt, std::move(detail)});
      return;
    }

    auto& c = std::get<CmdFrame>(cmd.body);
    const std::string ref(to_string(c.cmd));
    auto wrong_phase = [&] {
      send_error(cmd.from, "wrong_phase", session ? "a session is running" : "no session is running", c.id);
    };
    auto ack = [&] {
      refresh_snapshot();
      send_frame(cmd.from, AckFrame{ref, c.id, snapshot_copy()});
    };

    try {
      switch (c.cmd) {
        case CommandKind::Start: {
          if (session) return wrong_phase();
          SessionConfig next = pending;
          if (c.age) next.age = *c.age;
          if (c.condition) next.condition = *c.condition;
          if (c.participant_id) next.participant_id = *c.participant_id;
          next.validate();
          pending = next;
          start_session(c.id, cmd.from);
          return;
        }
        case CommandKind::Stop: {
          if (!session) return wrong_phase();
          const LoopState st = session->stop(current_power());
          broadcast_state(st, now_ns());
          log.ticks.push_back(st);
          finish_session();
          ack();
          return;
        }
        case CommandKind::SetCondition:
          if (session) return wrong_phase();
          if (!c.condition) throw ParameterError("set_condition needs 'condition'");
          pending.condition = *c.condition;
          return ack();
        case CommandKind::SetAge: {
          if (session) return wrong_phase();
          if (!c.age) throw ParameterError("set_age needs 'age'");
          SessionConfig next = pending;
          next.age = *c.age;
          next.validate();
          pending = next;
          return ack();
        }
        case CommandKind::SetMode:
          if (session) return wrong_phase();
          if (!c.mode) throw ParameterError("set_mode needs 'mode'");
          mode = *c.mode;
          return ack();
      }
    } catch (const ParameterError& e) {
      send_error(cmd.from, "bad_param", e.what(), c.id);
    }
  }

  std::vector<EcgSample> take_sensor_samples() {
    std::vector<EcgSample> batch;
    {
      std::lock_guard lk(ingress_mu);
      batch.swap(ingress);
    }
    // Regressing timestamps would abort the pipeline; they are dropped here
    // and reported to the sensor.
    std::size_t kept = 0;
    std::size_t rejected = 0;
    for (const auto& s : batch) {
      if (s.t < last_sample_t) {
        ++rejected;
        continue;
      }
      last_sample_t = s.t;
      batch[kept++] = s;
    }
    batch.resize(kept);
    if (rejected > 0) {
      std::lock_guard lk(sensor_mu);
      if (auto s = sensor.lock())
        send_error(s, "timestamp_regression", fmt::format("{} sample(s) older than the stream were dropped", rejected));
    }
    return batch;
  }

  void tick_once(std::int64_t tick_ns) {
    if (!session) {
      std::lock_guard lk(ingress_mu);
      ingress.clear();
      return;
    }
    const double dt = 1.0 / cfg.tick_hz;
    LoopState state;
    std::optional<double> power;
    if (rider) {
      power = rider->power_w();
      const double t_end = static_cast<double>(session->ticks() + 1) / cfg.tick_hz;
      state = session->tick(rider->advance(dt, t_end), power);
      if (mode.load() == ServeMode::Sim) rider->react(state);
    } else {
      const auto batch = take_sensor_samples();
      state = session->tick(batch, std::nullopt);
    }
    ++ticks;
    log.ticks.push_back(state);
    broadcast_state(state, tick_ns);
    if (state.phase == Phase::Finished) finish_session();
  }

  void tick_loop() {
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg.tick_hz));
    if (cfg.auto_start) start_session(std::nullopt, nullptr);
    auto next = Clock::now();
    while (running) {
      std::this_thread::sleep_until(next);
      const std::int64_t tick_ns = now_ns();
      std::vector<Command> batch;
      {
        std::lock_guard lk(cmd_mu);
        batch.swap(commands);
      }
      for (auto& cmd : batch) apply(cmd);
      try {
        tick_once(tick_ns);
      } catch (const std::exception& e) {
        broadcast_frame(ErrorFrame{"session_error", e.what(), std::nullopt}, Role::Console);
        if (session) finish_session();
      }
      next += period;
      const auto now = Clock::now();
      if (now > next + 5 * period) next = now;  // fell far behind: resynchronise
    }
    if (session) {
      log.ticks.push_back(session->stop(current_power()));
      finish_session();
    }
  }

  // ---- accept thread ------------------------------------------------------

  void reap(bool all) {
    std::list<ClientPtr> done;
    {
      std::lock_guard lk(clients_mu);
      for (auto it = clients.begin(); it != clients.end();) {
        if (all || ((*it)->reader_done && (*it)->writer_done)) {
          done.push_back(*it);
          it = clients.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& c : done) {
      if (all) {
        {
          std::lock_guard lk(c->mu);
          c->dead = true;
        }
        c->cv.notify_all();
        ::shutdown(c->fd, SHUT_RDWR);
      }
      if (c->reader.joinable()) c->reader.join();
      if (c->writer.joinable()) c->writer.join();
      ::close(c->fd);
    }
  }

  void accept_loop() {
    while (running) {
      pollfd p{listen_fd, POLLIN, 0};
      const int r = ::poll(&p, 1, 100);
      reap(false);
      if (r <= 0 || !(p.revents & POLLIN)) continue;
      const int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      if (cfg.client_send_buffer_bytes) {
        const int bytes = *cfg.client_send_buffer_bytes;
        ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &bytes, sizeof bytes);
      }
      auto c = std::make_shared<Client>(fd, next_client_id++);
      {
        std::lock_guard lk(clients_mu);
        clients.push_back(c);
      }
      c->writer = std::thread([this, c] { writer_loop(c); });
      c->reader = std::thread([this, c] { reader_loop(c); });
    }
  }

  void open_listener() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port_str = std::to_string(cfg.port);
    if (const int rc = ::getaddrinfo(cfg.host.c_str(), port_str.c_str(), &hints, &res); rc != 0)
      throw IoError(fmt::format("cannot resolve {}: {}", cfg.host, ::gai_strerror(rc)));
    std::string last_error = "no usable address";
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
        sockaddr_storage addr{};
        socklen_t len = sizeof addr;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        bound_port = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                                      : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
        listen_fd = fd;
        break;
      }
      last_error = std::strerror(errno);
      ::close(fd);
    }
    ::freeaddrinfo(res);
    if (listen_fd < 0) throw IoError(fmt::format("cannot listen on {}:{}: {}", cfg.host, cfg.port, last_error));
  }
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running) return;
  impl_->open_listener();
  impl_->running = true;
  impl_->tick_thread = std::thread([this] { impl_->tick_loop(); });
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void Server::stop() {
  if (impl_->running.exchange(false)) {
    if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
    if (impl_->tick_thread.joinable()) impl_->tick_thread.join();
    ::close(impl_->listen_fd);
    impl_->listen_fd = -1;
    impl_->reap(true);
  }
  {
    std::lock_guard lk(impl_->stop_mu);
    impl_->stopped = true;
  }
  impl_->stop_cv.notify_all();
}

void Server::wait() {
  std::unique_lock lk(impl_->stop_mu);
  impl_->stop_cv.wait(lk, [&] { return impl_->stopped; });
}

std::uint16_t Server::port() const { return impl_->bound_port; }
std::uint64_t Server::ticks_emitted() const { return impl_->ticks; }
std::size_t Server::sessions_finished() const { return impl_->finished; }

// ---- LineClient -------------------------------------------------------------

LineClient::LineClient(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0)
    throw IoError(fmt::format("cannot resolve {}: {}", host, ::gai_strerror(rc)));
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw IoError(fmt::format("cannot connect to {}:{}", host, port));
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

LineClient::~LineClient() { close(); }

void LineClient::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void LineClient::send_frame(const Frame& f) { send_line(serialize(f)); }

void LineClient::send_line(std::string_view line) {
  std::string wire(line);
  wire.push_back('\n');
  if (fd_ < 0 || !send_all(fd_, wire)) throw IoError("send failed");
}

std::optional<std::string> LineClient::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    if (const std::size_t nl = buf_.find('\n'); nl != std::string::npos) {
      std::string line = buf_.substr(0, nl);
      buf_.erase(0, nl + 1);
      return line;
    }
    if (fd_ < 0) throw IoError("connection closed");
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() < 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return std::nullopt;
    char chunk[8192];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      close();
      throw IoError("connection closed");
    }
    buf_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::optional<Frame> LineClient::read_frame(std::chrono::milliseconds timeout) {
  auto line = read_line(timeout);
  if (!line) return std::nullopt;
  return parse_frame(*line);
}

bool LineClient::wait_closed(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  try {
    while (Clock::now() < deadline) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      read_line(left);
    }
  } catch (const IoError&) {
    return true;
  }
  return false;
}

}  // namespace cardioloop::net
