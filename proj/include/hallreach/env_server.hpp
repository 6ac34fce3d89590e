#pragma once

// Training environment over a local stream socket: newline-delimited JSON,
// one episode state machine per connection.

#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstring>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "hallreach/closed_loop.hpp"

namespace hallreach {

/// Handles protocol lines for one connection. Transport free, so it can be
/// driven directly in tests.
class EnvProtocol {
 public:
  using EpisodeLog = std::function<void(const EpisodeSession&)>;

  EnvProtocol(const Scenario& sc, std::optional<FaultConfig> faults, EpisodeLog on_episode_end = {})
      : session_(sc, std::move(faults), sc.num_episode_steps()), on_end_(std::move(on_episode_end)) {}

  /// Reply line (without the newline) for one request line.
  std::string handle(const std::string& line) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      return error("malformed message: not valid JSON");
    }
    if (!req.is_object() || !req.contains("cmd") || !req.at("cmd").is_string()) {
      return error("malformed message: expected an object with a string \"cmd\"");
    }
    const std::string cmd = req.at("cmd").get<std::string>();
    try {
      if (cmd == "reset") return reset(req);
      if (cmd == "step") return step(req);
    } catch (const Error& e) {
      return error(e.what());
    }
    return error("unknown cmd \"" + cmd + "\"");
  }

  /// Logs an episode that was started but not finished.
  void close() {
    if (session_.started() && !session_.done() && !logged_) log();
  }

  const EpisodeSession& session() const { return session_; }

 private:
  static std::string error(const std::string& msg) { return nlohmann::json{{"error", msg}}.dump(); }

  static nlohmann::json state_json(const CarState& s) {
    return {{"x", s.x}, {"y", s.y}, {"v", s.v}, {"theta", s.theta}};
  }

  std::string reset(const nlohmann::json& req) {
    if (!req.contains("seed") || !req.at("seed").is_number_unsigned()) {
      return error("reset needs a nonnegative integer \"seed\"");
    }
    const std::uint64_t seed = req.at("seed").get<std::uint64_t>();
    const Scenario& sc = session_.scenario();
    double lateral = 0.0;
    if (req.contains("init_lateral") && !req.at("init_lateral").is_null()) {
      if (!req.at("init_lateral").is_number()) return error("init_lateral must be a number");
      lateral = req.at("init_lateral").get<double>();
      if (!std::isfinite(lateral)) return error("init_lateral must be finite");
    } else {
      lateral = lateral_from_seed(sc, seed);
    }
    close();
    const LidarScan& scan = session_.reset(sc.initial_state(lateral), seed);
    logged_ = false;
    nlohmann::json rep{{"scan", scan.distances}, {"t", session_.time()}, {"state", state_json(session_.state())}};
    return rep.dump();
  }

  std::string step(const nlohmann::json& req) {
    if (!req.contains("steering_deg") || !req.at("steering_deg").is_number()) {
      return error("step needs a numeric \"steering_deg\"");
    }
    const double deg = req.at("steering_deg").get<double>();
    if (!std::isfinite(deg) || std::fabs(deg) > kMaxSteeringDeg) {
      return error("steering_deg must lie within [-15, 15]");
    }
    const StepResult r = session_.step(deg_to_rad(deg));
    if (r.done) log();
    nlohmann::json rep{{"scan", r.scan.distances}, {"reward", r.reward},       {"done", r.done},
                       {"crashed", r.crashed},      {"state", state_json(r.state)}, {"t", r.t}};
    return rep.dump();
  }

  void log() {
    logged_ = true;
    if (on_end_) on_end_(session_);
  }

  EpisodeSession session_;
  EpisodeLog on_end_;
  bool logged_ = false;
};

/// One log line per episode.
inline std::string episode_log_line(int connection, const EpisodeSession& s) {
  return "connection " + std::to_string(connection) + " seed " + std::to_string(s.seed()) + " steps " +
         std::to_string(s.steps_taken()) + " outcome " + (s.done() ? to_string(s.outcome()) : "incomplete") +
         " reward " + format_number(s.total_reward()) + " min_clearance " + format_number(s.min_clearance());
}

struct ServeOptions {
  int max_connections = 0;                   // stop after this many clients; 0 serves forever
  std::size_t max_line_bytes = 1 << 20;      // longer requests close the connection
  std::function<void(int port)> on_listening;  // called with the bound port
};

namespace env_detail {

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const { return fd_; }

 private:
  int fd_;
};

inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 == endpoint.size()) {
    throw ConfigError("endpoint must look like host:port, got '" + endpoint + "'");
  }
  std::string host = endpoint.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  return {host.empty() ? "127.0.0.1" : host, endpoint.substr(colon + 1)};
}

inline int listen_on(const std::string& endpoint, int& port) {
  const auto [host, service] = split_endpoint(endpoint);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw ConfigError("cannot resolve '" + endpoint + "': " + ::gai_strerror(rc));
  }
  std::string last = "no address";
  int fd = -1;
  for (addrinfo* a = res; a != nullptr && fd < 0; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) != 0 || ::listen(fd, 4) != 0) {
      last = std::strerror(errno);
      ::close(fd);
      fd = -1;
    }
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw ConfigError("cannot bind '" + endpoint + "': " + last);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                    : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  return fd;
}

inline bool send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace env_detail

/// Serves clients one at a time on `endpoint` ("host:port"; port 0 picks a
/// free port). Throws ConfigError when the endpoint cannot be bound.
inline void serve_env(const Scenario& sc, const std::optional<FaultConfig>& faults, const std::string& endpoint,
                      std::ostream& log, const ServeOptions& opt = {}) {
  using namespace env_detail;
  sc.validate();
  int port = 0;
  const Fd server(listen_on(endpoint, port));
  log << "listening on port " << port << std::endl;
  if (opt.on_listening) opt.on_listening(port);

  for (int connection = 1; opt.max_connections <= 0 || connection <= opt.max_connections; ++connection) {
    const int raw = ::accept(server.get(), nullptr, nullptr);
    if (raw < 0) {
      if (errno == EINTR) {
        --connection;
        continue;
      }
      throw Error(std::string("accept failed: ") + std::strerror(errno));
    }
    const Fd client(raw);
    EnvProtocol proto(sc, faults, [&](const EpisodeSession& s) { log << episode_log_line(connection, s) << std::endl; });
    std::string buffer;
    char chunk[4096];
    bool open = true;
    while (open) {
      const ssize_t n = ::recv(client.get(), chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
        std::string line = buffer.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!send_all(client.get(), proto.handle(line) + "\n")) {
          open = false;
          break;
        }
      }
      buffer.erase(0, start);
      if (buffer.size() > opt.max_line_bytes) {
        send_all(client.get(), nlohmann::json{{"error", "message too long"}}.dump() + "\n");
        open = false;
      }
    }
    proto.close();
  }
}

}  // namespace hallreach
