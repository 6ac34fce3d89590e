#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <future>
#include <sstream>
#include <thread>

#include "hallreach/env_server.hpp"
#include "hallreach/fixtures.hpp"

using namespace hallreach;
using nlohmann::json;

namespace {

json ask(EnvProtocol& p, const json& req) { return json::parse(p.handle(req.dump())); }

int connect_local(int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    return -1;
  }
  return fd;
}

class LineClient {
 public:
  explicit LineClient(int port) : fd_(connect_local(port)) {}
  ~LineClient() {
    if (fd_ >= 0) ::close(fd_);
  }
  bool ok() const { return fd_ >= 0; }

  std::string request(const std::string& line) {
    const std::string out = line + "\n";
    ::send(fd_, out.data(), out.size(), MSG_NOSIGNAL);
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return reply;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return {};
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

}  // namespace

TEST(EnvProtocol, ResetReturnsInitialScan) {
  const Scenario sc;
  EnvProtocol p(sc, std::nullopt);
  const json r = ask(p, {{"cmd", "reset"}, {"seed", 7}});
  ASSERT_FALSE(r.contains("error")) << r;
  EXPECT_EQ(r.at("scan").size(), 21u);
  EXPECT_EQ(r.at("t"), 0.0);
  EXPECT_FALSE(r.contains("reward"));
  EXPECT_FALSE(r.contains("done"));
  const CarState s0 = sc.initial_state(lateral_from_seed(sc, 7));
  EXPECT_EQ(r.at("state").at("x").get<double>(), s0.x);
  EXPECT_EQ(r.at("state").at("theta").get<double>(), s0.theta);
}

TEST(EnvProtocol, StraightStepEarnsFullReward) {
  const Scenario sc;
  EnvProtocol p(sc, std::nullopt);
  ask(p, {{"cmd", "reset"}, {"seed", 1}, {"init_lateral", 0.0}});
  const json r = ask(p, {{"cmd", "step"}, {"steering_deg", 0.0}});
  EXPECT_EQ(r.at("reward"), 10.0);
  EXPECT_EQ(r.at("done"), false);
  EXPECT_EQ(r.at("crashed"), false);
  EXPECT_EQ(r.at("t"), 0.1);
  EXPECT_EQ(r.at("scan").size(), 21u);
}

TEST(EnvProtocol, StateMachineContract) {
  Scenario sc;
  sc.horizon = 0.3;
  int logged = 0;
  EnvProtocol p(sc, std::nullopt, [&](const EpisodeSession&) { ++logged; });
  EXPECT_EQ(ask(p, {{"cmd", "step"}, {"steering_deg", 0.0}}).at("error"), "no episode; send reset");
  ask(p, {{"cmd", "reset"}, {"seed", 3}});
  for (int i = 0; i < 2; ++i) EXPECT_EQ(ask(p, {{"cmd", "step"}, {"steering_deg", 1.0}}).at("done"), false);
  EXPECT_EQ(ask(p, {{"cmd", "step"}, {"steering_deg", 1.0}}).at("done"), true);
  EXPECT_EQ(logged, 1);
  EXPECT_EQ(p.handle(R"({"cmd":"step","steering_deg":0})"), R"({"error":"episode finished; send reset"})");
  EXPECT_FALSE(ask(p, {{"cmd", "reset"}, {"seed", 4}}).contains("error"));
  EXPECT_FALSE(ask(p, {{"cmd", "step"}, {"steering_deg", 0.0}}).contains("error"));
  p.close();
  EXPECT_EQ(logged, 2);
}

TEST(EnvProtocol, BadMessagesKeepTheSession) {
  const Scenario sc;
  EnvProtocol p(sc, std::nullopt);
  ask(p, {{"cmd", "reset"}, {"seed", 2}});
  ask(p, {{"cmd", "step"}, {"steering_deg", 0.0}});
  EXPECT_TRUE(json::parse(p.handle("{not json")).contains("error"));
  EXPECT_TRUE(json::parse(p.handle("[1,2]")).contains("error"));
  EXPECT_TRUE(ask(p, {{"cmd", "fly"}}).contains("error"));
  EXPECT_TRUE(ask(p, {{"cmd", "step"}}).contains("error"));
  EXPECT_TRUE(ask(p, {{"cmd", "step"}, {"steering_deg", 20.0}}).contains("error"));
  EXPECT_TRUE(ask(p, {{"cmd", "step"}, {"steering_deg", "left"}}).contains("error"));
  EXPECT_TRUE(ask(p, {{"cmd", "reset"}, {"seed", -1}}).contains("error"));
  EXPECT_TRUE(ask(p, {{"cmd", "reset"}, {"seed", 1}, {"init_lateral", 5.0}}).contains("error"));
  EXPECT_EQ(p.session().steps_taken(), 1);
  const json r = ask(p, {{"cmd", "step"}, {"steering_deg", 0.0}});
  EXPECT_EQ(r.at("t"), 0.2);
}

TEST(EnvProtocol, MatchesInProcessEpisodes) {
  Scenario sc;
  FaultConfig f;
  f.enabled = true;
  f.seed = 9;
  const auto c = fixtures::proportional();
  EnvProtocol p(sc, f);
  EpisodeSession local(sc, f, sc.num_episode_steps());
  json r = ask(p, {{"cmd", "reset"}, {"seed", 11}});
  local.reset(sc.initial_state(lateral_from_seed(sc, 11)), 11);
  EXPECT_EQ(r.at("scan").get<std::vector<double>>(), local.scan().distances);
  while (!r.value("done", false)) {
    const double deg = rad_to_deg(c.evaluate(r.at("scan").get<std::vector<double>>()));
    r = ask(p, {{"cmd", "step"}, {"steering_deg", deg}});
    const StepResult l = local.step(deg_to_rad(deg));
    ASSERT_EQ(r.at("reward").get<double>(), l.reward);
    ASSERT_EQ(r.at("state").at("x").get<double>(), l.state.x);
    ASSERT_EQ(r.at("state").at("y").get<double>(), l.state.y);
    ASSERT_EQ(r.at("scan").get<std::vector<double>>(), l.scan.distances);
  }

  // Zero steering survives the degree conversion exactly, so the trace
  // matches the in-process runner as well.
  const EpisodeTrace t = run_seeded_episode(fixtures::straight(), sc, f, 5);
  r = ask(p, {{"cmd", "reset"}, {"seed", 5}});
  for (const StepRecord& s : t.steps) {
    EXPECT_EQ(r.at("scan").get<std::vector<double>>(), s.scan.distances);
    r = ask(p, {{"cmd", "step"}, {"steering_deg", 0.0}});
  }
  EXPECT_EQ(r.at("state").at("x").get<double>(), t.final_state.x);
  EXPECT_EQ(r.at("state").at("y").get<double>(), t.final_state.y);
}

TEST(ServeEnv, SequentialClientsOverSocket) {
  Scenario sc;
  sc.horizon = 2.0;
  std::ostringstream log;
  std::promise<int> port;
  ServeOptions opt;
  opt.max_connections = 2;
  opt.on_listening = [&](int p) { port.set_value(p); };
  std::thread server([&] { serve_env(sc, std::nullopt, "127.0.0.1:0", log, opt); });
  const int p = port.get_future().get();
  {
    LineClient a(p);
    ASSERT_TRUE(a.ok());
    EXPECT_TRUE(json::parse(a.request("garbage")).contains("error"));
    EXPECT_EQ(json::parse(a.request(R"({"cmd":"reset","seed":7})")).at("scan").size(), 21u);
    json r;
    for (int k = 0; k < sc.num_steps(); ++k) r = json::parse(a.request(R"({"cmd":"step","steering_deg":0.0})"));
    EXPECT_EQ(r.at("done"), true);
    EXPECT_EQ(a.request(R"({"cmd":"step","steering_deg":0.0})"), R"({"error":"episode finished; send reset"})");
  }
  {
    LineClient b(p);
    ASSERT_TRUE(b.ok());
    EXPECT_EQ(json::parse(b.request(R"({"cmd":"step","steering_deg":0.0})")).at("error"), "no episode; send reset");
    EXPECT_EQ(json::parse(b.request(R"({"cmd":"reset","seed":8})")).at("t"), 0.0);
  }
  server.join();
  const std::string text = log.str();
  EXPECT_NE(text.find("connection 1 seed 7 steps 20 outcome Completed"), std::string::npos) << text;
  EXPECT_NE(text.find("connection 2 seed 8 steps 0 outcome incomplete"), std::string::npos) << text;
}

TEST(ServeEnv, BadEndpointIsConfigError) {
  const Scenario sc;
  std::ostringstream log;
  EXPECT_THROW(serve_env(sc, std::nullopt, "no-port", log), ConfigError);
  EXPECT_THROW(serve_env(sc, std::nullopt, "256.1.1.1:80", log), ConfigError);
}
