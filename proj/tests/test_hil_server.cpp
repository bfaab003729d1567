#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "zst/hilbridge.hpp"

using namespace zst;
using namespace zst::hil;
using nlohmann::json;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr double kTimeScale = 10.0;

std::unique_ptr<Server> start_server(double time_scale = kTimeScale, unsigned short port = 0) {
  HilConfig cfg;
  cfg.port = port;
  cfg.time_scale = time_scale;
  auto server = std::make_unique<Server>(
      std::make_unique<Session>(training_trajectories(false), cfg, VehicleParams{}, 2.0, "live"));
  server->start();
  return server;
}

http::response<http::string_body> http_request(unsigned short port, http::verb verb, const std::string& target) {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ignored;
  stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
  return res;
}

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(ioc_) {
    net::connect(beast::get_lowest_layer(ws_), std::array{tcp::endpoint(net::ip::make_address("127.0.0.1"), port)});
    ws_.handshake("127.0.0.1:" + std::to_string(port), "/drive");
    ws_.text(true);
  }
  ~WsClient() { close(); }

  json read() {
    beast::flat_buffer buffer;
    ws_.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  }

  // Next frame of the given type, skipping others.
  json read_type(const std::string& type, int max_frames = 200) {
    for (int i = 0; i < max_frames; ++i) {
      json j = read();
      if (j["type"] == type) return j;
    }
    throw std::runtime_error("no '" + type + "' frame");
  }

  void send(const json& j) { ws_.write(net::buffer(j.dump())); }
  void send_raw(const std::string& text) { ws_.write(net::buffer(text)); }

  void close() {
    if (!ws_.is_open()) return;
    beast::error_code ignored;
    ws_.close(websocket::close_code::normal, ignored);
  }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

json command(double steering, double throttle) {
  return {{"v", 1}, {"type", "cmd"}, {"steering", steering}, {"throttle", throttle}};
}

json control(const std::string& action) { return {{"v", 1}, {"type", "ctl"}, {"action", action}}; }

double session_time(Server& server) {
  double t = 0.0;
  server.with_session([&](Session& s) { t = s.time(); });
  return t;
}

}  // namespace

TEST(HilServer, ServesTrajectoryListing) {
  auto server = start_server();
  ASSERT_NE(server->port(), 0);
  const auto res = http_request(server->port(), http::verb::get, "/trajectories");
  EXPECT_EQ(res.result(), http::status::ok);
  EXPECT_EQ(res[http::field::content_type], "application/json");
  const json list = json::parse(res.body());
  ASSERT_EQ(list.size(), 7u);
  for (const auto& item : list) {
    EXPECT_TRUE(item.contains("id"));
    EXPECT_TRUE(item.contains("speed_profile"));
  }
  EXPECT_EQ(http_request(server->port(), http::verb::get, "/nope").result(), http::status::not_found);
  EXPECT_EQ(http_request(server->port(), http::verb::post, "/trajectories").result(),
            http::status::method_not_allowed);
  server->stop();
}

TEST(HilServer, PortInUseIsReported) {
  auto first = start_server();
  HilConfig cfg;
  cfg.port = first->port();
  Server second(std::make_unique<Session>(training_trajectories(false), cfg, VehicleParams{}, 2.0, "dup"));
  try {
    second.start();
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(first->port())), std::string::npos) << e.what();
  }
  first->stop();
}

TEST(HilServer, HelloThenStateBroadcasts) {
  auto server = start_server();
  WsClient client(server->port());
  const json hello = client.read();
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["session"], "live");
  EXPECT_EQ(hello["trajectories"].size(), 7u);
  const double t0 = client.read_type("state")["t"].get<double>();
  double prev = t0;
  for (int i = 0; i < 20; ++i) {
    const json s = client.read_type("state");
    // 20 Hz on the 50 Hz tick grid: gaps of two or three ticks.
    const double gap = s["t"].get<double>() - prev;
    EXPECT_TRUE(std::abs(gap - 0.04) < 1e-9 || std::abs(gap - 0.06) < 1e-9) << gap;
    EXPECT_FALSE(s["paused"].get<bool>());
    EXPECT_EQ(s["vel"].get<double>(), 0.0);  // idle client, vehicle at rest
    prev = s["t"].get<double>();
  }
  EXPECT_NEAR(prev - t0, 1.0, 1e-9);
  client.close();
  server->stop();
}

TEST(HilServer, ErrorsComeBackOnTheSocket) {
  auto server = start_server();
  WsClient client(server->port());
  client.read_type("hello");
  client.send_raw("{broken");
  EXPECT_NE(client.read_type("error")["message"].get<std::string>().find("malformed"), std::string::npos);
  client.send({{"type", "ctl"}, {"action", "select_trajectory"}, {"id", "moon"}});
  EXPECT_NE(client.read_type("error")["message"].get<std::string>().find("moon"), std::string::npos);
  // Still connected and usable.
  client.send({{"type", "ctl"}, {"action", "select_trajectory"}, {"id", "line_30"}});
  for (int i = 0; i < 100; ++i) {
    if (client.read_type("state")["traj"] == "line_30") break;
    ASSERT_LT(i, 99);
  }
  client.close();
  server->stop();
}

TEST(HilServer, CommandsDriveTheVehicle) {
  auto server = start_server();
  WsClient client(server->port());
  client.read_type("hello");
  double v = 0.0;
  for (int i = 0; i < 40; ++i) {
    const json s = client.read_type("state");
    v = s["vel"].get<double>();
    client.send(command(0.0, 1.0));
  }
  EXPECT_GT(v, 0.2);
  client.close();
  server->stop();
}

TEST(HilServer, DisconnectPausesSimulation) {
  auto server = start_server();
  {
    WsClient client(server->port());
    client.read_type("hello");
    client.read_type("state");
    client.close();
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  const double t0 = session_time(*server);
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  EXPECT_EQ(session_time(*server), t0);
  server->with_session([](Session& s) { EXPECT_TRUE(s.paused()); });
  server->stop();
}

TEST(HilServer, TwoClientsBothReceive) {
  auto server = start_server();
  WsClient a(server->port());
  WsClient b(server->port());
  a.read_type("hello");
  b.read_type("hello");
  EXPECT_EQ(a.read_type("state")["session"], "live");
  EXPECT_EQ(b.read_type("state")["session"], "live");
  server->with_session([](Session& s) { EXPECT_EQ(s.clients(), 2u); });
  a.close();
  b.close();
  server->stop();
}

// Thirty simulated seconds of recording at 10 Hz, time-scaled.
TEST(HilServer, RecordsThreeHundredSamplesInThirtySeconds) {
  auto server = start_server();
  WsClient client(server->port());
  client.read_type("hello");
  client.send(control("start_recording"));
  double t_start = -1.0;
  for (;;) {
    const json s = client.read_type("state");
    const double t = s["t"].get<double>();
    if (s["recording"].get<bool>() && t_start < 0.0) t_start = t;
    if (t_start >= 0.0 && t - t_start >= 30.0) break;
    client.send(command(0.1, 0.3));
  }
  client.send(control("stop_recording"));
  for (int i = 0; i < 100; ++i) {
    if (!client.read_type("state")["recording"].get<bool>()) break;
  }
  client.close();
  server->stop();
  const std::size_t n = server->session().samples().size();
  EXPECT_GE(n, 298u);
  EXPECT_LE(n, 302u);
  const auto& samples = server->session().samples();
  for (std::size_t k = 1; k < samples.size(); ++k) {
    EXPECT_NEAR(samples[k].t - samples[k - 1].t, 0.1, 1e-9);
  }

  // The written dataset ingests cleanly and its error states recompute from the state log.
  const auto dir = std::filesystem::temp_directory_path() / "zst_test_hil_server_a10";
  std::filesystem::remove_all(dir);
  const SessionFiles files = finalize_session(server->session(), dir);
  const IngestReport report = ingest_hil_recording(files.dataset);
  EXPECT_EQ(report.clamped_commands, 0u);
  ASSERT_EQ(report.data.size(), n);
  const auto log = read_state_log(files.states);
  ASSERT_EQ(log.size(), n);
  const auto& path = server->session().selected().path;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cp = closest_point(path, {log[i].state.x, log[i].state.y});
    const ErrorState e = lookahead_error(path, log[i].state, cp.index, server->session().lookahead());
    const ErrorState& r = report.data.samples()[i].e;
    EXPECT_NEAR(e.e1, r.e1, 1e-9);
    EXPECT_NEAR(e.e2, r.e2, 1e-9);
    EXPECT_NEAR(e.e3, r.e3, 1e-9);
    EXPECT_NEAR(e.e4, r.e4, 1e-9);
  }
  std::filesystem::remove_all(dir);
}

TEST(HilServer, SessionOnlyAfterStop) {
  auto server = start_server();
  EXPECT_TRUE(server->running());
  EXPECT_THROW(server->session(), std::logic_error);
  server->stop();
  EXPECT_FALSE(server->running());
  EXPECT_NO_THROW(server->session());
  server->stop();  // idempotent
}
