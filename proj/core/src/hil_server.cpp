#include <chrono>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "zst/hilbridge.hpp"

namespace zst::hil {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedFrames = 64;

class WsClient;

struct Connected {
  std::weak_ptr<WsClient> client;
};
struct Disconnected {};
struct Inbound {
  ClientMessage message;
  std::weak_ptr<WsClient> client;
};
using Event = std::variant<Connected, Disconnected, Inbound>;

}  // namespace

struct Server::Impl {
  explicit Impl(std::unique_ptr<Session> s) : session(std::move(s)) {}

  std::unique_ptr<Session> session;
  std::string trajectories_body;

  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::set<std::shared_ptr<WsClient>> clients;  // network thread only

  std::thread net_thread;
  std::thread tick_thread;
  std::atomic<bool> running{false};
  unsigned short bound_port = 0;

  std::mutex inbox_mutex;
  std::deque<Event> inbox;
  std::mutex session_mutex;  // held by the ticker while it touches the session

  void push(Event e) {
    std::lock_guard lock(inbox_mutex);
    inbox.push_back(std::move(e));
  }

  void do_accept();
  void ticker();
  void send_to(const std::weak_ptr<WsClient>& client, std::string text);
  void broadcast(std::string text);
};

namespace {

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, Server::Impl* server) : ws_(std::move(socket)), server_(server) {}

  void run(http::request<http::string_body> request) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->server_->clients.insert(self);
      self->server_->push(Connected{self});
      self->do_read();
    });
  }

  void send(std::shared_ptr<const std::string> text) {
    if (closed_ || queue_.size() >= kMaxQueuedFrames) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) do_write();
  }

  void close() {
    if (closed_) return;
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      finish();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      server_->push(Inbound{parse_client_message(text), weak_from_this()});
    } catch (const WireError& e) {
      send(std::make_shared<const std::string>(error_json(e.what())));
    }
    do_read();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->finish();
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->do_write();
                    });
  }

  void finish() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    if (server_->clients.erase(shared_from_this()) > 0) server_->push(Disconnected{});
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl* server_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool closed_ = false;
};

class HttpClient : public std::enable_shared_from_this<HttpClient> {
 public:
  HttpClient(tcp::socket socket, Server::Impl* server) : stream_(std::move(socket)), server_(server) {}

  void run() { do_read(); }

 private:
  void do_read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->on_read(ec);
                     });
  }

  void on_read(beast::error_code ec) {
    if (ec) return;
    const std::string target(request_.target());
    if (websocket::is_upgrade(request_)) {
      if (target == "/drive") {
        stream_.expires_never();
        std::make_shared<WsClient>(stream_.release_socket(), server_)->run(std::move(request_));
        return;
      }
      respond(http::status::not_found, "text/plain", "no websocket endpoint at " + target + "\n");
      return;
    }
    if (target == "/trajectories") {
      if (request_.method() != http::verb::get) {
        respond(http::status::method_not_allowed, "text/plain", "use GET\n");
      } else {
        respond(http::status::ok, "application/json", server_->trajectories_body);
      }
      return;
    }
    respond(http::status::not_found, "text/plain", "not found: " + target + "\n");
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto response = std::make_shared<http::response<http::string_body>>(status, request_.version());
    response->set(http::field::content_type, type);
    response->set(http::field::access_control_allow_origin, "*");
    response->keep_alive(request_.keep_alive());
    response->body() = std::move(body);
    response->prepare_payload();
    http::async_write(stream_, *response,
                      [self = shared_from_this(), response](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (response->keep_alive()) {
                          self->do_read();
                        } else {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                        }
                      });
  }

  beast::tcp_stream stream_;
  Server::Impl* server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

}  // namespace

void Server::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpClient>(std::move(socket), this)->run();
    do_accept();
  });
}

void Server::Impl::send_to(const std::weak_ptr<WsClient>& client, std::string text) {
  auto shared = std::make_shared<const std::string>(std::move(text));
  net::post(ioc, [client, shared] {
    if (auto c = client.lock()) c->send(shared);
  });
}

void Server::Impl::broadcast(std::string text) {
  auto shared = std::make_shared<const std::string>(std::move(text));
  net::post(ioc, [this, shared] {
    for (const auto& c : clients) c->send(shared);
  });
}

void Server::Impl::ticker() {
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(
      1.0 / (session->config().tick_hz * session->config().time_scale)));
  auto next = clock::now();
  while (running.load()) {
    std::deque<Event> events;
    {
      std::lock_guard lock(inbox_mutex);
      events.swap(inbox);
    }
    std::unique_lock session_lock(session_mutex);
    for (Event& event : events) {
      if (auto* c = std::get_if<Connected>(&event)) {
        session->client_connected();
        send_to(c->client, hello_json(session->id(), session->trajectories(), session->selected().id));
      } else if (std::holds_alternative<Disconnected>(event)) {
        session->client_disconnected();
      } else {
        auto& in = std::get<Inbound>(event);
        try {
          session->handle(in.message);
        } catch (const WireError& e) {
          send_to(in.client, error_json(e.what()));
        }
      }
    }
    if (auto b = session->tick()) broadcast(to_json(*b));
    session_lock.unlock();

    next += period;
    const auto now = clock::now();
    if (next < now - 10 * period) next = now;  // fell far behind; do not burst
    std::this_thread::sleep_until(next);
  }
}

Server::Server(std::unique_ptr<Session> session) : impl_(std::make_unique<Impl>(std::move(session))) {
  if (!impl_->session) throw std::invalid_argument("server needs a session");
}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running.load()) return;
  Impl& s = *impl_;
  s.trajectories_body = trajectories_json(s.session->trajectories());
  const HilConfig& cfg = s.session->config();
  try {
    const tcp::endpoint endpoint(net::ip::make_address(cfg.bind), cfg.port);
    s.acceptor.open(endpoint.protocol());
    s.acceptor.set_option(net::socket_base::reuse_address(true));
    s.acceptor.bind(endpoint);
    s.acceptor.listen(net::socket_base::max_listen_connections);
    s.bound_port = s.acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    throw std::runtime_error("cannot listen on " + cfg.bind + ":" + std::to_string(cfg.port) +
                             ": " + e.code().message());
  }
  s.running = true;
  s.do_accept();
  s.net_thread = std::thread([&s] { s.ioc.run(); });
  s.tick_thread = std::thread([&s] { s.ticker(); });
}

unsigned short Server::port() const { return impl_->bound_port; }

bool Server::running() const { return impl_->running.load(); }

void Server::stop() {
  Impl& s = *impl_;
  if (!s.running.exchange(false)) return;
  if (s.tick_thread.joinable()) s.tick_thread.join();
  net::post(s.ioc, [&s] {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    for (const auto& c : s.clients) c->close();
  });
  // Give the close handlers a moment, then stop the loop regardless.
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  s.ioc.stop();
  if (s.net_thread.joinable()) s.net_thread.join();
  s.clients.clear();
}

void Server::with_session(const std::function<void(Session&)>& fn) {
  std::lock_guard lock(impl_->session_mutex);
  fn(*impl_->session);
}

const Session& Server::session() const {
  if (impl_->running.load()) throw std::logic_error("session() is only available after stop()");
  return *impl_->session;
}

}  // namespace zst::hil
