#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <regex>

#include "json.hpp"
#include "teleimp/error.hpp"
#include "teleimp/server.hpp"

namespace teleimp::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxQueued = 256;  // per client; oldest unsent events are dropped beyond this

}  // namespace

struct WsServer::Impl {
  // declaration order matters: pending handlers (and their connections) die
  // with ioc, and connection destructors still touch the members above it
  backend::SessionManager& sessions;
  TelemetryFanout& telemetry;
  ServerConfig config;
  std::atomic<std::size_t> live{0};
  asio::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread thread;

  Impl(backend::SessionManager& s, TelemetryFanout& t, ServerConfig c)
      : sessions(s), telemetry(t), config(std::move(c)) {}

  struct Connection : std::enable_shared_from_this<Connection> {
    Impl& owner;
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    std::shared_ptr<http::response<http::string_body>> rejection;
    std::shared_ptr<backend::Session> session;
    std::deque<std::string> queue;
    std::size_t session_token = 0, telemetry_token = 0;
    bool closed = false;

    Connection(Impl& o, tcp::socket socket) : owner(o), ws(std::move(socket)) { ++owner.live; }
    ~Connection() {
      unsubscribe();
      --owner.live;
    }

    void unsubscribe() {
      if (session && session_token) session->events().unsubscribe(session_token);
      if (telemetry_token) owner.telemetry.hub().unsubscribe(telemetry_token);
      session_token = telemetry_token = 0;
    }

    void start() {
      http::async_read(ws.next_layer(), buffer, req,
                       [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
    }

    void reject(http::status status, std::string why) {
      rejection = std::make_shared<http::response<http::string_body>>(status, req.version());
      rejection->set(http::field::content_type, "application/json");
      rejection->body() = nlohmann::json{{"error", "not_found"}, {"message", std::move(why)}}.dump();
      rejection->prepare_payload();
      http::async_write(ws.next_layer(), *rejection, [self = shared_from_this()](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->ws.next_layer().socket().shutdown(tcp::socket::shutdown_both, ignored);
      });
    }

    void on_request(beast::error_code ec) {
      if (ec) return;
      static const std::regex route(R"(^/session/([^/?]+)/telemetry(\?.*)?$)");
      std::smatch m;
      const std::string target(req.target());
      if (!std::regex_match(target, m, route)) return reject(http::status::not_found, "no such endpoint " + target);
      session = owner.sessions.find(m[1]);
      if (!session) return reject(http::status::not_found, "unknown session " + std::string(m[1]));
      if (!websocket::is_upgrade(req)) return reject(http::status::upgrade_required, "websocket upgrade expected");
      ws.async_accept(req, [self = shared_from_this()](beast::error_code ec2) { self->on_accept(ec2); });
    }

    void on_accept(beast::error_code ec) {
      if (ec) return;
      std::weak_ptr<Connection> weak = shared_from_this();
      auto forward = [weak, &ioc = owner.ioc](const std::string& msg) {
        if (auto self = weak.lock()) asio::post(ioc, [self, msg] { self->enqueue(msg); });
      };
      session_token = session->events().subscribe(forward);
      telemetry_token = owner.telemetry.hub().subscribe(forward);
      const auto v = session->view();
      enqueue(nlohmann::json{{"type", "hello"}, {"session", v.id}, {"mode", std::string(backend::to_string(v.mode))}}
                  .dump());
      do_read();
    }

    void enqueue(const std::string& msg) {
      if (closed) return;
      if (queue.size() >= kMaxQueued) queue.erase(queue.begin() + 1);  // front may be mid-write
      queue.push_back(msg);
      if (queue.size() == 1) do_write();
    }

    void do_write() {
      ws.text(true);
      ws.async_write(asio::buffer(queue.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->close();
        self->queue.pop_front();
        if (!self->queue.empty()) self->do_write();
      });
    }

    // Inbound frames are ignored; reading keeps control frames (ping, close) flowing.
    void do_read() {
      ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->close();
        self->buffer.consume(self->buffer.size());
        self->do_read();
      });
    }

    void close() {
      closed = true;
      queue.clear();
      unsubscribe();
    }
  };

  void do_accept() {
    acceptor->async_accept(ioc, [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<Connection>(*this, std::move(socket))->start();
      do_accept();
    });
  }
};

WsServer::WsServer(backend::SessionManager& sessions, TelemetryFanout& telemetry, ServerConfig config)
    : impl_(std::make_unique<Impl>(sessions, telemetry, std::move(config))) {}

WsServer::~WsServer() { stop(); }

void WsServer::start() {
  try {
    const tcp::endpoint ep(asio::ip::make_address(impl_->config.host),
                           static_cast<unsigned short>(impl_->config.ws_port));
    impl_->acceptor.emplace(impl_->ioc, ep);
    port_ = impl_->acceptor->local_endpoint().port();
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io, "cannot bind websocket on " + impl_->config.host + ":" +
                                   std::to_string(impl_->config.ws_port) + ": " + e.what());
  }
  impl_->do_accept();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void WsServer::stop() {
  if (!impl_) return;
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::size_t WsServer::connections() const { return impl_->live.load(); }

}  // namespace teleimp::server
