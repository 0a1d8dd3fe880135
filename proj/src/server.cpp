#include "armstack/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace armstack {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("expected host:port, got '" + text + "'");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  unsigned long value = 0;
  std::size_t used = 0;
  try {
    value = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || value > 65535) {
    throw std::invalid_argument("invalid port '" + port + "'");
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

namespace {

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

}  // namespace

class WsSession;

struct Server::Impl {
  TeleopService& svc;
  ServerOptions opts;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  TeleopService::Subscription sub;
  std::vector<std::weak_ptr<WsSession>> sessions;  // io thread only
  std::atomic<std::size_t> clients{0};
  std::uint16_t bound_port = 0;

  Impl(TeleopService& s, ServerOptions o) : svc(s), opts(std::move(o)) {}

  void accept();
  void broadcast(const std::shared_ptr<const std::string>& text);
  void add_session(const std::shared_ptr<WsSession>& s);
  void drop_session(const WsSession* s);
  http::response<http::string_body> respond(const http::request<http::string_body>& req) const;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Server::Impl& impl) : ws_(std::move(socket)), impl_(impl) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->impl_.add_session(self);
      self->push_state(
          std::make_shared<const std::string>(to_json(self->impl_.svc.latest_state()).dump()));
      self->read();
    });
  }

  void push_state(std::shared_ptr<const std::string> text) {
    pending_state_ = std::move(text);
    flush();
  }

  void close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->acks_.push_back(
          std::make_shared<const std::string>(self->impl_.svc.handle_command(std::string_view(text))));
      self->flush();
      self->read();
    });
  }

  void flush() {
    if (writing_ || !open_) return;
    std::shared_ptr<const std::string> msg;
    if (!acks_.empty()) {
      msg = std::move(acks_.front());
      acks_.pop_front();
    } else if (pending_state_) {
      msg = std::move(pending_state_);
      pending_state_.reset();
    } else {
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*msg),
                    [self = shared_from_this(), msg](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) {
                        self->finish();
                        return;
                      }
                      self->flush();
                    });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    open_ = false;
    impl_.drop_session(this);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& impl_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> acks_;
  std::shared_ptr<const std::string> pending_state_;
  bool writing_ = false;
  bool open_ = false;
  bool finished_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Server::Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->on_read(ec);
                     });
  }

 private:
  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), impl_)->run(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>(impl_.respond(req_));
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (res->need_eof()) {
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                          return;
                        }
                        self->read();
                      });
  }

  beast::tcp_stream stream_;
  Server::Impl& impl_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

http::response<http::string_body> Server::Impl::respond(
    const http::request<http::string_body>& req) const {
  http::response<http::string_body> res;
  res.version(req.version());
  res.keep_alive(req.keep_alive());
  res.set(http::field::server, "armstack");
  res.set(http::field::access_control_allow_origin, "*");

  const auto reply = [&](http::status status, std::string body, std::string type) {
    res.result(status);
    res.set(http::field::content_type, type);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  const auto error = [&](http::status status, const std::string& message) {
    return reply(status, nlohmann::json{{"error", message}}.dump(), "application/json");
  };

  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return error(http::status::method_not_allowed, "only GET is supported");
  }
  std::string target(req.target());
  if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);

  if (target == "/state") {
    return reply(http::status::ok, to_json(svc.latest_state()).dump(), "application/json");
  }
  if (target == "/description") {
    return reply(http::status::ok, to_json(svc.description()).dump(), "application/json");
  }
  if (target == "/ui" || target.rfind("/ui/", 0) == 0) {
    if (opts.ui_dir.empty()) return error(http::status::not_found, "no ui directory configured");
    std::string rel = target.size() > 4 ? target.substr(4) : std::string();
    if (rel.empty() || rel.back() == '/') rel += "index.html";
    const std::filesystem::path path = std::filesystem::path(rel).lexically_normal();
    if (path.is_absolute() || (!path.empty() && *path.begin() == "..")) {
      return error(http::status::bad_request, "invalid path");
    }
    const auto full = std::filesystem::path(opts.ui_dir) / path;
    std::ifstream in(full, std::ios::binary);
    if (!in || std::filesystem::is_directory(full)) {
      return error(http::status::not_found, "not found: " + target);
    }
    std::ostringstream body;
    body << in.rdbuf();
    return reply(http::status::ok, body.str(), mime_type(full));
  }
  if (target == "/") {
    return reply(http::status::ok,
                 nlohmann::json{{"endpoints", {"/ws", "/state", "/description", "/ui/"}}}.dump(),
                 "application/json");
  }
  return error(http::status::not_found, "not found: " + target);
}

void Server::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec != net::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
      if (!acceptor.is_open()) return;
    } else {
      std::make_shared<HttpSession>(std::move(socket), *this)->read();
    }
    accept();
  });
}

void Server::Impl::add_session(const std::shared_ptr<WsSession>& s) {
  sessions.push_back(s);
  clients.store(sessions.size());
}

void Server::Impl::drop_session(const WsSession* s) {
  std::erase_if(sessions, [s](const std::weak_ptr<WsSession>& w) {
    const auto p = w.lock();
    return !p || p.get() == s;
  });
  clients.store(sessions.size());
}

void Server::Impl::broadcast(const std::shared_ptr<const std::string>& text) {
  for (const auto& w : sessions) {
    if (auto s = w.lock()) s->push_state(text);
  }
}

Server::Server(TeleopService& svc, ServerOptions opts)
    : impl_(std::make_unique<Impl>(svc, std::move(opts))) {}

Server::~Server() { stop(); }

void Server::start() {
  auto& im = *impl_;
  const tcp::endpoint ep(net::ip::make_address(im.opts.bind.host), im.opts.bind.port);
  im.acceptor.open(ep.protocol());
  im.acceptor.set_option(net::socket_base::reuse_address(true));
  im.acceptor.bind(ep);
  im.acceptor.listen(net::socket_base::max_listen_connections);
  im.bound_port = im.acceptor.local_endpoint().port();
  im.accept();

  im.sub = im.svc.subscribe([&im](const RobotState& s) {
    auto text = std::make_shared<const std::string>(to_json(s).dump());
    net::post(im.ioc, [&im, text] { im.broadcast(text); });
  });
  im.thread = std::thread([&im] { im.ioc.run(); });
  spdlog::info("listening on {}:{}", im.opts.bind.host, im.bound_port);
}

void Server::stop() {
  if (!impl_) return;
  auto& im = *impl_;
  im.sub = {};
  if (!im.thread.joinable()) return;
  net::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
    for (const auto& w : im.sessions) {
      if (auto s = w.lock()) s->close();
    }
  });
  im.ioc.stop();
  im.thread.join();
}

std::uint16_t Server::port() const { return impl_->bound_port; }

std::size_t Server::client_count() const { return impl_->clients.load(); }

}  // namespace armstack
