#include "armstack/client.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "armstack/transport.hpp"

namespace armstack {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {
constexpr std::size_t kMaxQueuedStates = 1024;

std::string where(const Endpoint& ep) { return ep.host + ":" + std::to_string(ep.port); }
}  // namespace

struct WsClient::Impl {
  net::io_context ioc;
  websocket::stream<beast::tcp_stream> ws{ioc};
  beast::flat_buffer buffer;
  std::thread thread;
  std::chrono::milliseconds timeout;

  // io thread only
  std::deque<std::shared_ptr<const std::string>> outbox;
  bool writing = false;

  mutable std::mutex mu;
  std::condition_variable cv;
  std::deque<json> acks;
  std::deque<json> states;
  std::optional<json> latest;
  bool open = true;
  std::string error;

  std::mutex send_mu;  // one outstanding command at a time keeps acks in order

  void read() {
    ws.async_read(buffer, [this](beast::error_code ec, std::size_t) {
      if (ec) {
        fail(ec.message());
        return;
      }
      json msg = json::parse(beast::buffers_to_string(buffer.data()), nullptr, false);
      buffer.consume(buffer.size());
      {
        std::lock_guard lock(mu);
        if (msg.is_object() && msg.value("kind", "") == "ack") {
          acks.push_back(std::move(msg));
        } else if (msg.is_object() && msg.value("kind", "") == "state") {
          latest = msg;
          states.push_back(std::move(msg));
          if (states.size() > kMaxQueuedStates) states.pop_front();
        }
      }
      cv.notify_all();
      read();
    });
  }

  void write() {
    if (writing || outbox.empty()) return;
    auto msg = outbox.front();
    outbox.pop_front();
    writing = true;
    ws.text(true);
    ws.async_write(net::buffer(*msg), [this, msg](beast::error_code ec, std::size_t) {
      writing = false;
      if (ec) {
        fail(ec.message());
        return;
      }
      write();
    });
  }

  void fail(const std::string& why) {
    {
      std::lock_guard lock(mu);
      if (open) error = why;
      open = false;
    }
    cv.notify_all();
  }
};

WsClient::WsClient(const Endpoint& ep, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
  auto& im = *impl_;
  im.timeout = timeout;
  try {
    tcp::resolver resolver(im.ioc);
    const auto results = resolver.resolve(ep.host, std::to_string(ep.port));
    auto& layer = beast::get_lowest_layer(im.ws);
    layer.expires_after(timeout);
    layer.connect(results);
    layer.expires_never();
    im.ws.handshake(where(ep), "/ws");
  } catch (const boost::system::system_error& e) {
    throw TransportError("cannot connect to " + where(ep) + ": " + e.code().message());
  }
  im.read();
  im.thread = std::thread([&im] { im.ioc.run(); });
}

WsClient::~WsClient() { close(); }

void WsClient::close() {
  auto& im = *impl_;
  if (!im.thread.joinable()) return;
  net::post(im.ioc, [&im] {
    beast::error_code ec;
    beast::get_lowest_layer(im.ws).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(im.ws).socket().close(ec);
  });
  im.thread.join();
  im.fail("closed");
}

bool WsClient::connected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->open;
}

json WsClient::send(const json& command) {
  auto& im = *impl_;
  std::lock_guard send_lock(im.send_mu);
  {
    std::lock_guard lock(im.mu);
    if (!im.open) throw TransportError("connection closed: " + im.error);
  }
  auto text = std::make_shared<const std::string>(command.dump());
  net::post(im.ioc, [&im, text] {
    im.outbox.push_back(text);
    im.write();
  });
  std::unique_lock lock(im.mu);
  if (!im.cv.wait_for(lock, im.timeout, [&] { return !im.acks.empty() || !im.open; })) {
    throw TransportError("no ack within timeout");
  }
  if (im.acks.empty()) throw TransportError("connection closed: " + im.error);
  json ack = std::move(im.acks.front());
  im.acks.pop_front();
  return ack;
}

std::optional<json> WsClient::wait_state(const std::function<bool(const json&)>& pred,
                                         std::chrono::milliseconds timeout,
                                         const std::function<void(const json&)>& observe) {
  auto& im = *impl_;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(im.mu);
  for (;;) {
    while (!im.states.empty()) {
      json s = std::move(im.states.front());
      im.states.pop_front();
      if (observe) observe(s);
      if (pred(s)) {
        std::optional<json> hit;
        hit.emplace(std::move(s));
        return hit;
      }
    }
    if (!im.open) return std::nullopt;
    if (im.cv.wait_until(lock, deadline) == std::cv_status::timeout && im.states.empty()) {
      return std::nullopt;
    }
  }
}

std::optional<json> WsClient::latest_state() const {
  std::lock_guard lock(impl_->mu);
  return impl_->latest;
}

HttpResponse http_get(const Endpoint& ep, const std::string& target,
                      std::chrono::milliseconds timeout) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, where(ep));
  req.set(http::field::connection, "close");
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  beast::error_code result = net::error::timed_out;

  const auto failed = [&](beast::error_code ec) {
    if (!ec) return false;
    result = ec;
    return true;
  };
  beast::error_code ec;
  const auto endpoints = resolver.resolve(ep.host, std::to_string(ep.port), ec);
  if (ec) throw TransportError("cannot resolve " + where(ep) + ": " + ec.message());
  stream.expires_after(timeout);
  stream.async_connect(endpoints, [&](beast::error_code ec, const tcp::endpoint&) {
    if (failed(ec)) return;
    http::async_write(stream, req, [&](beast::error_code ec, std::size_t) {
      if (failed(ec)) return;
      http::async_read(stream, buffer, res, [&](beast::error_code ec, std::size_t) {
        result = ec;
      });
    });
  });
  ioc.run_for(timeout + std::chrono::milliseconds(100));
  if (result) {
    throw TransportError("GET " + target + " from " + where(ep) + " failed: " + result.message());
  }
  return {static_cast<int>(res.result_int()), std::move(res.body())};
}

}  // namespace armstack
