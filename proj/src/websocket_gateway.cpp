#include "mdrnn/websocket_gateway.hpp"

#include <atomic>
#include <deque>
#include <future>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "mdrnn/errors.hpp"
#include "mdrnn/event_log.hpp"

namespace mdrnn {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Session;

}  // namespace

struct detail::GatewayImpl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  WebSocketGateway::FrameHandler handler;
  std::set<std::shared_ptr<Session>> sessions;  // io thread only
  std::atomic<std::size_t> client_count{0};
  std::uint16_t port = 0;
  std::thread thread;

  void accept();
  void remove(const std::shared_ptr<Session>& s) {
    if (sessions.erase(s)) client_count = sessions.size();
  }
};

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, detail::GatewayImpl& gw) : ws_(std::move(socket)), gw_(gw) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        spdlog::warn("websocket handshake failed: {}", ec.message());
        return;
      }
      self->gw_.sessions.insert(self);
      self->gw_.client_count = self->gw_.sessions.size();
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> frame) {
    queue_.push_back(std::move(frame));
    if (queue_.size() == 1) write();
  }

  void close() {
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->gw_.remove(self);
        return;
      }
      const double arrival = process_time();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      try {
        self->gw_.handler(text, arrival);
      } catch (const std::exception& e) {
        spdlog::warn("dropping websocket frame: {}", e.what());
      }
      self->read();
    });
  }

  void write() {
    ws_.async_write(asio::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->queue_.clear();
                        self->gw_.remove(self);
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->write();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  detail::GatewayImpl& gw_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
};

}  // namespace

void detail::GatewayImpl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec == asio::error::operation_aborted) return;
    if (!ec) std::make_shared<Session>(std::move(socket), *this)->start();
    accept();
  });
}

WebSocketGateway::WebSocketGateway(const std::string& address, std::uint16_t port,
                                   FrameHandler handler)
    : impl_(std::make_shared<detail::GatewayImpl>()) {
  impl_->handler = std::move(handler);
  try {
    const tcp::endpoint ep(asio::ip::make_address(address), port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
    impl_->port = impl_->acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    throw WireError("cannot listen for websocket clients on " + address + ":" +
                    std::to_string(port) + ": " + e.code().message());
  }
  impl_->accept();
  impl_->thread = std::thread([impl = impl_.get()] { impl->io.run(); });
}

WebSocketGateway::~WebSocketGateway() { stop(); }

std::uint16_t WebSocketGateway::port() const { return impl_->port; }

std::size_t WebSocketGateway::clients() const { return impl_->client_count.load(); }

void WebSocketGateway::broadcast(std::string text) {
  auto frame = std::make_shared<const std::string>(std::move(text));
  asio::post(impl_->io, [impl = impl_.get(), frame] {
    for (const auto& s : impl->sessions) s->send(frame);
  });
}

void WebSocketGateway::stop() {
  if (!impl_->thread.joinable()) return;
  std::promise<void> closed;
  auto done = closed.get_future();
  asio::post(impl_->io, [impl = impl_.get(), &closed] {
    beast::error_code ignored;
    impl->acceptor.close(ignored);
    for (const auto& s : impl->sessions) s->close();
    impl->sessions.clear();
    impl->client_count = 0;
    closed.set_value();
  });
  done.wait_for(std::chrono::seconds(2));
  impl_->io.stop();
  impl_->thread.join();
}

}  // namespace mdrnn
