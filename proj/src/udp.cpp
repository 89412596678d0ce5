#include "mdrnn/udp.hpp"

#include <array>

#include <boost/asio.hpp>
#include <spdlog/spdlog.h>

#include "mdrnn/errors.hpp"
#include "mdrnn/event_log.hpp"

namespace mdrnn {

namespace asio = boost::asio;
using asio::ip::udp;

struct UdpReceiver::Impl {
  asio::io_context io;
  udp::socket socket{io};
  udp::endpoint from;
  std::array<char, 65536> buf{};
  Handler handler;
  std::thread thread;
  std::uint16_t port = 0;

  void receive() {
    socket.async_receive_from(asio::buffer(buf), from, [this](boost::system::error_code ec, std::size_t n) {
      if (ec == asio::error::operation_aborted) return;
      const double arrival = process_time();
      if (!ec) {
        try {
          handler(std::string_view(buf.data(), n), arrival);
        } catch (const std::exception& e) {
          spdlog::warn("dropping UDP packet from {}: {}", from.address().to_string(), e.what());
        }
      } else {
        spdlog::warn("UDP receive error: {}", ec.message());
      }
      receive();
    });
  }
};

UdpReceiver::UdpReceiver(const std::string& address, std::uint16_t port, Handler handler)
    : impl_(std::make_unique<Impl>()) {
  impl_->handler = std::move(handler);
  try {
    const udp::endpoint ep(asio::ip::make_address(address), port);
    impl_->socket.open(ep.protocol());
    impl_->socket.bind(ep);
    impl_->port = impl_->socket.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    throw WireError("cannot listen for OSC on " + address + ":" + std::to_string(port) + ": " +
                    e.code().message());
  }
  impl_->receive();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

UdpReceiver::~UdpReceiver() { stop(); }

std::uint16_t UdpReceiver::port() const { return impl_->port; }

void UdpReceiver::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->io.stop();
  impl_->thread.join();
  boost::system::error_code ignored;
  impl_->socket.close(ignored);
}

struct UdpSender::Impl {
  asio::io_context io;
  udp::socket socket{io};
};

UdpSender::UdpSender(const std::string& host, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
  try {
    udp::resolver resolver(impl_->io);
    const auto ep = *resolver.resolve(udp::v4(), host, std::to_string(port)).begin();
    impl_->socket.open(udp::v4());
    impl_->socket.connect(ep);
  } catch (const boost::system::system_error& e) {
    throw WireError("cannot send OSC to " + host + ":" + std::to_string(port) + ": " +
                    e.code().message());
  }
}

UdpSender::~UdpSender() = default;

bool UdpSender::send(std::string_view packet) {
  boost::system::error_code ec;
  impl_->socket.send(asio::buffer(packet.data(), packet.size()), 0, ec);
  if (ec) {
    const long n = ++errors_;
    if (n == 1 || n % 100 == 0) spdlog::warn("OSC send failed ({} so far): {}", n, ec.message());
    return false;
  }
  ++sent_;
  return true;
}

}  // namespace mdrnn
