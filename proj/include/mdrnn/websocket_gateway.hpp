#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

namespace mdrnn {

namespace detail {
struct GatewayImpl;
}

// WebSocket server carrying JSON text frames. Inbound frames go to the handler
// (on the gateway's thread, stamped with process_time()); broadcast() fans a frame
// out to every connected client.
class WebSocketGateway {
 public:
  using FrameHandler = std::function<void(std::string_view text, double arrival)>;

  // Port 0 picks a free port. Throws WireError if the port cannot be bound.
  WebSocketGateway(const std::string& address, std::uint16_t port, FrameHandler handler);
  ~WebSocketGateway();
  WebSocketGateway(const WebSocketGateway&) = delete;
  WebSocketGateway& operator=(const WebSocketGateway&) = delete;

  std::uint16_t port() const;
  std::size_t clients() const;
  // Thread-safe.
  void broadcast(std::string text);
  void stop();

 private:
  std::shared_ptr<detail::GatewayImpl> impl_;
};

}  // namespace mdrnn
