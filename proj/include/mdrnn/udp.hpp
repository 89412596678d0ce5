#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

namespace mdrnn {

// Receives datagrams on its own thread. The handler gets the payload and the
// arrival time from process_time().
class UdpReceiver {
 public:
  using Handler = std::function<void(std::string_view packet, double arrival)>;

  // Port 0 picks a free port. Throws WireError if the port cannot be bound.
  UdpReceiver(const std::string& address, std::uint16_t port, Handler handler);
  ~UdpReceiver();
  UdpReceiver(const UdpReceiver&) = delete;
  UdpReceiver& operator=(const UdpReceiver&) = delete;

  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Fire-and-forget sender on a connected socket. Failures are counted and logged,
// never thrown.
class UdpSender {
 public:
  UdpSender(const std::string& host, std::uint16_t port);
  ~UdpSender();
  UdpSender(const UdpSender&) = delete;
  UdpSender& operator=(const UdpSender&) = delete;

  bool send(std::string_view packet);
  long sent() const { return sent_.load(); }
  long errors() const { return errors_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<long> sent_{0};
  std::atomic<long> errors_{0};
};

}  // namespace mdrnn
