#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mdrnn/bounded_queue.hpp"
#include "mdrnn/event_log.hpp"
#include "mdrnn/inbound.hpp"
#include "mdrnn/predictor.hpp"

namespace mdrnn {

class UdpReceiver;
class UdpSender;
class WebSocketGateway;

inline constexpr std::string_view kResetAddress = "/reset";

struct WireConfig {
  std::string listen_address = "0.0.0.0";
  std::uint16_t osc_in_port = 5001;
  std::string send_host = "127.0.0.1";
  std::uint16_t osc_out_port = 5002;
  std::string websocket_address = "0.0.0.0";
  std::uint16_t websocket_port = 8765;
  std::filesystem::path log_dir = "logs";
  bool enable_osc = true;
  bool enable_websocket = true;
  std::size_t queue_capacity = 64;

  // Ports must be distinct; 0 (pick any free port) is allowed for listeners.
  void validate() const;
};

struct EngineStats {
  long accepted = 0;
  long rejected = 0;
  long ignored = 0;
  std::size_t dropped = 0;  // evicted from the input queue
  long predictions = 0;
  long send_errors = 0;
  LatencyStats latency;
};

// Live server: OSC/WebSocket in, predictor worker, scheduled OSC/WebSocket out,
// CSV logs. Without weights it only records.
class LiveEngine {
 public:
  LiveEngine(WireConfig wire, int dimension, std::shared_ptr<const Weights<float>> weights,
             PredictorConfig predictor = {});
  ~LiveEngine();
  LiveEngine(const LiveEngine&) = delete;
  LiveEngine& operator=(const LiveEngine&) = delete;

  void start();
  void stop();

  // Transport entry points; also usable directly without sockets.
  InboundStatus handle_osc_packet(std::string_view packet, double arrival);
  void handle_gateway_frame(std::string_view text, double arrival);
  InboundStatus submit(const OscMessage& msg, double arrival);
  void apply_config(const ConfigFrame& cfg);

  // Called on the sender thread for every released prediction.
  void add_prediction_sink(std::function<void(const Prediction&)> sink);

  EngineStats stats() const;
  std::uint16_t osc_port() const;
  std::uint16_t websocket_port() const;
  const SessionLogPaths& log_paths() const { return paths_; }
  bool recording_only() const { return !weights_; }

 private:
  void worker_loop();
  void sender_loop();

  WireConfig wire_;
  int dimension_;
  std::shared_ptr<const Weights<float>> weights_;
  PredictorConfig predictor_cfg_;
  SessionLogPaths paths_;
  std::unique_ptr<CsvEventLog> interface_log_;
  std::unique_ptr<CsvEventLog> prediction_log_;

  BoundedQueue<ControlEvent> input_;
  BoundedQueue<Prediction> output_;

  mutable std::mutex control_mu_;
  std::optional<InteractionMode> pending_mode_;
  std::optional<SamplingConfig> pending_sampling_;
  SamplingConfig sampling_;
  bool pending_reset_ = false;
  LatencyStats latency_;
  std::vector<std::function<void(const Prediction&)>> sinks_;

  std::atomic<long> accepted_{0}, rejected_{0}, ignored_{0}, predictions_{0};
  std::atomic<bool> running_{false};
  std::thread worker_, sender_;
  std::unique_ptr<UdpReceiver> osc_in_;
  std::unique_ptr<UdpSender> osc_out_;
  std::unique_ptr<WebSocketGateway> gateway_;
};

}  // namespace mdrnn
