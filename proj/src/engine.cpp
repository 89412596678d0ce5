#include "mdrnn/engine.hpp"

#include <set>

#include <spdlog/spdlog.h>

#include "mdrnn/errors.hpp"
#include "mdrnn/udp.hpp"
#include "mdrnn/websocket_gateway.hpp"

namespace mdrnn {
namespace {

BoundedQueue<ControlEvent>::Clock::time_point to_steady(double process_seconds) {
  const double wait = std::max(0.0, process_seconds - process_time());
  return BoundedQueue<ControlEvent>::Clock::now() +
         std::chrono::duration_cast<std::chrono::steady_clock::duration>(
             std::chrono::duration<double>(wait));
}

}  // namespace

void WireConfig::validate() const {
  std::set<int> used;
  auto claim = [&](bool enabled, std::uint16_t port, const char* what) {
    if (!enabled || port == 0) return;
    if (!used.insert(port).second) {
      throw std::invalid_argument(std::string(what) + " port " + std::to_string(port) +
                                  " is already used by another endpoint");
    }
  };
  if (enable_osc && osc_out_port == 0) throw std::invalid_argument("OSC send port must be > 0");
  claim(enable_osc, osc_in_port, "OSC listen");
  claim(enable_osc && (send_host == "127.0.0.1" || send_host == "localhost"), osc_out_port, "OSC send");
  claim(enable_websocket, websocket_port, "websocket");
  if (queue_capacity == 0) throw std::invalid_argument("queue capacity must be >= 1");
}

LiveEngine::LiveEngine(WireConfig wire, int dimension, std::shared_ptr<const Weights<float>> weights,
                       PredictorConfig predictor)
    : wire_(std::move(wire)),
      dimension_(dimension),
      weights_(std::move(weights)),
      predictor_cfg_(std::move(predictor)),
      input_(wire_.queue_capacity),
      output_(wire_.queue_capacity) {
  wire_.validate();
  predictor_cfg_.validate();
  if (dimension_ < 2) throw std::invalid_argument("dimension must be >= 2");
  if (weights_ && weights_->config.dimension != dimension_) {
    throw ShapeError("model dimension " + std::to_string(weights_->config.dimension) +
                     " does not match the requested dimension " + std::to_string(dimension_));
  }
  sampling_ = predictor_cfg_.sampling;
}

LiveEngine::~LiveEngine() { stop(); }

void LiveEngine::start() {
  if (running_) return;
  paths_ = session_log_paths(wire_.log_dir, std::chrono::system_clock::now());
  interface_log_ = std::make_unique<CsvEventLog>(paths_.interface, dimension_ - 1);
  if (weights_) prediction_log_ = std::make_unique<CsvEventLog>(paths_.predictions, dimension_ - 1);

  if (wire_.enable_osc) {
    osc_in_ = std::make_unique<UdpReceiver>(
        wire_.listen_address, wire_.osc_in_port,
        [this](std::string_view packet, double arrival) { handle_osc_packet(packet, arrival); });
    if (weights_) osc_out_ = std::make_unique<UdpSender>(wire_.send_host, wire_.osc_out_port);
  }
  if (wire_.enable_websocket) {
    gateway_ = std::make_unique<WebSocketGateway>(
        wire_.websocket_address, wire_.websocket_port,
        [this](std::string_view text, double arrival) { handle_gateway_frame(text, arrival); });
  }
  running_ = true;
  worker_ = std::thread([this] { worker_loop(); });
  sender_ = std::thread([this] { sender_loop(); });
  spdlog::info("session log {}", paths_.interface.string());
}

void LiveEngine::stop() {
  if (!running_.exchange(false)) return;
  if (osc_in_) osc_in_->stop();
  if (gateway_) gateway_->stop();
  input_.close();
  worker_.join();
  output_.close();
  sender_.join();
  if (interface_log_) interface_log_->close();
  if (prediction_log_) prediction_log_->close();
}

InboundStatus LiveEngine::handle_osc_packet(std::string_view packet, double arrival) {
  std::optional<OscMessage> msg;
  try {
    msg = decode_osc(packet);
  } catch (const WireError& e) {
    ++rejected_;
    spdlog::warn("dropping malformed OSC packet: {}", e.what());
    return InboundStatus::BadType;
  }
  if (!msg) {
    ++ignored_;
    return InboundStatus::IgnoredAddress;
  }
  return submit(*msg, arrival);
}

void LiveEngine::handle_gateway_frame(std::string_view text, double arrival) {
  GatewayFrame frame;
  try {
    frame = parse_gateway_frame(text);
  } catch (const WireError& e) {
    ++rejected_;
    spdlog::warn("dropping websocket frame: {}", e.what());
    return;
  }
  if (const auto* cfg = std::get_if<ConfigFrame>(&frame)) apply_config(*cfg);
  else submit(std::get<OscMessage>(frame), arrival);
}

InboundStatus LiveEngine::submit(const OscMessage& msg, double arrival) {
  if (msg.address == kResetAddress) {
    {
      std::lock_guard lock(control_mu_);
      pending_reset_ = true;
    }
    input_.wake();
    return InboundStatus::Accepted;
  }
  InboundResult r = receive_interface(msg, dimension_, arrival);
  switch (r.status) {
    case InboundStatus::Accepted:
      ++accepted_;
      if (interface_log_) {
        try {
          interface_log_->append(r.event.time, r.event.values);
        } catch (const std::exception& e) {
          spdlog::error("event logging failed: {}", e.what());
        }
      }
      if (weights_) input_.push(std::move(r.event));
      break;
    case InboundStatus::IgnoredAddress:
      ++ignored_;
      spdlog::debug("{}", r.detail);
      break;
    case InboundStatus::BadArity:
    case InboundStatus::BadType:
      ++rejected_;
      spdlog::warn("{}", r.detail);
      break;
  }
  return r.status;
}

void LiveEngine::apply_config(const ConfigFrame& cfg) {
  {
    std::lock_guard lock(control_mu_);
    if (cfg.mode) pending_mode_ = cfg.mode;
    if (cfg.pi_temperature || cfg.sigma_temperature) {
      if (cfg.pi_temperature) sampling_.pi_temperature = *cfg.pi_temperature;
      if (cfg.sigma_temperature) sampling_.sigma_temperature = *cfg.sigma_temperature;
      pending_sampling_ = sampling_;
    }
  }
  input_.wake();
}

void LiveEngine::add_prediction_sink(std::function<void(const Prediction&)> sink) {
  std::lock_guard lock(control_mu_);
  sinks_.push_back(std::move(sink));
}

void LiveEngine::worker_loop() {
  std::optional<Predictor> pred;
  if (weights_) pred.emplace(weights_, predictor_cfg_, process_time());
  while (true) {
    double deadline = process_time() + 0.25;
    if (pred) {
      if (const auto d = pred->next_deadline()) deadline = std::min(deadline, *d);
    }
    auto ev = input_.pop_until(to_steady(deadline));
    if (!ev && input_.closed()) break;

    if (pred) {
      {
        std::lock_guard lock(control_mu_);
        if (pending_mode_) pred->request_mode(*std::exchange(pending_mode_, std::nullopt));
        if (pending_sampling_) pred->request_sampling(*std::exchange(pending_sampling_, std::nullopt));
        if (std::exchange(pending_reset_, false)) pred->reset_state();
      }
      if (ev) {
        try {
          if (auto p = pred->on_user_event(*ev)) output_.push(std::move(*p));
        } catch (const std::exception& e) {
          spdlog::warn("dropping interface event: {}", e.what());
        }
      }
      for (auto& p : pred->advance(process_time())) output_.push(std::move(p));
      std::lock_guard lock(control_mu_);
      latency_ = pred->latency();
    }
    try {
      if (interface_log_) interface_log_->flush_if_due();
      if (prediction_log_) prediction_log_->flush_if_due();
    } catch (const std::exception& e) {
      spdlog::error("log flush failed: {}", e.what());
    }
  }
}

void LiveEngine::sender_loop() {
  while (auto p = output_.pop()) {
    if (osc_out_) osc_out_->send(encode_osc(float_message(std::string(kPredictionAddress), p->values)));
    if (gateway_) gateway_->broadcast(prediction_frame(p->values));
    if (prediction_log_) {
      try {
        prediction_log_->append(process_time(), p->values);
      } catch (const std::exception& e) {
        spdlog::error("prediction logging failed: {}", e.what());
      }
    }
    ++predictions_;
    std::vector<std::function<void(const Prediction&)>> sinks;
    {
      std::lock_guard lock(control_mu_);
      sinks = sinks_;
    }
    for (const auto& s : sinks) s(*p);
  }
}

EngineStats LiveEngine::stats() const {
  EngineStats s;
  s.accepted = accepted_;
  s.rejected = rejected_;
  s.ignored = ignored_;
  s.dropped = input_.dropped();
  s.predictions = predictions_;
  s.send_errors = osc_out_ ? osc_out_->errors() : 0;
  std::lock_guard lock(control_mu_);
  s.latency = latency_;
  return s;
}

std::uint16_t LiveEngine::osc_port() const { return osc_in_ ? osc_in_->port() : 0; }

std::uint16_t LiveEngine::websocket_port() const { return gateway_ ? gateway_->port() : 0; }

}  // namespace mdrnn
