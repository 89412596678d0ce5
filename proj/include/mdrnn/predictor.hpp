#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdrnn/mdn.hpp"
#include "mdrnn/rnn.hpp"

namespace mdrnn {

enum class InteractionMode { NoPredictions, Filter, CallAndResponse, Battle };

inline constexpr std::array<InteractionMode, 4> kAllModes = {
    InteractionMode::NoPredictions, InteractionMode::Filter, InteractionMode::CallAndResponse,
    InteractionMode::Battle};

std::string_view mode_name(InteractionMode mode);
// Accepts the canonical names plus a few spellings ("none", "call_and_response", ...).
std::optional<InteractionMode> parse_mode(std::string_view text);
// "none, filter, call-and-response, battle"
std::string mode_list();

// One interface message: N-1 values in [0,1], stamped with its arrival time in
// seconds since process start.
struct ControlEvent {
  double time = 0.0;
  std::vector<double> values;

  bool operator==(const ControlEvent&) const = default;
};

struct Prediction {
  double emit_time = 0.0;  // when it should go on the wire
  double dt = 0.0;         // sampled interval; never sent
  std::vector<double> values;
};

struct PredictorConfig {
  InteractionMode mode = InteractionMode::CallAndResponse;
  SamplingConfig sampling;
  double response_timeout = 2.0;
  // A self-generated chain that falls further than this behind the clock is
  // re-anchored to the current time instead of bursting to catch up.
  double max_lag = 1.0;

  void validate() const;
};

struct LatencyStats {
  long count = 0;
  double mean_ms = 0.0;
  double m2 = 0.0;
  double max_ms = 0.0;

  void add(double ms);
  double sd_ms() const;
};

// Single-threaded interaction engine. Time is always passed in by the caller, so
// the same code runs against a wall clock or a simulated one.
class Predictor {
 public:
  Predictor(std::shared_ptr<const Weights<float>> weights, PredictorConfig cfg,
            double session_start = 0.0);

  // Conditions the model on a user event (except in Battle mode). In Filter mode
  // the returned prediction should be emitted immediately.
  std::optional<Prediction> on_user_event(const ControlEvent& event);

  // In CallAndResponse, starts the generator once the user has been silent for
  // longer than the response timeout.
  void check_timeout(double now);

  // Returns every generated prediction due at or before `now`, feeding each back
  // into the model as it is released, and keeps exactly one prediction pending
  // while the generator runs.
  std::vector<Prediction> advance(double now);

  // Earliest time at which advance() has work to do.
  std::optional<double> next_deadline() const;

  // Mode and sampling changes take effect at the next event/tick boundary.
  void request_mode(InteractionMode mode);
  void request_sampling(const SamplingConfig& sampling);
  void reset_state();

  InteractionMode mode() const { return cfg_.mode; }
  const PredictorConfig& config() const { return cfg_; }
  bool generator_active() const { return generator_active_; }
  const std::optional<Prediction>& pending() const { return pending_; }
  std::optional<double> last_user_event_time() const { return last_user_time_; }
  const RecurrentState<float>& state() const { return state_; }
  const LatencyStats& latency() const { return latency_; }
  int dimension() const { return weights_->config.dimension; }

 private:
  void apply_requests();
  void halt_generator();
  SampleVector infer_and_sample(const SampleVector* input);
  // Feeds `feed` (if any) back into the model, then samples the next pending
  // prediction at base + dt.
  void schedule_next(double base, const SampleVector* feed = nullptr);

  std::shared_ptr<const Weights<float>> weights_;
  PredictorConfig cfg_;
  std::optional<InteractionMode> requested_mode_;
  std::optional<SamplingConfig> requested_sampling_;
  RecurrentState<float> state_;
  std::optional<MixtureParams> next_output_;
  Rng rng_;
  double session_start_;
  std::optional<double> last_user_time_;
  double last_emit_time_;
  bool generator_active_ = false;
  std::optional<Prediction> pending_;
  LatencyStats latency_;
};

}  // namespace mdrnn
