#include "mdrnn/predictor.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <random>

#include "mdrnn/dataset.hpp"
#include "mdrnn/errors.hpp"

namespace mdrnn {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Rng seeded_rng(const SamplingConfig& s) {
  return Rng(s.rng_seed ? *s.rng_seed : std::random_device{}());
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

std::string_view mode_name(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::NoPredictions: return "none";
    case InteractionMode::Filter: return "filter";
    case InteractionMode::CallAndResponse: return "call-and-response";
    case InteractionMode::Battle: return "battle";
  }
  return "unknown";
}

std::optional<InteractionMode> parse_mode(std::string_view text) {
  const std::string s = lower(text);
  if (s == "none" || s == "no-predictions" || s == "nopredictions" || s == "no_predictions") {
    return InteractionMode::NoPredictions;
  }
  if (s == "filter") return InteractionMode::Filter;
  if (s == "call-and-response" || s == "callandresponse" || s == "call_and_response" ||
      s == "call-response" || s == "callresponse") {
    return InteractionMode::CallAndResponse;
  }
  if (s == "battle") return InteractionMode::Battle;
  return std::nullopt;
}

std::string mode_list() {
  std::string out;
  for (auto m : kAllModes) {
    if (!out.empty()) out += ", ";
    out += mode_name(m);
  }
  return out;
}

void PredictorConfig::validate() const {
  if (!(response_timeout > 0.0) || !std::isfinite(response_timeout)) {
    throw std::invalid_argument("response timeout must be a positive number of seconds");
  }
  if (!(max_lag > 0.0)) throw std::invalid_argument("max lag must be positive");
  if (!(sampling.pi_temperature >= 0.0) || !(sampling.sigma_temperature >= 0.0) ||
      !std::isfinite(sampling.pi_temperature) || !std::isfinite(sampling.sigma_temperature)) {
    throw std::invalid_argument("sampling temperatures must be finite and >= 0");
  }
}

void LatencyStats::add(double ms) {
  ++count;
  const double delta = ms - mean_ms;
  mean_ms += delta / static_cast<double>(count);
  m2 += delta * (ms - mean_ms);
  max_ms = std::max(max_ms, ms);
}

double LatencyStats::sd_ms() const {
  return count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1)) : 0.0;
}

Predictor::Predictor(std::shared_ptr<const Weights<float>> weights, PredictorConfig cfg,
                     double session_start)
    : weights_(std::move(weights)),
      cfg_(std::move(cfg)),
      rng_(seeded_rng(cfg_.sampling)),
      session_start_(session_start),
      last_emit_time_(session_start) {
  if (!weights_) throw std::invalid_argument("predictor needs weights");
  cfg_.validate();
  state_ = RecurrentState<float>::zeros(weights_->config);
  generator_active_ = cfg_.mode == InteractionMode::Battle;
}

void Predictor::request_mode(InteractionMode mode) { requested_mode_ = mode; }

void Predictor::request_sampling(const SamplingConfig& sampling) {
  PredictorConfig probe = cfg_;
  probe.sampling = sampling;
  probe.validate();
  requested_sampling_ = sampling;
}

void Predictor::reset_state() {
  state_.reset();
  next_output_.reset();
  pending_.reset();
}

void Predictor::apply_requests() {
  if (requested_sampling_) {
    if (requested_sampling_->rng_seed) rng_.seed(*requested_sampling_->rng_seed);
    cfg_.sampling = *requested_sampling_;
    requested_sampling_.reset();
  }
  if (requested_mode_) {
    if (*requested_mode_ != cfg_.mode) {
      halt_generator();
      cfg_.mode = *requested_mode_;
      generator_active_ = cfg_.mode == InteractionMode::Battle;
    }
    requested_mode_.reset();
  }
}

void Predictor::halt_generator() {
  generator_active_ = false;
  pending_.reset();
}

SampleVector Predictor::infer_and_sample(const SampleVector* input) {
  if (input) {
    next_output_ = forward_step(*input, state_, *weights_);
  } else if (!next_output_) {
    // Nothing has been played yet: start from an all-zero input.
    SampleVector start{0.0, std::vector<double>(dimension() - 1, 0.0)};
    next_output_ = forward_step(start, state_, *weights_);
  }
  return sample(*next_output_, cfg_.sampling, rng_);
}

void Predictor::schedule_next(double base, const SampleVector* feed) {
  Stopwatch sw;
  const SampleVector s = infer_and_sample(feed);
  latency_.add(sw.ms());
  base = std::max(base, last_emit_time_);
  pending_ = Prediction{base + s.dt, s.dt, s.values};
}

std::optional<Prediction> Predictor::on_user_event(const ControlEvent& event) {
  apply_requests();
  if (static_cast<int>(event.values.size()) != dimension() - 1) {
    throw ShapeError("interface event has " + std::to_string(event.values.size()) +
                     " values, model expects " + std::to_string(dimension() - 1));
  }
  SampleVector x;
  x.values.reserve(event.values.size());
  for (double v : event.values) {
    if (!std::isfinite(v)) throw NumericError("interface event contains a non-finite value");
    x.values.push_back(std::clamp(v, 0.0, 1.0));
  }
  const double prev = last_user_time_.value_or(session_start_);
  x.dt = std::clamp(event.time - prev, kDtMin, kDtCap);
  last_user_time_ = std::max(event.time, prev);

  switch (cfg_.mode) {
    case InteractionMode::NoPredictions:
      next_output_ = forward_step(x, state_, *weights_);
      return std::nullopt;
    case InteractionMode::Filter: {
      Stopwatch sw;
      const SampleVector s = infer_and_sample(&x);
      latency_.add(sw.ms());
      last_emit_time_ = std::max(event.time, last_emit_time_);
      return Prediction{last_emit_time_, s.dt, s.values};
    }
    case InteractionMode::CallAndResponse:
      halt_generator();
      next_output_ = forward_step(x, state_, *weights_);
      return std::nullopt;
    case InteractionMode::Battle:
      return std::nullopt;
  }
  return std::nullopt;
}

void Predictor::check_timeout(double now) {
  apply_requests();
  if (cfg_.mode != InteractionMode::CallAndResponse || generator_active_) return;
  const double anchor = last_user_time_.value_or(session_start_);
  if (now - anchor > cfg_.response_timeout) {
    generator_active_ = true;
    schedule_next(now);
  }
}

std::vector<Prediction> Predictor::advance(double now) {
  check_timeout(now);
  std::vector<Prediction> out;
  if (!generator_active_) return out;
  if (!pending_) schedule_next(now);
  while (pending_ && pending_->emit_time <= now) {
    Prediction p = std::move(*pending_);
    pending_.reset();
    last_emit_time_ = p.emit_time;
    const SampleVector fed{p.dt, p.values};
    out.push_back(std::move(p));
    const double base = now - last_emit_time_ > cfg_.max_lag ? now : last_emit_time_;
    schedule_next(base, &fed);
  }
  return out;
}

std::optional<double> Predictor::next_deadline() const {
  if (pending_) return pending_->emit_time;
  if (generator_active_) return last_emit_time_;
  if (cfg_.mode == InteractionMode::CallAndResponse) {
    const double anchor = last_user_time_.value_or(session_start_);
    return std::nextafter(anchor + cfg_.response_timeout, INFINITY);
  }
  return std::nullopt;
}

}  // namespace mdrnn
