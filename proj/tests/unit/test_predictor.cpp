#include <algorithm>
#include <atomic>
#include <thread>

#include "doctest.h"
#include "mdrnn/bounded_queue.hpp"
#include "mdrnn/errors.hpp"
#include "mdrnn/predictor.hpp"

using namespace mdrnn;

namespace {

const ModelConfig kCfg{3, 2, 8, 2, 10};

std::shared_ptr<const Weights<float>> random_weights(std::uint64_t seed = 1) {
  Rng rng(seed);
  return std::make_shared<Weights<float>>(init_weights<float>(kCfg, rng));
}

PredictorConfig config(InteractionMode mode, std::uint64_t seed = 5) {
  PredictorConfig c;
  c.mode = mode;
  c.sampling.rng_seed = seed;
  return c;
}

ControlEvent event(double t, double a = 0.4, double b = 0.6) { return {t, {a, b}}; }

bool same_state(const RecurrentState<float>& a, const RecurrentState<float>& b) { return a == b; }

// Random user activity: bursts of events separated by silences of up to 5 s.
std::vector<ControlEvent> random_session(Rng& rng, double length) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ControlEvent> events;
  double t = 0.1;
  while (t < length) {
    const int burst = 1 + static_cast<int>(u(rng) * 20);
    for (int i = 0; i < burst && t < length; ++i) {
      events.push_back(event(t, u(rng), u(rng)));
      t += 0.01 + 0.2 * u(rng);
    }
    t += 5.0 * u(rng);
  }
  return events;
}

// Drives a predictor with a simulated clock ticking every `step` seconds and
// records every emission with the latest user-event time known when it went out.
struct Emission {
  Prediction p;
  std::optional<double> last_user;
};

std::vector<Emission> simulate(Predictor& pred, const std::vector<ControlEvent>& events,
                               double until, double step = 0.005) {
  std::vector<Emission> out;
  std::size_t next = 0;
  for (double now = 0.0; now <= until; now += step) {
    while (next < events.size() && events[next].time <= now) {
      if (auto p = pred.on_user_event(events[next])) out.push_back({*p, pred.last_user_event_time()});
      ++next;
    }
    for (auto& p : pred.advance(now)) out.push_back({p, pred.last_user_event_time()});
  }
  return out;
}

std::vector<Prediction> run_clock(Predictor& pred, double from, double to, double step = 0.01) {
  std::vector<Prediction> out;
  for (double now = from; now <= to; now += step) {
    for (auto& p : pred.advance(now)) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TEST_CASE("mode names round trip") {
  for (auto m : kAllModes) CHECK(parse_mode(mode_name(m)) == m);
  CHECK(parse_mode("Call_And_Response") == InteractionMode::CallAndResponse);
  CHECK(parse_mode("no-predictions") == InteractionMode::NoPredictions);
  CHECK_FALSE(parse_mode("duet"));
  CHECK(mode_list() == "none, filter, call-and-response, battle");
}

TEST_CASE("NoPredictions conditions the state but never emits") {
  Predictor pred(random_weights(), config(InteractionMode::NoPredictions));
  const auto before = pred.state();
  CHECK_FALSE(pred.on_user_event(event(0.5)));
  CHECK_FALSE(same_state(before, pred.state()));
  Rng rng(1);
  CHECK(simulate(pred, random_session(rng, 30.0), 40.0).empty());
  CHECK_FALSE(pred.generator_active());
  CHECK_FALSE(pred.next_deadline());
}

TEST_CASE("Filter emits exactly one immediate prediction per event") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Predictor pred(random_weights(trial + 1), config(InteractionMode::Filter, trial));
    const auto events = random_session(rng, 20.0);
    const auto out = simulate(pred, events, 25.0);
    REQUIRE(out.size() == events.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].p.emit_time == events[i].time);
      CHECK(out[i].p.values.size() == 2);
      for (double v : out[i].p.values) CHECK((v >= 0.0 && v <= 1.0));
    }
    CHECK_FALSE(pred.generator_active());
    CHECK(pred.latency().count == static_cast<long>(events.size()));
  }
}

TEST_CASE("CallAndResponse stays silent within the timeout of a user event") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Predictor pred(random_weights(trial + 1), config(InteractionMode::CallAndResponse, trial));
    const auto events = random_session(rng, 60.0);
    const auto out = simulate(pred, events, 70.0);
    CHECK_FALSE(out.empty());
    for (const auto& e : out) {
      REQUIRE(e.last_user);
      CHECK(e.p.emit_time - *e.last_user > 2.0);
    }
  }
}

TEST_CASE("CallAndResponse timeout examples") {
  Predictor pred(random_weights(), config(InteractionMode::CallAndResponse));
  pred.on_user_event(event(10.0));
  pred.check_timeout(11.0);
  CHECK_FALSE(pred.generator_active());
  pred.check_timeout(12.0);
  CHECK_FALSE(pred.generator_active());
  pred.check_timeout(12.5);
  CHECK(pred.generator_active());
  REQUIRE(pred.pending());
  CHECK(pred.pending()->emit_time > 12.5);

  // A user event halts the generator before the pending prediction goes out.
  const auto state_before = pred.state();
  pred.on_user_event(event(12.6));
  CHECK_FALSE(pred.generator_active());
  CHECK_FALSE(pred.pending());
  CHECK_FALSE(same_state(state_before, pred.state()));
  CHECK(pred.advance(14.0).empty());
  CHECK(*pred.next_deadline() > 14.6);
}

TEST_CASE("CallAndResponse starts after the timeout even with no input at all") {
  Predictor pred(random_weights(), config(InteractionMode::CallAndResponse));
  CHECK(pred.advance(1.9).empty());
  CHECK(pred.advance(2.0).empty());
  const auto out = run_clock(pred, 2.0, 30.0);
  CHECK_FALSE(out.empty());
  for (const auto& p : out) CHECK(p.emit_time > 2.0);
}

TEST_CASE("Battle generates with no input and ignores user events") {
  Predictor pred(random_weights(), config(InteractionMode::Battle));
  CHECK(pred.generator_active());
  pred.check_timeout(100.0);
  CHECK(pred.generator_active());
  const auto out = run_clock(pred, 0.0, 30.0);
  CHECK(out.size() > 2);

  const auto state = pred.state();
  const auto pending = pred.pending();
  CHECK_FALSE(pred.on_user_event(event(30.1)));
  CHECK(same_state(state, pred.state()));
  CHECK(pred.generator_active());
  REQUIRE(pending);
  CHECK(pred.pending()->emit_time == pending->emit_time);
}

TEST_CASE("generator ticks are chained by the sampled dts") {
  Predictor pred(random_weights(), config(InteractionMode::Battle));
  pred.advance(0.0);
  std::vector<Prediction> ticks;
  double now = 0.0;
  while (ticks.size() < 3) {
    now = *pred.next_deadline();
    for (auto& p : pred.advance(now)) ticks.push_back(p);
  }
  CHECK(ticks[0].emit_time == doctest::Approx(ticks[0].dt));
  for (int i = 1; i < 3; ++i) {
    CHECK(ticks[i].emit_time > ticks[i - 1].emit_time);
    CHECK(ticks[i].emit_time == doctest::Approx(ticks[i - 1].emit_time + ticks[i].dt));
  }
}

TEST_CASE("zero-temperature rollout is deterministic") {
  auto run = [](std::uint64_t seed) {
    PredictorConfig c = config(InteractionMode::Battle, seed);
    c.sampling.pi_temperature = 0.0;
    c.sampling.sigma_temperature = 0.0;
    Predictor pred(random_weights(), c);
    return run_clock(pred, 0.0, 50.0);
  };
  const auto a = run(1), b = run(2);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() > 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].emit_time == b[i].emit_time);
    CHECK(a[i].values == b[i].values);
  }
}

TEST_CASE("a large sampled dt is clamped to the ten second bound") {
  auto w = std::make_shared<Weights<float>>(*random_weights());
  const int k = kCfg.mixtures, n = kCfg.dimension;
  for (int c = 0; c < k; ++c) {
    const int row = k + c * n;  // dt mean of component c
    w->head_weight.row(row).setZero();
    w->head_bias[row] = 100.0f;
  }
  PredictorConfig c = config(InteractionMode::Battle);
  c.sampling.sigma_temperature = 0.0;
  Predictor pred(w, c);
  pred.advance(3.0);
  REQUIRE(pred.pending());
  CHECK(pred.pending()->dt == kDtMax);
  CHECK(pred.pending()->emit_time <= 3.0 + 10.0);
}

TEST_CASE("emission times stay monotone across random mode switches") {
  Rng rng(11);
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Predictor pred(random_weights(trial + 3), config(InteractionMode::Battle, trial));
    const auto events = random_session(rng, 60.0);
    std::size_t next = 0;
    double last = -1.0;
    long emitted = 0;
    for (double now = 0.0; now <= 65.0; now += 0.01) {
      if (u(rng) < 0.002) pred.request_mode(kAllModes[pick(rng)]);
      while (next < events.size() && events[next].time <= now) {
        if (auto p = pred.on_user_event(events[next])) {
          CHECK(p->emit_time >= last);
          last = p->emit_time;
          ++emitted;
        }
        ++next;
      }
      for (const auto& p : pred.advance(now)) {
        CHECK(p.emit_time >= last);
        CHECK(p.emit_time <= now);
        last = p.emit_time;
        ++emitted;
      }
    }
    CHECK(emitted > 0);
  }
}

TEST_CASE("mode and sampling changes apply at the next boundary") {
  Predictor pred(random_weights(), config(InteractionMode::Filter));
  pred.on_user_event(event(0.1));
  const auto state = pred.state();
  pred.request_mode(InteractionMode::Battle);
  CHECK(pred.mode() == InteractionMode::Filter);
  CHECK_FALSE(pred.generator_active());
  SamplingConfig s;
  s.pi_temperature = 0.5;
  pred.request_sampling(s);
  CHECK(pred.config().sampling.pi_temperature == 1.0);
  pred.advance(0.2);
  CHECK(pred.mode() == InteractionMode::Battle);
  CHECK(pred.generator_active());
  CHECK(pred.config().sampling.pi_temperature == 0.5);

  SamplingConfig bad;
  bad.sigma_temperature = -1.0;
  CHECK_THROWS(pred.request_sampling(bad));
}

TEST_CASE("mode switches keep the recurrent state; reset clears it") {
  Predictor pred(random_weights(), config(InteractionMode::NoPredictions));
  pred.on_user_event(event(0.1));
  const auto state = pred.state();
  pred.request_mode(InteractionMode::CallAndResponse);
  pred.check_timeout(0.2);
  CHECK(pred.mode() == InteractionMode::CallAndResponse);
  CHECK(same_state(state, pred.state()));
  pred.reset_state();
  CHECK(same_state(RecurrentState<float>::zeros(kCfg), pred.state()));
}

TEST_CASE("user event validation and dt derivation") {
  Predictor pred(random_weights(), config(InteractionMode::Filter));
  CHECK_THROWS_AS(pred.on_user_event({1.0, {0.5}}), ShapeError);
  CHECK_THROWS_AS(pred.on_user_event({1.0, {0.5, NAN}}), NumericError);
  CHECK(pred.on_user_event({1.0, {1.7, -0.2}}));
  CHECK(*pred.last_user_event_time() == 1.0);
  CHECK_THROWS(Predictor(nullptr, config(InteractionMode::Filter)));
  PredictorConfig bad = config(InteractionMode::Filter);
  bad.response_timeout = 0.0;
  CHECK_THROWS(Predictor(random_weights(), bad));
}

TEST_CASE("user event dt feeds the model the clamped interval") {
  // Same events, same seed: the model sees dt = 5 s whether the gap was 60 s or 6 s.
  auto out_for_gap = [](double gap) {
    PredictorConfig c = config(InteractionMode::Filter);
    c.sampling.pi_temperature = 0.0;
    c.sampling.sigma_temperature = 0.0;
    Predictor pred(random_weights(), c);
    pred.on_user_event(event(1.0));
    return pred.on_user_event(event(1.0 + gap))->values;
  };
  CHECK(out_for_gap(60.0) == out_for_gap(6.0));
  CHECK(out_for_gap(0.5) != out_for_gap(6.0));
}

TEST_CASE("a late generator re-anchors instead of bursting") {
  Predictor pred(random_weights(), config(InteractionMode::Battle));
  pred.advance(0.0);
  const auto out = pred.advance(1000.0);
  // Without re-anchoring, ~1000 s of backlog would be released in one call.
  CHECK(out.size() <= 2);
  REQUIRE(pred.pending());
  CHECK(pred.pending()->emit_time > 1000.0);
}

TEST_CASE("bounded queue drops the oldest items") {
  BoundedQueue<int> q(64);
  for (int i = 0; i < 100; ++i) q.push(i);
  CHECK(q.size() == 64);
  CHECK(q.dropped() == 36);
  CHECK(q.try_pop() == 36);
  q.close();
  CHECK_FALSE(q.push(1));
  CHECK(q.try_pop() == 37);
  CHECK_THROWS(BoundedQueue<int>(0));
}

TEST_CASE("bounded queue waits, wakes and closes") {
  using namespace std::chrono_literals;
  BoundedQueue<int> q(4);
  const auto t0 = BoundedQueue<int>::Clock::now();
  CHECK_FALSE(q.pop_until(t0 + 20ms));
  CHECK(BoundedQueue<int>::Clock::now() - t0 >= 20ms);

  std::thread waker([&] {
    std::this_thread::sleep_for(10ms);
    q.wake();
  });
  CHECK_FALSE(q.pop_until(t0 + 10s));
  waker.join();

  std::thread closer([&] {
    std::this_thread::sleep_for(10ms);
    q.close();
  });
  CHECK_FALSE(q.pop());
  closer.join();
}

TEST_CASE("a burst faster than the consumer drains without deadlock") {
  using namespace std::chrono_literals;
  BoundedQueue<ControlEvent> q(64);
  std::atomic<bool> done{false};
  std::atomic<std::size_t> max_size{0};
  std::vector<std::thread> producers;
  for (int p = 0; p < 4; ++p) {
    producers.emplace_back([&, p] {
      for (int i = 0; i < 5000; ++i) {
        q.push(event(p * 10000 + i));
        std::size_t s = q.size(), m = max_size.load();
        while (s > m && !max_size.compare_exchange_weak(m, s)) {
        }
      }
    });
  }
  Predictor pred(random_weights(), config(InteractionMode::Filter));
  long consumed = 0;
  std::thread consumer([&] {
    while (auto e = q.pop()) {
      pred.on_user_event(*e);
      ++consumed;
    }
    done = true;
  });
  for (auto& t : producers) t.join();
  while (q.size() > 0) std::this_thread::sleep_for(1ms);
  q.close();
  consumer.join();
  CHECK(done);
  CHECK(max_size.load() <= 64);
  CHECK(consumed + static_cast<long>(q.dropped()) == 20000);
}
