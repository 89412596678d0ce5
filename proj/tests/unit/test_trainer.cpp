#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mdrnn/checkpoint.hpp"
#include "mdrnn/errors.hpp"
#include "mdrnn/trainer.hpp"

using namespace mdrnn;

namespace {

Dataset sine_dataset(std::size_t samples, double dt = 0.05) {
  Session s;
  for (std::size_t i = 0; i < samples; ++i) {
    s.push_back({dt, {0.5 + 0.4 * std::sin(2.0 * M_PI * static_cast<double>(i) / 40.0)}});
  }
  return Dataset{{s}};
}

ModelConfig small_config() { return ModelConfig{2, 2, 16, 3, 20}; }

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() /
         (stem + "-" + std::to_string(std::random_device{}()) + ".ckpt");
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("training reduces the loss on a sine pattern") {
  TrainRun run;
  run.epochs = 8;
  run.early_stop_patience = 0;
  run.learning_rate = 3e-3;
  run.batch_size = 32;
  const auto result = train(sine_dataset(800), small_config(), run);
  REQUIRE(result.history.size() == 8);
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
  CHECK(result.checkpoint.meta.epochs_run == 8);
  double best = INFINITY;
  for (const auto& r : result.history) best = std::min(best, r.val_loss);
  CHECK(result.checkpoint.meta.best_val_loss == best);
}

TEST_CASE("early stopping halts after `patience` epochs without improvement") {
  TrainRun run;
  run.epochs = 20;
  run.early_stop_patience = 3;
  run.learning_rate = 0.0;
  const auto result = train(sine_dataset(200), small_config(), run);
  CHECK(result.stopped_early);
  REQUIRE(result.history.size() == 4);
  CHECK(result.history.back().epoch == 4);
  CHECK(result.history[3].val_loss == result.history[0].val_loss);
}

TEST_CASE("training is reproducible for a fixed seed") {
  TrainRun run;
  run.epochs = 3;
  run.early_stop_patience = 0;
  run.learning_rate = 1e-3;
  run.seed = 99;
  const auto a = train(sine_dataset(300), small_config(), run);
  const auto b = train(sine_dataset(300), small_config(), run);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
  run.seed = 100;
  const auto c = train(sine_dataset(300), small_config(), run);
  CHECK(c.history[0].train_loss != a.history[0].train_loss);
}

TEST_CASE("split sizes are reported") {
  TrainRun run;
  run.epochs = 1;
  // 1020 samples with seq_len 20 give exactly 1000 windows.
  const auto result = train(sine_dataset(1020), small_config(), run);
  CHECK(result.train_examples == 900);
  CHECK(result.validation_examples == 100);
}

TEST_CASE("training errors") {
  TrainRun run;
  run.epochs = 1;
  CHECK_THROWS_AS(train(Dataset{}, small_config(), run), TrainingError);
  CHECK_THROWS_AS(train(sine_dataset(20), small_config(), run), TrainingError);
  CHECK_THROWS_AS(train(sine_dataset(100), ModelConfig{3, 2, 16, 3, 20}, run), TrainingError);

  auto blown = sine_dataset(200);
  blown.sessions[0][30].dt = 1e38;
  blown.sessions[0][31].values[0] = -1e38;
  try {
    train(blown, small_config(), run);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }

  TrainRun bad = run;
  bad.validation_fraction = 1.0;
  CHECK_THROWS(train(sine_dataset(200), small_config(), bad));
}

TEST_CASE("gradient clipping bounds the global norm") {
  Weights<float> g = Weights<float>::zeros(ModelConfig{2, 1, 2, 1, 1});
  g.head_bias.setConstant(100.0f);
  const double before = clip_gradient_norm(g, 10.0);
  CHECK(before == doctest::Approx(100.0 * std::sqrt(5.0)));
  double sq = 0.0;
  g.visit([&](const std::string&, std::span<const float> d, const std::vector<int>&) {
    for (float x : d) sq += x * x;
  });
  CHECK(std::sqrt(sq) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("Adam moves against the gradient by about the learning rate") {
  const ModelConfig cfg{2, 1, 2, 1, 1};
  Weights<float> w = Weights<float>::zeros(cfg);
  Weights<float> g = Weights<float>::zeros(cfg);
  g.head_bias.setConstant(0.5f);
  g.head_bias[1] = -2.0f;
  AdamOptimizer adam(cfg, 0.01);
  adam.step(w, g);
  CHECK(w.head_bias[0] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(w.head_bias[1] == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(w.head_weight.isZero());
  CHECK(w.revision == 1);
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("history CSV") {
  std::ostringstream out;
  write_history_csv(out, {{1, 2.5, 3.0}, {2, 1.5, 2.75}});
  CHECK(out.str() == "epoch,train_loss,val_loss\n1,2.5,3\n2,1.5,2.75\n");
}

TEST_CASE("checkpoint round trip is byte exact") {
  const ModelConfig cfg{3, 2, 8, 5, 50};
  Rng rng(3);
  Checkpoint ckpt{init_weights<float>(cfg, rng), TrainingMeta{7, -1.2345678901234567, 42}};
  const auto a = temp_file("rt-a"), b = temp_file("rt-b");
  save_checkpoint(a, ckpt);
  const auto loaded = load_checkpoint(a);
  save_checkpoint(b, loaded);
  CHECK(read_bytes(a) == read_bytes(b));
  CHECK(loaded.meta == ckpt.meta);
  CHECK(loaded.config() == cfg);
  CHECK(loaded.weights.head_weight == ckpt.weights.head_weight);
  CHECK(loaded.weights.layers[1].recurrent == ckpt.weights.layers[1].recurrent);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("checkpoint header is human readable") {
  const ModelConfig cfg{4, 2, 8, 5, 50};
  Checkpoint ckpt{Weights<float>::zeros(cfg), {}};
  const auto bytes = serialize_checkpoint(ckpt);
  CHECK(bytes.starts_with("mdrnn-checkpoint 1\ndimension = 4\nlayers = 2\nunits = 8\n"));
  CHECK(bytes.find("param_count = " + std::to_string(param_count(cfg))) != std::string::npos);
}

TEST_CASE("damaged checkpoints are rejected") {
  const ModelConfig cfg{3, 2, 8, 5, 50};
  Rng rng(3);
  const auto bytes = serialize_checkpoint({init_weights<float>(cfg, rng), {}});

  SUBCASE("truncated") {
    for (std::size_t cut : {bytes.size() - 1, bytes.size() - 100, bytes.size() / 2, std::size_t{30}}) {
      CHECK_THROWS_AS(parse_checkpoint(std::string_view(bytes).substr(0, cut)), CheckpointError);
    }
    const auto path = temp_file("trunc");
    std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    std::filesystem::remove(path);
  }
  SUBCASE("flipped weight byte") {
    auto bad = bytes;
    bad[bad.size() - 40] ^= 0x10;
    CHECK_THROWS_AS(parse_checkpoint(bad), CheckpointError);
  }
  SUBCASE("trailing garbage") {
    CHECK_THROWS_AS(parse_checkpoint(bytes + "xx"), CheckpointError);
  }
  SUBCASE("not a checkpoint") {
    CHECK_THROWS_AS(parse_checkpoint("time,x1\n0,0.1\n"), CheckpointError);
  }
  SUBCASE("header disagrees with stored arrays") {
    auto bad = bytes;
    bad.replace(bad.find("units = 8"), 9, "units = 9");
    CHECK_THROWS_AS(parse_checkpoint(bad), CheckpointError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError);
  }
}

TEST_CASE("loading an xl checkpoint into an s configuration fails") {
  const ModelConfig xl{3, 2, units_for_preset("xl"), 5, 50};
  const ModelConfig s{3, 2, units_for_preset("s"), 5, 50};
  const auto path = temp_file("xl");
  save_checkpoint(path, {Weights<float>::zeros(xl), {}});
  CHECK_NOTHROW(load_checkpoint(path, xl));
  CHECK_THROWS_AS(load_checkpoint(path, s), CheckpointError);
  std::filesystem::remove(path);
}
