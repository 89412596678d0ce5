#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <vector>

#include "mdrnn/checkpoint.hpp"
#include "mdrnn/dataset.hpp"
#include "mdrnn/rnn.hpp"

namespace mdrnn {

struct TrainRun {
  int batch_size = 64;
  int epochs = 100;
  int early_stop_patience = 10;  // 0 disables early stopping
  double validation_fraction = 0.10;
  double learning_rate = 1e-4;
  double clip_norm = 10.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;  // weights from the epoch with the best validation loss
  std::vector<EpochRecord> history;
  bool stopped_early = false;
  std::size_t train_examples = 0;
  std::size_t validation_examples = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelConfig& cfg, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one update and bumps the weights' revision.
  void step(Weights<float>& weights, const Weights<float>& grad);

  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Weights<float> m_;
  Weights<float> v_;
};

// Rescales the gradient so its global L2 norm is at most `max_norm`. Returns the
// norm before clipping.
double clip_gradient_norm(Weights<float>& grad, double max_norm);

// Mean NLL over the given windows, evaluated in batches.
double evaluate(const Dataset& dataset, std::span<const Window> windows,
                const Weights<float>& weights, int batch_size);

TrainResult train(const Dataset& dataset, const ModelConfig& cfg, const TrainRun& run,
                  const EpochCallback& on_epoch = {});

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace mdrnn
