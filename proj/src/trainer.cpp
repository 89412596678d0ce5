#include "mdrnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <spdlog/spdlog.h>

#include "mdrnn/errors.hpp"

namespace mdrnn {

void TrainRun::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (early_stop_patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must lie strictly between 0 and 1");
  }
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be > 0");
}

AdamOptimizer::AdamOptimizer(const ModelConfig& cfg, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Weights<float>::zeros(cfg)),
      v_(Weights<float>::zeros(cfg)) {}

void AdamOptimizer::step(Weights<float>& weights, const Weights<float>& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto step_size = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto eps = static_cast<float>(eps_ * std::sqrt(c2));

  std::vector<std::span<const float>> g;
  std::vector<std::span<float>> m, v;
  grad.visit([&](const std::string&, std::span<const float> d, const std::vector<int>&) { g.push_back(d); });
  m_.visit([&](const std::string&, std::span<float> d, const std::vector<int>&) { m.push_back(d); });
  v_.visit([&](const std::string&, std::span<float> d, const std::vector<int>&) { v.push_back(d); });
  std::size_t block = 0;
  weights.visit([&](const std::string& name, std::span<float> w, const std::vector<int>&) {
    if (g[block].size() != w.size()) throw ShapeError("gradient block " + name + " has the wrong size");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float gi = g[block][i];
      m[block][i] = b1 * m[block][i] + (1.0f - b1) * gi;
      v[block][i] = b2 * v[block][i] + (1.0f - b2) * gi * gi;
      w[i] -= step_size * m[block][i] / (std::sqrt(v[block][i]) + eps);
    }
    ++block;
  });
  ++weights.revision;
}

double clip_gradient_norm(Weights<float>& grad, double max_norm) {
  double sq = 0.0;
  grad.visit([&](const std::string&, std::span<const float> d, const std::vector<int>&) {
    for (float x : d) sq += static_cast<double>(x) * x;
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const auto scale = static_cast<float>(max_norm / norm);
    grad.visit([&](const std::string&, std::span<float> d, const std::vector<int>&) {
      for (float& x : d) x *= scale;
    });
  }
  return norm;
}

double evaluate(const Dataset& dataset, std::span<const Window> windows,
                const Weights<float>& weights, int batch_size) {
  if (windows.empty()) throw TrainingError("no examples to evaluate");
  double total = 0.0;
  for (std::size_t at = 0; at < windows.size(); at += batch_size) {
    const auto chunk = windows.subspan(at, std::min<std::size_t>(batch_size, windows.size() - at));
    const auto batch = make_batch<float>(dataset, chunk, weights.config.seq_len);
    total += sequence_loss(batch, weights) * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(windows.size());
}

TrainResult train(const Dataset& dataset, const ModelConfig& cfg, const TrainRun& run,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  run.validate();
  if (dataset.sessions.empty()) throw TrainingError("dataset is empty");
  for (const auto& s : dataset.sessions) {
    for (const auto& x : s) {
      if (x.dimension() != cfg.dimension) {
        throw TrainingError("dataset samples have dimension " + std::to_string(x.dimension()) +
                            ", model expects " + std::to_string(cfg.dimension));
      }
    }
  }

  Split split = split_windows(make_windows(dataset, cfg.seq_len), run.validation_fraction, run.seed);
  if (split.train.empty()) {
    throw TrainingError("no training examples: sessions must be longer than seq_len (" +
                        std::to_string(cfg.seq_len) + ") samples");
  }
  if (split.validation.empty()) {
    throw TrainingError("dataset too small to hold out any validation examples");
  }

  Rng rng(run.seed);
  Weights<float> weights = init_weights<float>(cfg, rng);
  AdamOptimizer adam(cfg, run.learning_rate);

  TrainResult result;
  result.train_examples = split.train.size();
  result.validation_examples = split.validation.size();
  result.checkpoint.weights = weights;
  result.checkpoint.meta.rng_seed = run.seed;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= run.epochs; ++epoch) {
    std::shuffle(split.train.begin(), split.train.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t at = 0; at < split.train.size(); at += run.batch_size) {
      const auto chunk = std::span<const Window>(split.train)
                             .subspan(at, std::min<std::size_t>(run.batch_size, split.train.size() - at));
      const auto batch = make_batch<float>(dataset, chunk, cfg.seq_len);
      auto fwd = forward_sequence(batch, weights);
      if (!std::isfinite(fwd.loss)) {
        throw TrainingError("training diverged: loss became non-finite at epoch " +
                            std::to_string(epoch) + ", example " + std::to_string(at) +
                            "; try a lower learning rate");
      }
      Weights<float> grad = backward(fwd.cache, weights);
      const double norm = clip_gradient_norm(grad, run.clip_norm);
      if (!std::isfinite(norm)) {
        throw TrainingError("training diverged: non-finite gradient at epoch " +
                            std::to_string(epoch) + "; try a lower learning rate");
      }
      adam.step(weights, grad);
      epoch_total += fwd.loss * static_cast<double>(chunk.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_total / static_cast<double>(split.train.size());
    rec.val_loss = evaluate(dataset, split.validation, weights, run.batch_size);
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingError("training diverged: validation loss is non-finite at epoch " +
                          std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      since_best = 0;
      result.checkpoint.weights = weights;
    } else {
      ++since_best;
    }
    result.checkpoint.meta.epochs_run = epoch;
    result.checkpoint.meta.best_val_loss = best;
    if (run.early_stop_patience > 0 && since_best >= run.early_stop_patience) {
      spdlog::info("early stop after epoch {}: no validation improvement for {} epochs", epoch,
                   since_best);
      result.stopped_early = true;
      break;
    }
  }
  result.checkpoint.weights.revision = 0;
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,val_loss\n";
  out << std::setprecision(9);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history file " + path.string());
  write_history_csv(out, history);
}

}  // namespace mdrnn
