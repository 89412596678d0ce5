#pragma once

// Stacked LSTM with a mixture density head.
//
// Training unrolls the network over a batch of fixed-length windows and
// backpropagates through time; inference advances a RecurrentState one step at a
// time. Both paths run over the same Weights and the same per-step kernel.
//
// Everything is templated on the scalar type. The service runs in float; the
// finite-difference gradient oracle instantiates the same code in double.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mdrnn/errors.hpp"
#include "mdrnn/mdn.hpp"

namespace mdrnn {

struct ModelConfig {
  int dimension = 3;  // dt plus N-1 control values
  int layers = 2;
  int units = 64;
  int mixtures = 5;
  int seq_len = 50;

  void validate() const;
  int head_outputs() const { return static_cast<int>(raw_param_count(mixtures, dimension)); }
  bool operator==(const ModelConfig&) const = default;
};

// s, m, l, xl -> 64, 128, 256, 512. Throws std::invalid_argument for anything else.
int units_for_preset(std::string_view preset);

std::size_t param_count(const ModelConfig& cfg);

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Gate rows are ordered input, forget, candidate, output; each block is `units` tall.
template <typename T>
struct LstmLayer {
  Matrix<T> input;      // 4U x in
  Matrix<T> recurrent;  // 4U x U
  Vector<T> bias;       // 4U
};

template <typename T>
struct Weights {
  ModelConfig config;
  std::vector<LstmLayer<T>> layers;
  Matrix<T> head_weight;  // P x U, P = K(2N+1)
  Vector<T> head_bias;    // P
  // Bumped by anything that updates the weights in place; forward caches remember it.
  std::uint64_t revision = 0;

  static Weights zeros(const ModelConfig& cfg);

  std::size_t scalar_count() const;

  // Calls fn(name, data, shape) for every parameter array in serialization order.
  template <typename Fn>
  void visit(Fn&& fn) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "lstm" + std::to_string(l);
      visit_matrix(fn, p + ".input", layers[l].input);
      visit_matrix(fn, p + ".recurrent", layers[l].recurrent);
      visit_vector(fn, p + ".bias", layers[l].bias);
    }
    visit_matrix(fn, "head.weight", head_weight);
    visit_vector(fn, "head.bias", head_bias);
  }

  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<Weights*>(this)->visit([&](const std::string& name, std::span<T> data,
                                          const std::vector<int>& shape) {
      fn(name, std::span<const T>(data.data(), data.size()), shape);
    });
  }

  template <typename U>
  Weights<U> cast() const {
    Weights<U> out;
    out.config = config;
    for (const auto& layer : layers) {
      out.layers.push_back({layer.input.template cast<U>(), layer.recurrent.template cast<U>(),
                            layer.bias.template cast<U>()});
    }
    out.head_weight = head_weight.template cast<U>();
    out.head_bias = head_bias.template cast<U>();
    return out;
  }

 private:
  template <typename Fn, typename M>
  static void visit_matrix(Fn& fn, const std::string& name, M& m) {
    fn(name, std::span<T>(m.data(), static_cast<std::size_t>(m.size())),
       std::vector<int>{static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  }
  template <typename Fn, typename V>
  static void visit_vector(Fn& fn, const std::string& name, V& v) {
    fn(name, std::span<T>(v.data(), static_cast<std::size_t>(v.size())),
       std::vector<int>{static_cast<int>(v.size())});
  }
};

// Glorot-uniform input and head blocks, orthogonal recurrent blocks, zero biases
// except the forget gate which starts at 1.
template <typename T>
Weights<T> init_weights(const ModelConfig& cfg, Rng& rng);

template <typename T>
struct LayerState {
  Vector<T> h;
  Vector<T> c;
};

template <typename T>
struct RecurrentState {
  std::vector<LayerState<T>> layers;

  static RecurrentState zeros(const ModelConfig& cfg);
  void reset();
  bool operator==(const RecurrentState&) const;
};

template <typename T>
void reset_state(RecurrentState<T>& state) {
  state.reset();
}

// One LSTM cell update. Returns the new hidden vector and updates `state`.
template <typename T>
Vector<T> lstm_step(const Vector<T>& x, LayerState<T>& state, const LstmLayer<T>& layer);

// Stacked LSTM + head for a single time step; `state` is advanced in place.
template <typename T>
std::vector<double> forward_step_raw(const SampleVector& x, RecurrentState<T>& state,
                                     const Weights<T>& weights);

template <typename T>
MixtureParams forward_step(const SampleVector& x, RecurrentState<T>& state,
                           const Weights<T>& weights);

template <typename T>
Vector<T> to_model_input(const SampleVector& x);

// A batch of windows laid out time-major: inputs[t] is dimension x batch.
template <typename T>
struct SequenceBatch {
  std::vector<Matrix<T>> inputs;
  std::vector<Matrix<T>> targets;

  int steps() const { return static_cast<int>(inputs.size()); }
  int batch() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().cols()); }
  int dimension() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().rows()); }
};

template <typename T>
struct StepActivations {
  Matrix<T> gates;   // activated i, f, g, o (4U x B)
  Matrix<T> c;       // U x B
  Matrix<T> tanh_c;  // U x B
  Matrix<T> h;       // U x B
};

template <typename T>
struct ForwardCache {
  ModelConfig config;
  const Weights<T>* weights = nullptr;
  std::uint64_t revision = 0;
  std::vector<Matrix<T>> inputs;
  std::vector<std::vector<StepActivations<T>>> layers;  // [layer][step]
  std::vector<Matrix<T>> d_raw;                         // dLoss/dHead per step, P x B
};

template <typename T>
struct SequenceResult {
  double loss = 0.0;  // mean NLL over batch and time
  ForwardCache<T> cache;
};

// Teacher-forced unroll from a zero state.
template <typename T>
SequenceResult<T> forward_sequence(const SequenceBatch<T>& batch, const Weights<T>& weights);

// Loss only, no activations kept.
template <typename T>
double sequence_loss(const SequenceBatch<T>& batch, const Weights<T>& weights);

// Exact gradient of the mean NLL by backpropagation through time. The result has
// the same layout as the weights.
template <typename T>
Weights<T> backward(const ForwardCache<T>& cache, const Weights<T>& weights);

}  // namespace mdrnn
