#include "mdrnn/rnn.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/QR>

namespace mdrnn {

void ModelConfig::validate() const {
  if (dimension < 2) throw ShapeError("model dimension must be >= 2 (dt plus one control value)");
  if (layers < 1) throw ShapeError("model needs at least one LSTM layer");
  if (units < 1) throw ShapeError("LSTM layers need at least one unit");
  if (mixtures < 1) throw ShapeError("mixture head needs at least one component");
  if (seq_len < 1) throw ShapeError("sequence length must be >= 1");
}

int units_for_preset(std::string_view preset) {
  if (preset == "s") return 64;
  if (preset == "m") return 128;
  if (preset == "l") return 256;
  if (preset == "xl") return 512;
  throw std::invalid_argument("unknown size preset '" + std::string(preset) +
                              "' (expected s, m, l or xl)");
}

std::size_t param_count(const ModelConfig& cfg) {
  const std::size_t units = cfg.units;
  std::size_t total = 0;
  std::size_t in = cfg.dimension;
  for (int l = 0; l < cfg.layers; ++l) {
    total += 4 * ((in + units) * units + units);
    in = units;
  }
  const std::size_t head = cfg.head_outputs();
  return total + units * head + head;
}

template <typename T>
Weights<T> Weights<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Weights<T> w;
  w.config = cfg;
  int in = cfg.dimension;
  for (int l = 0; l < cfg.layers; ++l) {
    w.layers.push_back({Matrix<T>::Zero(4 * cfg.units, in),
                        Matrix<T>::Zero(4 * cfg.units, cfg.units),
                        Vector<T>::Zero(4 * cfg.units)});
    in = cfg.units;
  }
  w.head_weight = Matrix<T>::Zero(cfg.head_outputs(), cfg.units);
  w.head_bias = Vector<T>::Zero(cfg.head_outputs());
  return w;
}

template <typename T>
std::size_t Weights<T>::scalar_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, std::span<const T> data, const std::vector<int>&) {
    n += data.size();
  });
  return n;
}

namespace {

template <typename T>
void glorot_uniform(Matrix<T>& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

// Fills a tall 4U x U block with orthonormal columns.
template <typename T>
void orthogonal(Matrix<T>& m, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd a(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = dist(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  // Sign-correct so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  m = q.cast<T>();
}

template <typename T>
void lstm_forward(const LstmLayer<T>& w, const Matrix<T>& x, const Matrix<T>& h_prev,
                  const Matrix<T>& c_prev, StepActivations<T>& out) {
  const Eigen::Index u = w.recurrent.cols();
  out.gates.noalias() = w.input * x;
  out.gates.noalias() += w.recurrent * h_prev;
  out.gates.colwise() += w.bias;

  auto sig = [](auto block) {
    block = (T(1) + (-block.array()).exp()).inverse().matrix();
  };
  sig(out.gates.topRows(2 * u));
  out.gates.middleRows(2 * u, u) = out.gates.middleRows(2 * u, u).array().tanh().matrix();
  sig(out.gates.bottomRows(u));

  const auto i = out.gates.topRows(u).array();
  const auto f = out.gates.middleRows(u, u).array();
  const auto g = out.gates.middleRows(2 * u, u).array();
  const auto o = out.gates.bottomRows(u).array();
  out.c = (f * c_prev.array() + i * g).matrix();
  out.tanh_c = out.c.array().tanh().matrix();
  out.h = (o * out.tanh_c.array()).matrix();
}

template <typename T>
void check_batch(const SequenceBatch<T>& batch, const ModelConfig& cfg) {
  if (batch.inputs.empty()) throw ShapeError("sequence batch is empty");
  if (batch.targets.size() != batch.inputs.size()) {
    throw ShapeError("sequence batch has " + std::to_string(batch.inputs.size()) +
                     " input steps but " + std::to_string(batch.targets.size()) + " target steps");
  }
  const Eigen::Index b = batch.inputs.front().cols();
  for (std::size_t t = 0; t < batch.inputs.size(); ++t) {
    for (const Matrix<T>* m : {&batch.inputs[t], &batch.targets[t]}) {
      if (m->rows() != cfg.dimension || m->cols() != b) {
        throw ShapeError("sequence batch step " + std::to_string(t) + " is " +
                         std::to_string(m->rows()) + "x" + std::to_string(m->cols()) +
                         ", expected " + std::to_string(cfg.dimension) + "x" + std::to_string(b));
      }
    }
  }
}

template <typename T>
double unroll(const SequenceBatch<T>& batch, const Weights<T>& weights, ForwardCache<T>* cache) {
  const ModelConfig& cfg = weights.config;
  check_batch(batch, cfg);
  const int steps = batch.steps();
  const Eigen::Index b = batch.batch();
  const int k = cfg.mixtures;
  const int n = cfg.dimension;
  const Eigen::Index p = cfg.head_outputs();
  const double scale = 1.0 / (static_cast<double>(b) * steps);

  std::vector<StepActivations<T>> current(cfg.layers);
  std::vector<Matrix<T>> h(cfg.layers, Matrix<T>::Zero(cfg.units, b));
  std::vector<Matrix<T>> c(cfg.layers, Matrix<T>::Zero(cfg.units, b));
  if (cache) {
    cache->config = cfg;
    cache->weights = &weights;
    cache->revision = weights.revision;
    cache->inputs = batch.inputs;
    cache->layers.assign(cfg.layers, std::vector<StepActivations<T>>(steps));
    cache->d_raw.assign(steps, Matrix<T>(p, b));
  }

  std::vector<double> raw(p), target(n), grad(p);
  double total = 0.0;
  Matrix<T> head(p, b);
  for (int t = 0; t < steps; ++t) {
    const Matrix<T>* x = &batch.inputs[t];
    for (int l = 0; l < cfg.layers; ++l) {
      StepActivations<T>& act = cache ? cache->layers[l][t] : current[l];
      lstm_forward(weights.layers[l], *x, h[l], c[l], act);
      h[l] = act.h;
      c[l] = act.c;
      x = &act.h;
    }
    head.noalias() = weights.head_weight * *x;
    head.colwise() += weights.head_bias;
    for (Eigen::Index col = 0; col < b; ++col) {
      for (Eigen::Index r = 0; r < p; ++r) raw[r] = static_cast<double>(head(r, col));
      for (int d = 0; d < n; ++d) target[d] = static_cast<double>(batch.targets[t](d, col));
      total += mixture_nll_with_grad(raw, k, n, target, grad);
      if (cache) {
        for (Eigen::Index r = 0; r < p; ++r) {
          cache->d_raw[t](r, col) = static_cast<T>(grad[r] * scale);
        }
      }
    }
  }
  return total * scale;
}

}  // namespace

template <typename T>
Weights<T> init_weights(const ModelConfig& cfg, Rng& rng) {
  Weights<T> w = Weights<T>::zeros(cfg);
  for (auto& layer : w.layers) {
    glorot_uniform(layer.input, rng);
    orthogonal(layer.recurrent, rng);
    layer.bias.segment(cfg.units, cfg.units).setOnes();
  }
  glorot_uniform(w.head_weight, rng);
  return w;
}

template <typename T>
RecurrentState<T> RecurrentState<T>::zeros(const ModelConfig& cfg) {
  RecurrentState<T> s;
  s.layers.assign(cfg.layers, {Vector<T>::Zero(cfg.units), Vector<T>::Zero(cfg.units)});
  return s;
}

template <typename T>
void RecurrentState<T>::reset() {
  for (auto& layer : layers) {
    layer.h.setZero();
    layer.c.setZero();
  }
}

template <typename T>
bool RecurrentState<T>::operator==(const RecurrentState& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].h != other.layers[l].h || layers[l].c != other.layers[l].c) return false;
  }
  return true;
}

template <typename T>
Vector<T> lstm_step(const Vector<T>& x, LayerState<T>& state, const LstmLayer<T>& layer) {
  const Eigen::Index u = layer.recurrent.cols();
  if (x.size() != layer.input.cols() || state.h.size() != u || state.c.size() != u) {
    throw ShapeError("lstm_step: input has length " + std::to_string(x.size()) + ", layer expects " +
                     std::to_string(layer.input.cols()) + "; state width " +
                     std::to_string(state.h.size()) + ", layer width " + std::to_string(u));
  }
  StepActivations<T> act;
  lstm_forward<T>(layer, x, state.h, state.c, act);
  state.h = act.h;
  state.c = act.c;
  return state.h;
}

template <typename T>
Vector<T> to_model_input(const SampleVector& x) {
  Vector<T> v(x.dimension());
  v[0] = static_cast<T>(x.dt);
  for (std::size_t i = 0; i < x.values.size(); ++i) v[i + 1] = static_cast<T>(x.values[i]);
  return v;
}

template <typename T>
std::vector<double> forward_step_raw(const SampleVector& x, RecurrentState<T>& state,
                                     const Weights<T>& weights) {
  const ModelConfig& cfg = weights.config;
  if (x.dimension() != cfg.dimension) {
    throw ShapeError("forward_step: input dimension " + std::to_string(x.dimension()) +
                     " does not match model dimension " + std::to_string(cfg.dimension));
  }
  if (static_cast<int>(state.layers.size()) != cfg.layers) {
    throw ShapeError("forward_step: recurrent state has " + std::to_string(state.layers.size()) +
                     " layers, model has " + std::to_string(cfg.layers));
  }
  // Same kernel and operand shapes as the unrolled path with a batch of one.
  Matrix<T> h = to_model_input<T>(x);
  StepActivations<T> act;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerState<T>& s = state.layers[l];
    if (s.h.size() != cfg.units || s.c.size() != cfg.units) {
      throw ShapeError("forward_step: layer " + std::to_string(l) + " state has width " +
                       std::to_string(s.h.size()) + ", model has " + std::to_string(cfg.units));
    }
    const Matrix<T> h_prev = s.h;
    const Matrix<T> c_prev = s.c;
    lstm_forward(weights.layers[l], h, h_prev, c_prev, act);
    s.h = act.h;
    s.c = act.c;
    h = act.h;
  }
  Matrix<T> head(cfg.head_outputs(), 1);
  head.noalias() = weights.head_weight * h;
  head.colwise() += weights.head_bias;
  return std::vector<double>(head.data(), head.data() + head.size());
}

template <typename T>
MixtureParams forward_step(const SampleVector& x, RecurrentState<T>& state,
                           const Weights<T>& weights) {
  const auto raw = forward_step_raw(x, state, weights);
  return split_params(raw, weights.config.mixtures, weights.config.dimension);
}

template <typename T>
SequenceResult<T> forward_sequence(const SequenceBatch<T>& batch, const Weights<T>& weights) {
  SequenceResult<T> result;
  result.loss = unroll(batch, weights, &result.cache);
  return result;
}

template <typename T>
double sequence_loss(const SequenceBatch<T>& batch, const Weights<T>& weights) {
  return unroll<T>(batch, weights, nullptr);
}

template <typename T>
Weights<T> backward(const ForwardCache<T>& cache, const Weights<T>& weights) {
  if (cache.weights != &weights || !(cache.config == weights.config)) {
    throw StaleCacheError("backward: cache was produced by a different set of weights");
  }
  if (cache.revision != weights.revision) {
    throw StaleCacheError("backward: weights changed since the forward pass (revision " +
                          std::to_string(cache.revision) + " vs " +
                          std::to_string(weights.revision) + ")");
  }
  const ModelConfig& cfg = weights.config;
  const int steps = static_cast<int>(cache.inputs.size());
  if (steps == 0 || static_cast<int>(cache.layers.size()) != cfg.layers) {
    throw StaleCacheError("backward: cache holds no forward pass");
  }
  const Eigen::Index b = cache.inputs.front().cols();
  const Eigen::Index u = cfg.units;

  Weights<T> grad = Weights<T>::zeros(cfg);

  // Gradient flowing into each layer's hidden output from above, per step.
  std::vector<Matrix<T>> d_above(steps);
  const auto& top = cache.layers.back();
  for (int t = 0; t < steps; ++t) {
    grad.head_weight.noalias() += cache.d_raw[t] * top[t].h.transpose();
    grad.head_bias += cache.d_raw[t].rowwise().sum();
    d_above[t].noalias() = weights.head_weight.transpose() * cache.d_raw[t];
  }

  const Matrix<T> zeros = Matrix<T>::Zero(u, b);
  Matrix<T> dz(4 * u, b);
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& acts = cache.layers[l];
    const LstmLayer<T>& w = weights.layers[l];
    LstmLayer<T>& g = grad.layers[l];
    Matrix<T> dh_next = Matrix<T>::Zero(u, b);
    Matrix<T> dc_next = Matrix<T>::Zero(u, b);
    for (int t = steps - 1; t >= 0; --t) {
      const StepActivations<T>& a = acts[t];
      const Matrix<T>& c_prev = t > 0 ? acts[t - 1].c : zeros;
      const Matrix<T>& h_prev = t > 0 ? acts[t - 1].h : zeros;
      const Matrix<T>& x = l > 0 ? cache.layers[l - 1][t].h : cache.inputs[t];

      const auto i = a.gates.topRows(u).array();
      const auto f = a.gates.middleRows(u, u).array();
      const auto gc = a.gates.middleRows(2 * u, u).array();
      const auto o = a.gates.bottomRows(u).array();

      const auto dh = (d_above[t] + dh_next).array();
      const auto tc = a.tanh_c.array();
      const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> dc =
          dh * o * (T(1) - tc * tc) + dc_next.array();

      dz.topRows(u) = (dc * gc * i * (T(1) - i)).matrix();
      dz.middleRows(u, u) = (dc * c_prev.array() * f * (T(1) - f)).matrix();
      dz.middleRows(2 * u, u) = (dc * i * (T(1) - gc * gc)).matrix();
      dz.bottomRows(u) = (dh * tc * o * (T(1) - o)).matrix();

      g.input.noalias() += dz * x.transpose();
      g.recurrent.noalias() += dz * h_prev.transpose();
      g.bias += dz.rowwise().sum();

      dc_next = (dc * f).matrix();
      dh_next.noalias() = w.recurrent.transpose() * dz;
      if (l > 0) {
        // Reuse the slot: this step's contribution to the layer below.
        d_above[t].noalias() = w.input.transpose() * dz;
      }
    }
  }
  return grad;
}

#define MDRNN_INSTANTIATE(T)                                                                     \
  template struct Weights<T>;                                                                    \
  template struct RecurrentState<T>;                                                             \
  template Weights<T> init_weights<T>(const ModelConfig&, Rng&);                                 \
  template Vector<T> lstm_step<T>(const Vector<T>&, LayerState<T>&, const LstmLayer<T>&);        \
  template Vector<T> to_model_input<T>(const SampleVector&);                                     \
  template std::vector<double> forward_step_raw<T>(const SampleVector&, RecurrentState<T>&,      \
                                                   const Weights<T>&);                           \
  template MixtureParams forward_step<T>(const SampleVector&, RecurrentState<T>&,                \
                                         const Weights<T>&);                                     \
  template SequenceResult<T> forward_sequence<T>(const SequenceBatch<T>&, const Weights<T>&);    \
  template double sequence_loss<T>(const SequenceBatch<T>&, const Weights<T>&);                  \
  template Weights<T> backward<T>(const ForwardCache<T>&, const Weights<T>&);

MDRNN_INSTANTIATE(float)
MDRNN_INSTANTIATE(double)

#undef MDRNN_INSTANTIATE

}  // namespace mdrnn
