#include "mdrnn/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mdrnn/errors.hpp"

namespace mdrnn {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " contains a non-finite value");
  }
}

double log_sum_exp(std::span<const double> xs) {
  const double top = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc);
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
}

// log N(target; mu_k, diag(sigma_k^2)) for every component, plus log pi_k.
std::vector<double> component_log_joint(const MixtureParams& params,
                                        std::span<const double> target) {
  const int k_count = params.components();
  const int n = params.dimension();
  std::vector<double> out(k_count);
  for (int k = 0; k < k_count; ++k) {
    double acc = params.pi[k] > 0.0 ? std::log(params.pi[k])
                                     : -std::numeric_limits<double>::infinity();
    for (int d = 0; d < n; ++d) {
      const double s = params.sigma(k, d);
      const double z = (target[d] - params.mu(k, d)) / s;
      acc += -0.5 * z * z - std::log(s) - kHalfLog2Pi;
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

void MixtureParams::validate() const {
  const auto k = pi.size();
  if (k == 0) throw ShapeError("mixture has no components");
  if (mu.rows() != static_cast<Eigen::Index>(k) || sigma.rows() != mu.rows() ||
      sigma.cols() != mu.cols() || mu.cols() == 0) {
    throw ShapeError("mixture parameter shapes disagree: pi " + std::to_string(k) + ", mu " +
                     std::to_string(mu.rows()) + "x" + std::to_string(mu.cols()) + ", sigma " +
                     std::to_string(sigma.rows()) + "x" + std::to_string(sigma.cols()));
  }
  if (!pi.allFinite() || !mu.allFinite() || !sigma.allFinite()) {
    throw NumericError("mixture parameters contain non-finite values");
  }
  if ((pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-9) {
    throw NumericError("mixture weights are not a probability vector");
  }
  if ((sigma.array() <= 0.0).any()) throw NumericError("mixture scales must be positive");
}

MixtureParams split_params(std::span<const double> raw, int k, int n) {
  if (k < 1 || n < 1) throw ShapeError("mixture needs k >= 1 and n >= 1");
  const std::size_t expected = raw_param_count(k, n);
  if (raw.size() != expected) {
    throw ShapeError("raw mixture output has length " + std::to_string(raw.size()) +
                     ", expected " + std::to_string(expected) + " for K=" + std::to_string(k) +
                     ", N=" + std::to_string(n));
  }
  require_finite(raw, "raw mixture output");

  MixtureParams p;
  p.pi.resize(k);
  softmax_into(raw.first(k), std::span<double>(p.pi.data(), k));
  p.mu.resize(k, n);
  p.sigma.resize(k, n);
  const std::size_t mu_at = k;
  const std::size_t sigma_at = k + static_cast<std::size_t>(k) * n;
  for (int c = 0; c < k; ++c) {
    for (int d = 0; d < n; ++d) {
      const std::size_t off = static_cast<std::size_t>(c) * n + d;
      p.mu(c, d) = raw[mu_at + off];
      p.sigma(c, d) = std::max(std::exp(raw[sigma_at + off]), kSigmaMin);
    }
  }
  return p;
}

double mixture_nll(const MixtureParams& params, std::span<const double> target) {
  params.validate();
  if (target.size() != static_cast<std::size_t>(params.dimension())) {
    throw ShapeError("target has length " + std::to_string(target.size()) + ", expected " +
                     std::to_string(params.dimension()));
  }
  require_finite(target, "target");
  const auto joint = component_log_joint(params, target);
  return -log_sum_exp(joint);
}

double mixture_nll_with_grad(std::span<const double> raw, int k, int n,
                             std::span<const double> target, std::span<double> d_raw) {
  if (d_raw.size() != raw.size()) throw ShapeError("gradient buffer does not match raw output");
  if (target.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("target has length " + std::to_string(target.size()) + ", expected " +
                     std::to_string(n));
  }
  require_finite(target, "target");
  const MixtureParams params = split_params(raw, k, n);
  const auto joint = component_log_joint(params, target);
  const double lse = log_sum_exp(joint);

  const std::size_t mu_at = k;
  const std::size_t sigma_at = k + static_cast<std::size_t>(k) * n;
  for (int c = 0; c < k; ++c) {
    const double resp = std::exp(joint[c] - lse);
    d_raw[c] = params.pi[c] - resp;
    for (int d = 0; d < n; ++d) {
      const std::size_t off = static_cast<std::size_t>(c) * n + d;
      const double s = params.sigma(c, d);
      const double z = (target[d] - params.mu(c, d)) / s;
      d_raw[mu_at + off] = -resp * z / s;
      const bool floored = std::exp(raw[sigma_at + off]) < kSigmaMin;
      d_raw[sigma_at + off] = floored ? 0.0 : resp * (1.0 - z * z);
    }
  }
  return -lse;
}

std::vector<double> apply_pi_temperature(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw ShapeError("no logits to temper");
  require_finite(logits, "logits");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw NumericError("pi temperature must be a finite non-negative number");
  }
  std::vector<double> out(logits.size(), 0.0);
  const auto top = std::max_element(logits.begin(), logits.end());
  if (temperature == 0.0) {
    out[static_cast<std::size_t>(top - logits.begin())] = 1.0;
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - *top) / temperature);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

SampleVector sample(const MixtureParams& params, const SamplingConfig& cfg, Rng& rng) {
  if (!(cfg.sigma_temperature >= 0.0)) throw NumericError("sigma temperature must be >= 0");
  const int k_count = params.components();
  const int n = params.dimension();

  // Zero-weight components get the smallest representable log-weight so the
  // tempered categorical stays well defined.
  std::vector<double> log_pi(k_count);
  for (int c = 0; c < k_count; ++c) {
    log_pi[c] = std::log(std::max(params.pi[c], std::numeric_limits<double>::min()));
  }
  const auto probs = apply_pi_temperature(log_pi, cfg.pi_temperature);

  int chosen = 0;
  if (cfg.pi_temperature == 0.0) {
    chosen = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  } else {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    chosen = -1;
    for (int c = 0; c < k_count; ++c) {
      acc += probs[c];
      if (u < acc) {
        chosen = c;
        break;
      }
    }
    if (chosen < 0) {
      // u landed in the rounding gap above the cumulative sum.
      chosen = static_cast<int>(std::find_if(probs.rbegin(), probs.rend(),
                                             [](double p) { return p > 0.0; }).base() -
                                probs.begin()) - 1;
    }
  }

  std::vector<double> draw(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int d = 0; d < n; ++d) {
    draw[d] = params.mu(chosen, d);
    if (cfg.sigma_temperature > 0.0) {
      draw[d] += params.sigma(chosen, d) * cfg.sigma_temperature * normal(rng);
    }
  }

  SampleVector out;
  out.dt = std::clamp(draw[0], kDtMin, kDtMax);
  out.values.resize(n - 1);
  for (int d = 1; d < n; ++d) out.values[d - 1] = std::clamp(draw[d], 0.0, 1.0);
  return out;
}

}  // namespace mdrnn
