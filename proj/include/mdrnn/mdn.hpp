#pragma once

// Gaussian-mixture density head.
//
// A raw network output of length K*(2N+1) is laid out as
//   [ K mixture logits | K*N means | K*N log-scales ]
// with means and scales stored component-major (component k, dimension d at k*N + d).
// Every component is a diagonal-covariance Gaussian.
//
// The head works in double precision regardless of the network's scalar type; its
// cost is O(K*N) per step and the loss oracle tolerances need the headroom.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mdrnn {

inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kDtMin = 0.001;
inline constexpr double kDtMax = 10.0;

using Rng = std::mt19937_64;

struct MixtureParams {
  Eigen::VectorXd pi;     // K
  Eigen::MatrixXd mu;     // K x N
  Eigen::MatrixXd sigma;  // K x N

  int components() const { return static_cast<int>(pi.size()); }
  int dimension() const { return static_cast<int>(mu.cols()); }

  // Throws ShapeError / NumericError when the simplex, positivity or shape
  // invariants are broken.
  void validate() const;
};

struct SamplingConfig {
  double pi_temperature = 1.0;
  double sigma_temperature = 1.0;
  std::optional<std::uint64_t> rng_seed;
};

// One model step: the time since the previous event followed by N-1 control values.
struct SampleVector {
  double dt = kDtMin;
  std::vector<double> values;

  int dimension() const { return static_cast<int>(values.size()) + 1; }
  bool operator==(const SampleVector&) const = default;
};

constexpr std::size_t raw_param_count(int k, int n) {
  return static_cast<std::size_t>(k) * static_cast<std::size_t>(2 * n + 1);
}

MixtureParams split_params(std::span<const double> raw, int k, int n);

double mixture_nll(const MixtureParams& params, std::span<const double> target);

// Loss and its gradient with respect to the raw head output, evaluated in one pass.
// Scale entries sitting on the sigma floor receive zero gradient.
double mixture_nll_with_grad(std::span<const double> raw, int k, int n,
                             std::span<const double> target, std::span<double> d_raw);

std::vector<double> apply_pi_temperature(std::span<const double> logits, double temperature);

SampleVector sample(const MixtureParams& params, const SamplingConfig& cfg, Rng& rng);

}  // namespace mdrnn
