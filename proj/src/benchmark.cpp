#include "mdrnn/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "mdrnn/mdn.hpp"
#include "mdrnn/rnn.hpp"

namespace mdrnn {

void BenchmarkGrid::validate() const {
  if (repeats < 2) {
    throw std::invalid_argument("benchmark needs at least 2 repeats (the first one is discarded)");
  }
  if (rounds < 1) throw std::invalid_argument("benchmark rounds must be >= 1");
  if (dimensions.empty() || units.empty()) throw std::invalid_argument("benchmark grid is empty");
  for (int d : dimensions) {
    if (d < 2) throw std::invalid_argument("benchmark dimensions must be >= 2");
  }
  for (int u : units) {
    if (u < 1) throw std::invalid_argument("benchmark units must be >= 1");
  }
}

std::vector<double> time_predictions(int dimension, int units, const BenchmarkGrid& grid) {
  grid.validate();
  const ModelConfig cfg{dimension, grid.layers, units, grid.mixtures, 1};
  cfg.validate();
  Rng rng(grid.seed + static_cast<std::uint64_t>(units) * 100 + dimension);
  const Weights<float> weights = init_weights<float>(cfg, rng);
  auto state = RecurrentState<float>::zeros(cfg);
  SamplingConfig sampling;
  SampleVector x{0.1, std::vector<double>(dimension - 1, 0.5)};

  std::vector<double> times;
  times.reserve(grid.repeats);
  for (int r = 0; r < grid.repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const MixtureParams params = forward_step(x, state, weights);
    x = sample(params, sampling, rng);
    const auto t1 = std::chrono::steady_clock::now();
    if (r > 0) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return times;
}

std::vector<BenchmarkCell> run_benchmark(const BenchmarkGrid& grid,
                                         const std::function<void(const BenchmarkCell&)>& on_cell) {
  grid.validate();
  std::vector<BenchmarkCell> cells;
  for (int u : grid.units) {
    for (int d : grid.dimensions) cells.push_back({u, d, INFINITY, 0.0});
  }
  // Rounds sweep the whole grid so slow periods are shared across cells.
  for (int r = 0; r < grid.rounds; ++r) {
    for (auto& cell : cells) {
      const auto t = time_predictions(cell.dimension, cell.units, grid);
      const double n = static_cast<double>(t.size());
      const double mean = std::accumulate(t.begin(), t.end(), 0.0) / n;
      if (mean >= cell.mean_ms) continue;
      double ss = 0.0;
      for (double v : t) ss += (v - mean) * (v - mean);
      cell.mean_ms = mean;
      cell.sd_ms = std::sqrt(ss / (n - 1.0));
    }
  }
  if (on_cell) {
    for (const auto& c : cells) on_cell(c);
  }
  return cells;
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkCell>& cells) {
  out << "units,dimension,mean_ms,sd_ms\n";
  for (const auto& c : cells) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.4f,%.4f\n", c.units, c.dimension, c.mean_ms, c.sd_ms);
    out << buf;
  }
}

}  // namespace mdrnn
