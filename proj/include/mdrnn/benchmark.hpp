#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

namespace mdrnn {

struct BenchmarkGrid {
  std::vector<int> dimensions = {2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> units = {64, 128, 256, 512};
  int repeats = 100;  // the first measurement of each cell is discarded
  // Independent runs per cell; the run with the lowest mean is reported. More
  // than one filters out runs hit by scheduler preemption on a busy machine.
  int rounds = 1;
  int layers = 2;
  int mixtures = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct BenchmarkCell {
  int units = 0;
  int dimension = 0;
  double mean_ms = 0.0;
  double sd_ms = 0.0;
};

// Times forward_step + sample on freshly initialised weights, feeding each sample
// back in as the next input. Cells come out ordered by units, then dimension.
std::vector<BenchmarkCell> run_benchmark(
    const BenchmarkGrid& grid, const std::function<void(const BenchmarkCell&)>& on_cell = {});

// Timings (ms) for a single configuration; `repeats - 1` values after the discard.
std::vector<double> time_predictions(int dimension, int units, const BenchmarkGrid& grid);

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkCell>& cells);

}  // namespace mdrnn
