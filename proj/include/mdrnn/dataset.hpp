#pragma once

// Turning interaction logs into training windows.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "mdrnn/mdn.hpp"
#include "mdrnn/rnn.hpp"

namespace mdrnn {

// Long pauses are capped so idle time does not dominate the loss.
inline constexpr double kDtCap = 5.0;

struct RawLog {
  std::vector<double> times;                // seconds
  std::vector<std::vector<double>> values;  // one row per event, N-1 columns

  std::size_t rows() const { return times.size(); }
};

// Reads a `time,x1,...,x{N-1}` CSV.
RawLog read_csv_log(std::istream& in, const std::string& source = "<stream>");
RawLog read_csv_log(const std::filesystem::path& path);

using Session = std::vector<SampleVector>;

// Row i becomes (t_i - t_{i-1}, values_i) with dt in [kDtMin, kDtCap] and values in
// [0, 1]; the first row has no predecessor and is dropped.
Session compute_deltas(const RawLog& log);

struct Dataset {
  std::vector<Session> sessions;

  std::size_t samples() const;
};

// Every *.csv in `dir` except prediction logs, in filename order. Files with fewer
// than two events are skipped with a warning.
Dataset load_dataset(const std::filesystem::path& dir, int dimension);

struct Window {
  std::size_t session = 0;
  std::size_t start = 0;

  bool operator==(const Window&) const = default;
  auto operator<=>(const Window&) const = default;
};

// Stride-1 windows of seq_len + 1 samples that never cross a session boundary.
std::vector<Window> make_windows(const Dataset& dataset, int seq_len);

// Inputs are window steps 0..seq_len-1, targets steps 1..seq_len.
template <typename T>
SequenceBatch<T> make_batch(const Dataset& dataset, std::span<const Window> windows, int seq_len);

struct Split {
  std::vector<Window> train;
  std::vector<Window> validation;
};

// Random example-level split; round(n * fraction) examples are held out.
Split split_windows(std::vector<Window> windows, double validation_fraction, std::uint64_t seed);

}  // namespace mdrnn
