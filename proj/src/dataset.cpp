#include "mdrnn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "mdrnn/errors.hpp"

namespace mdrnn {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  while (true) {
    const auto comma = line.find(',', begin);
    out.push_back(line.substr(begin, comma - begin));
    if (comma == std::string_view::npos) break;
    begin = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field, const std::string& source, std::size_t line) {
  field = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw DataError(source + ":" + std::to_string(line) + ": '" + std::string(field) +
                    "' is not a finite number");
  }
  return v;
}

}  // namespace

RawLog read_csv_log(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty log (missing header)");
  const auto header = split_fields(line);
  if (header.size() < 2 || trim(header[0]) != "time") {
    throw DataError(source + ": header must be 'time,x1,...', got '" + std::string(trim(line)) + "'");
  }
  const std::size_t columns = header.size();

  RawLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != columns) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
    }
    log.times.push_back(parse_number(fields[0], source, line_no));
    std::vector<double> row(columns - 1);
    for (std::size_t c = 1; c < columns; ++c) row[c - 1] = parse_number(fields[c], source, line_no);
    log.values.push_back(std::move(row));
  }
  return log;
}

RawLog read_csv_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open log " + path.string());
  return read_csv_log(in, path.string());
}

Session compute_deltas(const RawLog& log) {
  if (log.rows() < 2) {
    throw DataError("session has " + std::to_string(log.rows()) +
                    " event(s); at least 2 are needed to form a time delta");
  }
  Session out;
  out.reserve(log.rows() - 1);
  std::size_t clamped = 0;
  for (std::size_t i = 1; i < log.rows(); ++i) {
    const double gap = log.times[i] - log.times[i - 1];
    if (gap < 0.0) {
      throw DataError("timestamps go backwards at row " + std::to_string(i) + " (" +
                      std::to_string(log.times[i - 1]) + " -> " + std::to_string(log.times[i]) +
                      ")");
    }
    SampleVector s;
    s.dt = std::clamp(gap, kDtMin, kDtCap);
    s.values = log.values[i];
    for (double& v : s.values) {
      const double c = std::clamp(v, 0.0, 1.0);
      if (c != v) ++clamped;
      v = c;
    }
    out.push_back(std::move(s));
  }
  if (clamped > 0) spdlog::warn("clamped {} control value(s) into [0, 1]", clamped);
  return out;
}

std::size_t Dataset::samples() const {
  return std::accumulate(sessions.begin(), sessions.end(), std::size_t{0},
                         [](std::size_t n, const Session& s) { return n + s.size(); });
}

Dataset load_dataset(const std::filesystem::path& dir, int dimension) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        !name.ends_with("-predictions.csv")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  for (const auto& f : files) {
    const RawLog log = read_csv_log(f);
    if (!log.values.empty() && static_cast<int>(log.values.front().size()) + 1 != dimension) {
      throw DataError(f.string() + " has " + std::to_string(log.values.front().size()) +
                      " control columns; a dimension-" + std::to_string(dimension) +
                      " model needs " + std::to_string(dimension - 1));
    }
    if (log.rows() < 2) {
      spdlog::warn("skipping {}: fewer than two events", f.string());
      continue;
    }
    ds.sessions.push_back(compute_deltas(log));
  }
  if (ds.sessions.empty()) throw DataError("no usable session logs in " + dir.string());
  return ds;
}

std::vector<Window> make_windows(const Dataset& dataset, int seq_len) {
  if (seq_len < 1) throw ShapeError("sequence length must be >= 1");
  std::vector<Window> out;
  const auto need = static_cast<std::size_t>(seq_len);
  for (std::size_t s = 0; s < dataset.sessions.size(); ++s) {
    const std::size_t len = dataset.sessions[s].size();
    for (std::size_t start = 0; start + need < len; ++start) out.push_back({s, start});
  }
  return out;
}

template <typename T>
SequenceBatch<T> make_batch(const Dataset& dataset, std::span<const Window> windows, int seq_len) {
  if (windows.empty()) throw ShapeError("cannot build an empty batch");
  const int n = dataset.sessions.at(windows.front().session).front().dimension();
  const auto b = static_cast<Eigen::Index>(windows.size());
  SequenceBatch<T> out;
  out.inputs.assign(seq_len, Matrix<T>(n, b));
  out.targets.assign(seq_len, Matrix<T>(n, b));
  for (Eigen::Index col = 0; col < b; ++col) {
    const Window& w = windows[col];
    const Session& s = dataset.sessions.at(w.session);
    if (w.start + seq_len >= s.size()) throw ShapeError("window runs past the end of its session");
    for (int t = 0; t <= seq_len; ++t) {
      const SampleVector& x = s[w.start + t];
      if (x.dimension() != n) throw ShapeError("dataset mixes sample dimensions");
      if (t < seq_len) out.inputs[t].col(col) = to_model_input<T>(x);
      if (t > 0) out.targets[t - 1].col(col) = to_model_input<T>(x);
    }
  }
  return out;
}

template SequenceBatch<float> make_batch<float>(const Dataset&, std::span<const Window>, int);
template SequenceBatch<double> make_batch<double>(const Dataset&, std::span<const Window>, int);

Split split_windows(std::vector<Window> windows, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must lie strictly between 0 and 1");
  }
  Rng rng(seed);
  std::shuffle(windows.begin(), windows.end(), rng);
  const auto held =
      static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(windows.size())));
  Split out;
  out.validation.assign(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(held));
  out.train.assign(windows.begin() + static_cast<std::ptrdiff_t>(held), windows.end());
  return out;
}

}  // namespace mdrnn
