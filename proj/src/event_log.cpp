#include "mdrnn/event_log.hpp"

#include <ctime>

#include "mdrnn/errors.hpp"

namespace mdrnn {

double process_time() {
  static const auto start = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format_row(double time, const std::vector<double>& values) {
  std::string row;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", time);
  row += buf;
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), ",%.6f", v);
    row += buf;
  }
  row += '\n';
  return row;
}

CsvEventLog::CsvEventLog(const std::filesystem::path& path, int values_per_row)
    : path_(path), width_(values_per_row), last_flush_(std::chrono::steady_clock::now()) {
  if (values_per_row < 1) throw std::invalid_argument("log rows need at least one value");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path.c_str(), "w");
  if (!file_) throw std::runtime_error("cannot create log file " + path.string());
  std::string header = "time";
  for (int i = 1; i <= width_; ++i) header += ",x" + std::to_string(i);
  header += '\n';
  if (std::fputs(header.c_str(), file_) < 0) throw std::runtime_error("cannot write " + path.string());
  std::fflush(file_);
}

CsvEventLog::~CsvEventLog() { close(); }

void CsvEventLog::append(double time, const std::vector<double>& values) {
  if (static_cast<int>(values.size()) != width_) {
    throw ShapeError("log row has " + std::to_string(values.size()) + " values, file has " +
                     std::to_string(width_));
  }
  const std::string row = format_row(time, values);
  std::lock_guard lock(mu_);
  if (!file_) throw std::runtime_error("log file " + path_.string() + " is closed");
  if (std::fputs(row.c_str(), file_) < 0) {
    throw std::runtime_error("write to " + path_.string() + " failed");
  }
  ++rows_;
  if (std::chrono::steady_clock::now() - last_flush_ >= std::chrono::seconds(1)) flush_locked();
}

void CsvEventLog::flush_locked() {
  if (file_ && std::fflush(file_) != 0) throw std::runtime_error("flush of " + path_.string() + " failed");
  last_flush_ = std::chrono::steady_clock::now();
}

void CsvEventLog::flush() {
  std::lock_guard lock(mu_);
  flush_locked();
}

void CsvEventLog::flush_if_due() {
  std::lock_guard lock(mu_);
  if (std::chrono::steady_clock::now() - last_flush_ >= std::chrono::milliseconds(500)) flush_locked();
}

void CsvEventLog::close() {
  std::lock_guard lock(mu_);
  if (file_) {
    std::fclose(file_);
    file_ = nullptr;
  }
}

std::size_t CsvEventLog::rows() const {
  std::lock_guard lock(mu_);
  return rows_;
}

SessionLogPaths session_log_paths(const std::filesystem::path& dir,
                                  std::chrono::system_clock::time_point start) {
  const std::time_t t = std::chrono::system_clock::to_time_t(start);
  std::tm tm{};
  localtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H-%M-%S", &tm);
  for (int n = 0;; ++n) {
    const std::string stem = n == 0 ? std::string(stamp) : std::string(stamp) + "-" + std::to_string(n);
    SessionLogPaths p{dir / (stem + ".csv"), dir / (stem + "-predictions.csv")};
    if (!std::filesystem::exists(p.interface) && !std::filesystem::exists(p.predictions)) return p;
  }
}

}  // namespace mdrnn
