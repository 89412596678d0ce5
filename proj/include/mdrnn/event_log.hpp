#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace mdrnn {

// Seconds since the first call in this process (steady clock).
double process_time();

// Appends `time,x1,...` rows with six decimals. Thread-safe; buffered writes are
// flushed whenever the last flush is a second old, and on flush()/close.
class CsvEventLog {
 public:
  CsvEventLog(const std::filesystem::path& path, int values_per_row);
  ~CsvEventLog();
  CsvEventLog(const CsvEventLog&) = delete;
  CsvEventLog& operator=(const CsvEventLog&) = delete;

  void append(double time, const std::vector<double>& values);
  void flush();
  void flush_if_due();
  void close();

  const std::filesystem::path& path() const { return path_; }
  std::size_t rows() const;

 private:
  void flush_locked();

  std::filesystem::path path_;
  int width_;
  mutable std::mutex mu_;
  std::FILE* file_ = nullptr;
  std::size_t rows_ = 0;
  std::chrono::steady_clock::time_point last_flush_;
};

struct SessionLogPaths {
  std::filesystem::path interface;
  std::filesystem::path predictions;
};

// `<dir>/<YYYY-mm-ddTHH-MM-SS>.csv` plus a `-predictions.csv` sibling, named by
// the session's wall-clock start. A numeric suffix avoids clobbering.
SessionLogPaths session_log_paths(const std::filesystem::path& dir,
                                  std::chrono::system_clock::time_point start);

std::string format_row(double time, const std::vector<double>& values);

}  // namespace mdrnn
