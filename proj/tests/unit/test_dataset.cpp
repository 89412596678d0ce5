#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mdrnn/dataset.hpp"
#include "mdrnn/errors.hpp"

using namespace mdrnn;

namespace {

RawLog make_log(std::vector<double> times, std::vector<std::vector<double>> values) {
  return RawLog{std::move(times), std::move(values)};
}

Session constant_session(std::size_t n, int dimension = 2) {
  return Session(n, SampleVector{0.05, std::vector<double>(dimension - 1, 0.5)});
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("mdrnn-ds-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("compute_deltas subtracts consecutive timestamps and drops the first row") {
  const auto s = compute_deltas(make_log({0.0, 0.5, 1.2}, {{0.1}, {0.2}, {0.3}}));
  REQUIRE(s.size() == 2);
  CHECK(s[0].dt == doctest::Approx(0.5));
  CHECK(s[0].values == std::vector<double>{0.2});
  CHECK(s[1].dt == doctest::Approx(0.7));
  CHECK(s[1].values == std::vector<double>{0.3});
}

TEST_CASE("compute_deltas caps long gaps and floors simultaneous events") {
  const auto s = compute_deltas(make_log({0.0, 60.0, 60.0}, {{0.1}, {0.2}, {0.3}}));
  CHECK(s[0].dt == kDtCap);
  CHECK(s[0].dt == 5.0);
  CHECK(s[1].dt == kDtMin);
}

TEST_CASE("compute_deltas clamps values into the unit range") {
  const auto s = compute_deltas(make_log({0.0, 1.0}, {{0.5, 0.5}, {1.2, -0.4}}));
  CHECK(s[0].values == std::vector<double>{1.0, 0.0});
}

TEST_CASE("compute_deltas errors") {
  CHECK_THROWS_AS(compute_deltas(make_log({0.0}, {{0.1}})), DataError);
  CHECK_THROWS_AS(compute_deltas(make_log({}, {})), DataError);
  try {
    compute_deltas(make_log({0.0, 1.0, 0.5, 2.0}, {{0.1}, {0.2}, {0.3}, {0.4}}));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("CSV logs parse and validate") {
  std::istringstream ok("time,x1,x2\n0.0,0.1,0.2\r\n0.25,0.3,0.4\n\n");
  const auto log = read_csv_log(ok);
  REQUIRE(log.rows() == 2);
  CHECK(log.times[1] == 0.25);
  CHECK(log.values[1] == std::vector<double>{0.3, 0.4});

  std::istringstream bad_header("t,x1\n0,0\n");
  CHECK_THROWS_AS(read_csv_log(bad_header), DataError);
  std::istringstream ragged("time,x1\n0,0.1\n1,0.2,0.3\n");
  CHECK_THROWS_AS(read_csv_log(ragged), DataError);
  std::istringstream junk("time,x1\n0,abc\n");
  CHECK_THROWS_AS(read_csv_log(junk), DataError);
}

TEST_CASE("load_dataset reads interface logs and ignores prediction logs") {
  TempDir dir;
  {
    std::ofstream(dir.path / "b.csv") << "time,x1\n0,0.1\n0.1,0.2\n0.3,0.3\n";
    std::ofstream(dir.path / "a.csv") << "time,x1\n10,0.5\n10.5,0.6\n";
    std::ofstream(dir.path / "a-predictions.csv") << "time,x1\n0,0.9\n1,0.9\n2,0.9\n";
    std::ofstream(dir.path / "single.csv") << "time,x1\n0,0.1\n";
    std::ofstream(dir.path / "notes.txt") << "ignore me";
  }
  const auto ds = load_dataset(dir.path, 2);
  REQUIRE(ds.sessions.size() == 2);
  CHECK(ds.sessions[0].size() == 1);  // a.csv sorts first
  CHECK(ds.sessions[1].size() == 2);
  CHECK(ds.samples() == 3);
  CHECK_THROWS_AS(load_dataset(dir.path, 3), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path / "missing", 2), DataError);
}

TEST_CASE("window counts") {
  SUBCASE("52 samples, seq_len 50") {
    Dataset ds{{constant_session(52)}};
    CHECK(make_windows(ds, 50).size() == 2);
  }
  SUBCASE("exactly seq_len samples is not enough") {
    Dataset ds{{constant_session(50)}};
    CHECK(make_windows(ds, 50).empty());
  }
  SUBCASE("two sessions of 60") {
    Dataset ds{{constant_session(60), constant_session(60)}};
    const auto w = make_windows(ds, 50);
    CHECK(w.size() == 20);
    for (const auto& win : w) CHECK(win.start + 50 < 60);
  }
}

TEST_CASE("windowing is exhaustive and never spans sessions") {
  Rng rng(4);
  std::uniform_int_distribution<int> len(0, 40), sl(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    Dataset ds;
    std::size_t expected = 0;
    const int seq_len = sl(rng);
    for (int s = 0; s < 5; ++s) {
      const int l = len(rng);
      ds.sessions.push_back(constant_session(l));
      expected += static_cast<std::size_t>(std::max(0, l - seq_len));
    }
    const auto w = make_windows(ds, seq_len);
    CHECK(w.size() == expected);
    std::set<Window> unique(w.begin(), w.end());
    CHECK(unique.size() == w.size());
    for (const auto& win : w) CHECK(win.start + seq_len < ds.sessions[win.session].size());
  }
}

TEST_CASE("batches shift targets by one step") {
  Session s;
  for (int i = 0; i < 6; ++i) s.push_back({0.01 * (i + 1), {0.1 * i}});
  Dataset ds{{s}};
  const auto windows = make_windows(ds, 3);
  const auto b = make_batch<double>(ds, std::span(windows).subspan(1, 2), 3);
  REQUIRE(b.steps() == 3);
  CHECK(b.batch() == 2);
  CHECK(b.dimension() == 2);
  CHECK(b.inputs[0](0, 0) == doctest::Approx(0.02));
  CHECK(b.targets[0](0, 0) == doctest::Approx(0.03));
  CHECK(b.targets[2](1, 1) == doctest::Approx(0.5));
  CHECK(b.inputs[1] == b.targets[0]);
}

TEST_CASE("validation split sizes and disjointness") {
  std::vector<Window> all;
  for (std::size_t i = 0; i < 1000; ++i) all.push_back({i / 100, i % 100});
  const auto split = split_windows(all, 0.10, 7);
  CHECK(split.train.size() == 900);
  CHECK(split.validation.size() == 100);
  std::set<Window> train(split.train.begin(), split.train.end());
  for (const auto& v : split.validation) CHECK(train.count(v) == 0);
  std::set<Window> both = train;
  both.insert(split.validation.begin(), split.validation.end());
  CHECK(both.size() == 1000);

  const auto again = split_windows(all, 0.10, 7);
  CHECK(again.validation == split.validation);
  CHECK_THROWS(split_windows(all, 1.0, 7));
  CHECK_THROWS(split_windows(all, 0.0, 7));
}
