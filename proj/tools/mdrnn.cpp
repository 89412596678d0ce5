#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mdrnn/benchmark.hpp"
#include "mdrnn/checkpoint.hpp"
#include "mdrnn/engine.hpp"
#include "mdrnn/errors.hpp"
#include "mdrnn/trainer.hpp"

using namespace mdrnn;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kRuntimeFailure = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  int dimension = 0;  // 0: take it from the checkpoint (run) or require it
  std::string size = "s";
  int units = 0;
  int layers = 2;
  int mixtures = 5;
  int seq_len = 50;

  ModelConfig config() const {
    ModelConfig c;
    c.dimension = dimension;
    c.layers = layers;
    c.units = units > 0 ? units : units_for_preset(size);
    c.mixtures = mixtures;
    c.seq_len = seq_len;
    return c;
  }
};

struct Options {
  std::string config_file;
  bool verbose = false;
  bool quiet = false;

  ModelFlags model;
  WireConfig wire;
  double duration = 0.0;  // seconds; 0 runs until interrupted

  std::string mode = "call-and-response";
  double pi_temp = 1.0;
  double sigma_temp = 1.0;
  double timeout = 2.0;
  std::int64_t sampling_seed = -1;
  std::string checkpoint;

  std::string data_dir;
  TrainRun train;
  bool no_early_stop = false;
  std::string output = "model.ckpt";
  std::string history = "history.csv";

  BenchmarkGrid bench;
  std::string bench_output;
};

CLI::Validator mode_validator() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        if (parse_mode(s)) return {};
        return "unknown mode '" + s + "'; choose one of: " + mode_list();
      },
      "MODE", "interaction mode");
}

CLI::Validator preset_validator() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          units_for_preset(s);
          return {};
        } catch (const std::invalid_argument&) {
          return "unknown size '" + s + "'; choose one of: s, m, l, xl";
        }
      },
      "s|m|l|xl", "size preset");
}

void add_model_flags(CLI::App* cmd, ModelFlags& m, bool architecture) {
  cmd->add_option("--dimension,-n", m.dimension, "Values per event including dt (N)")
      ->check(CLI::Range(2, 64));
  if (!architecture) return;
  cmd->add_option("--size", m.size, "Preset: s=64, m=128, l=256, xl=512 units")
      ->check(preset_validator());
  cmd->add_option("--units", m.units, "LSTM units per layer (overrides --size)")
      ->check(CLI::Range(1, 4096));
  cmd->add_option("--layers", m.layers, "LSTM layers")->check(CLI::Range(1, 16));
  cmd->add_option("--mixtures", m.mixtures, "Mixture components")->check(CLI::Range(1, 64));
  cmd->add_option("--seq-len", m.seq_len, "Training window length")->check(CLI::Range(1, 100000));
}

void add_wire_flags(CLI::App* cmd, WireConfig& w, bool sends) {
  cmd->add_option("--listen-address", w.listen_address, "Address for incoming OSC");
  cmd->add_option("--listen-port", w.osc_in_port, "Port for incoming OSC");
  if (sends) {
    cmd->add_option("--send-host", w.send_host, "Destination host for predictions");
    cmd->add_option("--send-port", w.osc_out_port, "Destination port for predictions");
  }
  cmd->add_option("--websocket-address", w.websocket_address, "Address for the WebSocket gateway");
  cmd->add_option("--websocket-port", w.websocket_port, "WebSocket gateway port");
  cmd->add_flag("!--no-websocket", w.enable_websocket, "Disable the WebSocket gateway");
  cmd->add_option("--log-dir", w.log_dir, "Directory for session CSV logs");
}

// Applies `[section] key = value` entries to options of `cmd` that were not given
// on the command line. Keys map to flags by replacing '_' with '-'.
void apply_config_file(const std::string& path, CLI::App& app, CLI::App* cmd) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  static const std::set<std::string> sections = {"model", "wire", "sampling", "training", "benchmark"};
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1 || !sections.count(item.parents[0])) {
      throw UsageError("config file " + path + ": '" + item.fullname() +
                       "' is not inside one of [model], [wire], [sampling], [training], [benchmark]");
    }
    std::string flag = "--" + item.name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* opt = cmd->get_option_no_throw(flag);
    if (!opt) {
      bool known = false;
      for (const auto* sub : app.get_subcommands({})) known = known || sub->get_option_no_throw(flag);
      if (!known) throw UsageError("config file " + path + ": unknown key '" + item.fullname() + "'");
      continue;  // belongs to another subcommand
    }
    if (opt->count() > 0) continue;  // command line wins
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config file " + path + ": '" + item.fullname() + "': " + e.what());
    }
  }
}

// Blocks SIGINT/SIGTERM here and in every thread started later.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

void wait_for_stop(const sigset_t& set, double duration) {
  if (duration > 0.0) {
    timespec ts{static_cast<time_t>(duration), static_cast<long>((duration - std::floor(duration)) * 1e9)};
    sigtimedwait(&set, nullptr, &ts);
  } else {
    int sig = 0;
    sigwait(&set, &sig);
  }
}

WireConfig checked_wire(const Options& o) {
  WireConfig w = o.wire;
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return w;
}

int cmd_record(const Options& o) {
  if (o.model.dimension < 2) throw UsageError("record needs --dimension (or [model] dimension)");
  const sigset_t signals = block_stop_signals();
  LiveEngine engine(checked_wire(o), o.model.dimension, nullptr);
  engine.start();
  spdlog::info("recording {}-value /interface messages on UDP port {}; Ctrl-C to stop",
               o.model.dimension - 1, engine.osc_port());
  wait_for_stop(signals, o.duration);
  engine.stop();
  const auto s = engine.stats();
  std::printf("recorded %ld events to %s (%ld rejected, %zu dropped)\n", s.accepted,
              engine.log_paths().interface.c_str(), s.rejected, s.dropped);
  return kOk;
}

int cmd_train(const Options& o) {
  if (o.data_dir.empty()) throw UsageError("train needs --data DIR (or [training] data)");
  if (!std::filesystem::is_directory(o.data_dir)) {
    throw UsageError("data directory " + o.data_dir + " does not exist");
  }
  if (o.model.dimension < 2) throw UsageError("train needs --dimension (or [model] dimension)");
  const ModelConfig cfg = o.model.config();
  TrainRun run = o.train;
  if (o.no_early_stop) run.early_stop_patience = 0;
  try {
    run.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const Dataset ds = load_dataset(o.data_dir, cfg.dimension);
  const auto windows = make_windows(ds, cfg.seq_len);
  if (windows.size() < 2) {
    throw DataError("dataset in " + o.data_dir + " has " + std::to_string(ds.samples()) +
                    " samples in " + std::to_string(ds.sessions.size()) +
                    " sessions, which gives " + std::to_string(windows.size()) +
                    " training windows of length " + std::to_string(cfg.seq_len + 1) +
                    "; record more data or lower --seq-len");
  }
  spdlog::info("model: {} layers x {} units, {} mixtures, dimension {}: {} parameters", cfg.layers,
               cfg.units, cfg.mixtures, cfg.dimension, param_count(cfg));
  spdlog::info("data: {} sessions, {} samples, {} windows", ds.sessions.size(), ds.samples(),
               windows.size());

  const auto result = train(ds, cfg, run, [&](const EpochRecord& r) {
    spdlog::info("epoch {:>4}/{}  train {:.5f}  val {:.5f}", r.epoch, run.epochs, r.train_loss,
                 r.val_loss);
  });
  save_checkpoint(o.output, result.checkpoint);
  write_history_csv(std::filesystem::path(o.history), result.history);
  std::printf("%s: %zu parameters, %d epochs%s, best validation loss %.6f\nhistory: %s\n",
              o.output.c_str(), param_count(cfg), result.checkpoint.meta.epochs_run,
              result.stopped_early ? " (early stop)" : "", result.checkpoint.meta.best_val_loss,
              o.history.c_str());
  return kOk;
}

int cmd_run(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("run needs --checkpoint PATH");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (o.model.dimension != 0 && o.model.dimension != ckpt.config().dimension) {
    throw DataError("checkpoint " + o.checkpoint + " has dimension " +
                    std::to_string(ckpt.config().dimension) + ", but --dimension is " +
                    std::to_string(o.model.dimension));
  }
  PredictorConfig pc;
  pc.mode = *parse_mode(o.mode);
  pc.sampling.pi_temperature = o.pi_temp;
  pc.sampling.sigma_temperature = o.sigma_temp;
  if (o.sampling_seed >= 0) pc.sampling.rng_seed = static_cast<std::uint64_t>(o.sampling_seed);
  pc.response_timeout = o.timeout;
  try {
    pc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const sigset_t signals = block_stop_signals();
  auto weights = std::make_shared<const Weights<float>>(ckpt.weights);
  LiveEngine engine(checked_wire(o), ckpt.config().dimension, weights, pc);
  engine.start();
  spdlog::info("mode {}; OSC in :{} -> out {}:{}; websocket :{}", mode_name(pc.mode),
               engine.osc_port(), o.wire.send_host, o.wire.osc_out_port, engine.websocket_port());
  wait_for_stop(signals, o.duration);
  engine.stop();

  const auto s = engine.stats();
  std::printf("events: %ld accepted, %ld rejected, %zu dropped\n", s.accepted, s.rejected, s.dropped);
  std::printf("predictions: %ld sent, %ld send errors\n", s.predictions, s.send_errors);
  std::printf("latency (forward+sample): n=%ld mean %.3f ms, sd %.3f ms, max %.3f ms\n",
              s.latency.count, s.latency.mean_ms, s.latency.sd_ms(), s.latency.max_ms);
  return kOk;
}

int cmd_benchmark(const Options& o) {
  BenchmarkGrid grid = o.bench;
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto cells = run_benchmark(grid, [](const BenchmarkCell& c) {
    spdlog::info("units {:>4} dimension {}: {:.4f} ms (sd {:.4f})", c.units, c.dimension, c.mean_ms,
                 c.sd_ms);
  });
  if (o.bench_output.empty()) {
    write_benchmark_csv(std::cout, cells);
  } else {
    std::ofstream out(o.bench_output);
    if (!out) throw std::runtime_error("cannot write " + o.bench_output);
    write_benchmark_csv(out, cells);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("mdrnn"));

  Options o;
  CLI::App app{"Mixture density RNN for predictive musical interaction"};
  app.require_subcommand(1);
  app.add_option("--config,-c", o.config_file, "TOML config file ([model] [wire] [sampling] [training] [benchmark])");
  app.add_flag("--verbose,-v", o.verbose, "Debug logging");
  app.add_flag("--quiet,-q", o.quiet, "Warnings and errors only");

  auto* record = app.add_subcommand("record", "Log interface events to CSV without a model");
  add_model_flags(record, o.model, false);
  add_wire_flags(record, o.wire, false);
  record->add_option("--duration", o.duration, "Stop after this many seconds");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a directory of CSV logs");
  add_model_flags(train_cmd, o.model, true);
  train_cmd->add_option("--data,-d", o.data_dir, "Directory of session CSV logs");
  train_cmd->add_option("--epochs", o.train.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", o.train.batch_size, "Windows per batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--patience", o.train.early_stop_patience,
                        "Stop after this many epochs without validation improvement (0: never)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_flag("--no-early-stop", o.no_early_stop, "Run all epochs");
  train_cmd->add_option("--learning-rate", o.train.learning_rate, "Adam learning rate")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--validation-fraction", o.train.validation_fraction, "Held-out fraction")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--seed", o.train.seed, "Seed for initialisation, shuffling and the split");
  train_cmd->add_option("--output,-o", o.output, "Checkpoint path");
  train_cmd->add_option("--history", o.history, "Per-epoch loss CSV path");

  auto* run = app.add_subcommand("run", "Serve predictions live over OSC and WebSocket");
  add_model_flags(run, o.model, false);
  add_wire_flags(run, o.wire, true);
  run->add_option("--checkpoint", o.checkpoint, "Trained model");
  run->add_option("--mode", o.mode, "none | filter | call-and-response | battle")->check(mode_validator());
  run->add_option("--pi-temp", o.pi_temp, "Mixture weight temperature")->check(CLI::NonNegativeNumber);
  run->add_option("--sigma-temp", o.sigma_temp, "Standard deviation temperature")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--timeout", o.timeout, "Call-and-response silence before the model answers (s)")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", o.sampling_seed, "Sampling seed (default: random)");
  run->add_option("--duration", o.duration, "Stop after this many seconds");

  auto* bench = app.add_subcommand("benchmark", "Time forward step + sample across model sizes");
  bench->add_option("--repeats", o.bench.repeats, "Predictions per configuration (first discarded)");
  bench->add_option("--rounds", o.bench.rounds, "Independent runs per configuration; the fastest is reported");
  bench->add_option("--dimensions", o.bench.dimensions, "Dimensions to test")->delimiter(',');
  bench->add_option("--units", o.bench.units, "Unit counts to test")->delimiter(',');
  bench->add_option("--output,-o", o.bench_output, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
    CLI::App* cmd = app.get_subcommands().front();
    if (!o.config_file.empty()) apply_config_file(o.config_file, app, cmd);
    if (o.verbose) spdlog::set_level(spdlog::level::debug);
    if (o.quiet) spdlog::set_level(spdlog::level::warn);

    if (cmd == record) return cmd_record(o);
    if (cmd == train_cmd) return cmd_train(o);
    if (cmd == run) return cmd_run(o);
    return cmd_benchmark(o);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\nRun with --help for usage.\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kDataError;
  } catch (const CheckpointError& e) {
    spdlog::error("{}", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeFailure;
  }
}
