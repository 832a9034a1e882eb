#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dac/dacEval/dac_eval.hpp"

namespace dac::cli {

struct GenDataOptions {
  std::string dataset = "disc-b";  // disc-a | disc-b | mnist
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t size = 128;
  std::filesystem::path out_dir;
  std::filesystem::path mnist_images, mnist_labels;  // mnist only
};

struct TrainOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out;  // checkpoint file
  std::filesystem::path val_dir;  // optional explicit validation dataset
  std::string model = "vgg";
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double split = 0.9;
  std::size_t head_width = 512;
  double dropout = 0.5;
};

struct PairOptions {
  std::filesystem::path data_dir;    // Disc dataset with scenes
  std::filesystem::path ingest;      // or an external pair manifest
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir;
  double theta = 0.8;
  std::uint64_t seed = 0;
  std::size_t max_pairs = 0;  // 0: every sample
};

struct PairSummary {
  std::size_t total = 0, accepted = 0;
  double rate() const { return total ? static_cast<double>(accepted) / static_cast<double>(total) : 0.0; }
};

struct DacOptions {
  std::filesystem::path pairs;  // pair manifest
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir;
  std::vector<std::string> methods;  // empty: all
  std::size_t thresholds = 100;
  std::size_t window = 0;  // 0: 10 px scaled to the input size (5 at 64 px)
  double sigma = 0.0;      // 0: 11 px scaled to the input size (5.5 at 64 px)
  std::size_t ig_steps = 50;
  std::uint64_t seed = 0;
  std::size_t max_pairs = 0;  // 0: all accepted pairs
  std::size_t panels = 0;     // heatmap panels for the first N pairs
  std::size_t workers = 0;    // 0: DAC_WORKERS or the core count
  std::string dataset;        // defaults to the checkpoint's training dataset
};

struct ReportOptions {
  std::vector<std::filesystem::path> inputs;  // aggregate.csv files
  std::filesystem::path out_dir;
};

// Each command writes its outputs plus run.json and prints progress to `log`.
void cmd_gen_data(const GenDataOptions& o, std::ostream& log);
void cmd_train(const TrainOptions& o, std::ostream& log);
PairSummary cmd_pair(const PairOptions& o, std::ostream& log);
struct DacRun {
  std::vector<eval::AggregateRow> aggregate;  // in requested method order
  std::vector<eval::DacResult> results;       // pair-major, then method
};
DacRun cmd_dac(const DacOptions& o, std::ostream& log);
void cmd_report(const ReportOptions& o, std::ostream& log);

/// Worker count: DAC_WORKERS when set and positive, else the core count.
std::size_t default_workers();

/// Parses arguments and dispatches. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dac::cli
