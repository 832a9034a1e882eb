#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dac/dacEval/dac_eval.hpp"
#include "dac/gradcore/tensor.hpp"

namespace dac::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Written as run.json next to every output. No timestamps or host data, so
/// reruns reproduce it byte for byte.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;   // every resolved flag, defaults included
  nlohmann::ordered_json seeds;
  nlohmann::ordered_json inputs;
  nlohmann::ordered_json outputs;
  std::vector<std::string> argv;  // canonical flags that rerun the command
};

nlohmann::ordered_json to_json(const RunManifest& m);
void write_run_manifest(const std::filesystem::path& path, const RunManifest& m);

/// Writes through a temporary sibling then renames into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Shortest decimal that round-trips the double.
std::string format_double(double v);

// results.csv: one row per (pair, method).
inline constexpr const char* kResultsHeader =
    "dataset,model,method,class_i,class_j,pair_id,dac_auc,min_mask_fraction,min_mask_score";
// aggregate.csv: one row per method, two-stage mean.
inline constexpr const char* kAggregateHeader = "dataset,model,method,mean_dac,pairs,class_pairs";
// mean_curves.csv: per method, mean delta f resampled on a fixed fraction grid.
inline constexpr const char* kCurvesHeader = "dataset,model,method,fraction,mean_delta";

struct ResultRow {
  std::string dataset, model, method;
  int class_i = 0, class_j = 0;
  std::string pair_id;
  double dac_auc = 0.0, min_mask_fraction = 0.0, min_mask_score = 0.0;
};

struct AggregateLine {
  std::string dataset, model, method;
  double mean_dac = 0.0;
  std::size_t pairs = 0, class_pairs = 0;
};

struct CurveLine {
  std::string dataset, model, method;
  std::vector<double> fractions, mean_delta;
};

/// Label used in the Dataset column of wide tables: "<dataset>/<model>".
std::string dataset_label(const std::string& dataset, const std::string& model);

std::string results_csv(const std::vector<ResultRow>& rows);
std::string aggregate_csv(const std::vector<AggregateLine>& rows);
std::string curves_csv(const std::vector<CurveLine>& curves);

/// Wide table: Dataset, then one column per method in `methods` order; a
/// missing cell stays empty. With `mark_best`, a trailing best column names the
/// highest-scoring method per row.
std::string wide_table_csv(const std::vector<AggregateLine>& rows, const std::vector<std::string>& methods,
                           bool mark_best);

/// Throws FormatError when the header does not match.
std::vector<AggregateLine> parse_aggregate_csv(const std::string& text);
std::vector<CurveLine> parse_curves_csv(const std::string& text);

/// Line plot of delta f over mask fraction: axes, ticks, one polyline per curve, legend.
std::string curves_svg(const std::string& title, const std::vector<CurveLine>& curves,
                       const std::vector<std::string>& labels);

/// Heatmap as 8-bit grayscale. Nonnegative maps: 0 -> black, max -> white.
/// Signed maps: 0 -> mid-gray (128), +max|v| -> white, -max|v| -> black.
void write_heatmap_png(const std::filesystem::path& path, const grad::Tensor& map, bool is_signed);

}  // namespace dac::cli
