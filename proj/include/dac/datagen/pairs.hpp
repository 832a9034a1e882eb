#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dac/gradcore/tensor.hpp"
#include "dac/modelzoo/checkpoint.hpp"

namespace dac::data {

/// A real image x_o of class i and its counterfactual x_c targeting class j.
struct PairRecord {
  std::string pair_id;
  int class_i = 0;
  int class_j = 0;
  grad::Tensor real;            // (1, h, w)
  grad::Tensor counterfactual;  // (1, h, w)
  std::string path_real;        // relative to the manifest's directory
  std::string path_counterfactual;
  std::optional<double> confidence;  // f(x_c)_j once scored
  bool accepted = false;
};

/// One JSON object per line with pair_id, class_i, class_j, path_real,
/// path_counterfactual and optionally confidence/accepted. Blank lines are
/// skipped. `num_classes` > 0 enables the class range check.
std::vector<PairRecord> load_pair_manifest(const std::filesystem::path& path, int num_classes = 0);

/// Writes manifest lines only; images must already exist at the record paths.
void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairRecord>& records);

/// Writes each record's images as PNG under `dir` and the manifest next to them.
void save_pairs(const std::filesystem::path& dir, const std::string& manifest_name, std::vector<PairRecord>& records);

/// Sets confidence = f(x_c)_j on every record.
void score_pairs(std::vector<PairRecord>& pairs, const model::Checkpoint& checkpoint);

/// Scores the pairs and returns the ones with f(x_c)_j >= theta, marked accepted.
std::vector<PairRecord> filter_pairs(std::vector<PairRecord> pairs, const model::Checkpoint& checkpoint,
                                     double theta = 0.8);

/// Acceptance among already-scored records, without running the model again.
std::vector<PairRecord> select_pairs(const std::vector<PairRecord>& scored, double theta);

}  // namespace dac::data
