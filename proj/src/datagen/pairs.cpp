#include "dac/datagen/pairs.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dac/common/error.hpp"
#include "dac/datagen/io.hpp"
#include "dac/modelzoo/classifier.hpp"

namespace dac::data {

namespace fs = std::filesystem;

std::vector<PairRecord> load_pair_manifest(const fs::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<PairRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    PairRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.pair_id = j.at("pair_id").get<std::string>();
      r.class_i = j.at("class_i").get<int>();
      r.class_j = j.at("class_j").get<int>();
      r.path_real = j.at("path_real").get<std::string>();
      r.path_counterfactual = j.at("path_counterfactual").get<std::string>();
      if (j.contains("confidence") && !j.at("confidence").is_null()) r.confidence = j.at("confidence").get<double>();
      if (j.contains("accepted")) r.accepted = j.at("accepted").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + e.what());
    }
    if (r.class_i == r.class_j) throw FormatError(where + "class_i equals class_j");
    if (r.class_i < 0 || r.class_j < 0 || (num_classes > 0 && (r.class_i >= num_classes || r.class_j >= num_classes))) {
      throw FormatError(where + "class out of range");
    }
    if (!ids.insert(r.pair_id).second) throw FormatError(where + "duplicate pair_id '" + r.pair_id + "'");
    r.real = read_png_gray(base / r.path_real);
    r.counterfactual = read_png_gray(base / r.path_counterfactual);
    if (!r.real.same_shape(r.counterfactual)) throw DimensionError(where + "real and counterfactual sizes differ");
    out.push_back(std::move(r));
  }
  return out;
}

void write_pair_manifest(const fs::path& path, const std::vector<PairRecord>& records) {
  std::string text;
  for (const PairRecord& r : records) {
    nlohmann::ordered_json j = {{"pair_id", r.pair_id},
                                {"class_i", r.class_i},
                                {"class_j", r.class_j},
                                {"path_real", r.path_real},
                                {"path_counterfactual", r.path_counterfactual}};
    if (r.confidence) j["confidence"] = *r.confidence;
    j["accepted"] = r.accepted;
    text += j.dump() + "\n";
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void save_pairs(const fs::path& dir, const std::string& manifest_name, std::vector<PairRecord>& records) {
  fs::create_directories(dir / "pairs");
  for (PairRecord& r : records) {
    r.path_real = "pairs/" + r.pair_id + "_real.png";
    r.path_counterfactual = "pairs/" + r.pair_id + "_cf.png";
    write_png_gray(dir / r.path_real, r.real);
    write_png_gray(dir / r.path_counterfactual, r.counterfactual);
  }
  write_pair_manifest(dir / manifest_name, records);
}

void score_pairs(std::vector<PairRecord>& pairs, const model::Checkpoint& checkpoint) {
  if (pairs.empty()) return;
  std::vector<grad::Tensor> cfs;
  cfs.reserve(pairs.size());
  const int k = checkpoint.spec.num_classes;
  for (const PairRecord& r : pairs) {
    if (r.class_j < 0 || r.class_j >= k) throw ValueError("pair '" + r.pair_id + "' targets a class the model lacks");
    cfs.push_back(r.counterfactual);
  }
  const grad::Tensor p = model::predict(checkpoint, grad::stack(cfs));
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    pairs[n].confidence = p[n * static_cast<std::size_t>(k) + static_cast<std::size_t>(pairs[n].class_j)];
  }
}

std::vector<PairRecord> select_pairs(const std::vector<PairRecord>& scored, double theta) {
  std::vector<PairRecord> out;
  for (const PairRecord& r : scored) {
    if (!r.confidence) throw ValueError("pair '" + r.pair_id + "' has not been scored");
    if (*r.confidence >= theta) {
      out.push_back(r);
      out.back().accepted = true;
    }
  }
  return out;
}

std::vector<PairRecord> filter_pairs(std::vector<PairRecord> pairs, const model::Checkpoint& checkpoint,
                                     double theta) {
  score_pairs(pairs, checkpoint);
  return select_pairs(pairs, theta);
}

}  // namespace dac::data
