#include "dac/cli/outputs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dac/common/error.hpp"
#include "dac/datagen/io.hpp"

namespace dac::cli {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(context + ": bad number '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& context) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(context + ": bad count '" + s + "'");
  return v;
}

std::vector<std::vector<std::string>> parse_table(const std::string& text, const std::string& header,
                                                  const std::string& what) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != header) {
    throw FormatError(what + ": expected header '" + header + "'");
  }
  const std::size_t columns = split(header, ',').size();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split(lines[i], ',');
    if (cells.size() != columns) {
      throw FormatError(what + " line " + std::to_string(i + 1) + ": expected " + std::to_string(columns) + " fields");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c", "#8d6a9f", "#3d3d3d"};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "dac";
  j["version"] = kToolVersion;
  j["command"] = m.command;
  j["config"] = m.config.is_null() ? nlohmann::ordered_json::object() : m.config;
  j["seeds"] = m.seeds.is_null() ? nlohmann::ordered_json::object() : m.seeds;
  j["inputs"] = m.inputs.is_null() ? nlohmann::ordered_json::object() : m.inputs;
  j["outputs"] = m.outputs.is_null() ? nlohmann::ordered_json::object() : m.outputs;
  j["argv"] = m.argv;
  return j;
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_text_atomic(path, to_json(m).dump(2) + "\n");
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return std::string(buf, ptr);
}

std::string dataset_label(const std::string& dataset, const std::string& model) { return dataset + "/" + model; }

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) {
    out += r.dataset + "," + r.model + "," + r.method + "," + std::to_string(r.class_i) + "," +
           std::to_string(r.class_j) + "," + r.pair_id + "," + format_double(r.dac_auc) + "," +
           format_double(r.min_mask_fraction) + "," + format_double(r.min_mask_score) + "\n";
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateLine>& rows) {
  std::string out = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows) {
    out += r.dataset + "," + r.model + "," + r.method + "," + format_double(r.mean_dac) + "," +
           std::to_string(r.pairs) + "," + std::to_string(r.class_pairs) + "\n";
  }
  return out;
}

std::string curves_csv(const std::vector<CurveLine>& curves) {
  std::string out = std::string(kCurvesHeader) + "\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.fractions.size(); ++i) {
      out += c.dataset + "," + c.model + "," + c.method + "," + format_double(c.fractions[i]) + "," +
             format_double(c.mean_delta[i]) + "\n";
    }
  }
  return out;
}

std::string wide_table_csv(const std::vector<AggregateLine>& rows, const std::vector<std::string>& methods,
                           bool mark_best) {
  std::vector<std::string> labels;
  std::map<std::string, std::map<std::string, double>> cells;
  for (const auto& r : rows) {
    const std::string label = dataset_label(r.dataset, r.model);
    if (!cells.count(label)) labels.push_back(label);
    cells[label][r.method] = r.mean_dac;
  }
  std::string out = "Dataset";
  for (const auto& m : methods) out += "," + m;
  if (mark_best) out += ",best";
  out += "\n";
  for (const auto& label : labels) {
    out += label;
    const auto& row = cells[label];
    const std::string* best = nullptr;
    double best_value = 0.0;
    for (const auto& m : methods) {
      out += ",";
      auto it = row.find(m);
      if (it == row.end()) continue;
      out += format_double(it->second);
      if (!best || it->second > best_value) {
        best = &m;
        best_value = it->second;
      }
    }
    if (mark_best) out += "," + (best ? *best : std::string());
    out += "\n";
  }
  return out;
}

std::vector<AggregateLine> parse_aggregate_csv(const std::string& text) {
  std::vector<AggregateLine> out;
  for (const auto& c : parse_table(text, kAggregateHeader, "aggregate csv")) {
    out.push_back({c[0], c[1], c[2], parse_double(c[3], "mean_dac"), parse_size(c[4], "pairs"),
                   parse_size(c[5], "class_pairs")});
  }
  return out;
}

std::vector<CurveLine> parse_curves_csv(const std::string& text) {
  std::vector<CurveLine> out;
  for (const auto& c : parse_table(text, kCurvesHeader, "curves csv")) {
    if (out.empty() || out.back().dataset != c[0] || out.back().model != c[1] || out.back().method != c[2]) {
      out.push_back({c[0], c[1], c[2], {}, {}});
    }
    out.back().fractions.push_back(parse_double(c[3], "fraction"));
    out.back().mean_delta.push_back(parse_double(c[4], "mean_delta"));
  }
  return out;
}

std::string curves_svg(const std::string& title, const std::vector<CurveLine>& curves,
                       const std::vector<std::string>& labels) {
  constexpr double W = 640, H = 420, left = 60, right = 170, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double lo = 0.0, hi = 1.0;
  for (const auto& c : curves) {
    for (double v : c.mean_delta) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  lo = std::floor(lo * 4.0) / 4.0;
  hi = std::ceil(hi * 4.0) / 4.0;
  auto px = [&](double f) { return left + f * pw; };
  auto py = [&](double v) { return top + (hi - v) / (hi - lo) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << svg_escape(title)
    << "</text>\n";
  s << "<g stroke=\"#444\" stroke-width=\"1\" fill=\"none\">\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  if (lo < 0.0) {
    s << "<line x1=\"" << left << "\" y1=\"" << py(0.0) << "\" x2=\"" << left + pw << "\" y2=\"" << py(0.0)
      << "\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>\n";
  }
  s << "</g>\n<g fill=\"#222\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    s << "<text x=\"" << px(f) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << fixed(f, 2)
      << "</text>\n";
  }
  for (double v = lo; v <= hi + 1e-9; v += 0.25) {
    s << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fixed(v, 2)
      << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">mask size (fraction)</text>\n";
  s << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2
    << ")\">change in prediction</text>\n";
  s << "</g>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < curves[i].fractions.size(); ++k) {
      s << (k ? " " : "") << fixed(px(curves[i].fractions[k]), 2) << "," << fixed(py(curves[i].mean_delta[k]), 2);
    }
    s << "\"/>\n";
    const double ly = top + 10 + 16.0 * static_cast<double>(i);
    s << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">"
      << svg_escape(i < labels.size() ? labels[i] : curves[i].method) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_heatmap_png(const std::filesystem::path& path, const grad::Tensor& map, bool is_signed) {
  if (map.rank() != 2) throw DimensionError("heatmap expects an (h, w) map");
  double scale = 0.0;
  for (double v : map.data()) scale = std::max(scale, std::abs(v));
  grad::Tensor img(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double u = scale > 0.0 ? map[i] / scale : 0.0;
    img[i] = is_signed ? 0.5 + 0.5 * u : std::max(u, 0.0);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  data::write_png_gray(path, img);
}

}  // namespace dac::cli
