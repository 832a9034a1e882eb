#include "dac/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "dac/attribution/attribution.hpp"
#include "dac/cli/outputs.hpp"
#include "dac/common/error.hpp"
#include "dac/datagen/disc.hpp"
#include "dac/datagen/io.hpp"
#include "dac/datagen/pairs.hpp"
#include "dac/modelzoo/checkpoint.hpp"
#include "dac/trainer/trainer.hpp"

namespace dac::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

std::string fmt_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Keeps the stored 8-bit levels so filtering sees what the PNG round trip gives back.
grad::Tensor quantize(const grad::Tensor& image) {
  grad::Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = static_cast<double>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0)) / 255.0;
  }
  return out;
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng = data::sample_rng(seed, index);
  return rng();
}

void check_input_size(const model::Checkpoint& ck, const grad::Tensor& image, const std::string& what) {
  const grad::Shape expected{ck.spec.input_channels, ck.spec.input_size, ck.spec.input_size};
  if (image.shape() != expected) {
    throw DimensionError(what + " " + grad::shape_string(image.shape()) + " does not match the checkpoint input " +
                         grad::shape_string(expected));
  }
}

fs::path manifest_path_for_checkpoint(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".run.json");
  return p;
}

// Method families plotted together: standard, discriminative, then baselines.
const std::vector<std::pair<std::string, std::string>> kFamilies = {
    {"ingrads", "d-ingrads"}, {"ig", "d-ig"}, {"dl", "d-dl"}, {"gc", "d-gc"}, {"ggc", "d-ggc"}};

}  // namespace

std::size_t default_workers() {
  if (const char* env = std::getenv("DAC_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void cmd_gen_data(const GenDataOptions& o, std::ostream& log) {
  if (o.count == 0) throw ValueError("count must be positive; nothing to generate");
  if (o.out_dir.empty()) throw ValueError("an output directory is required");
  const int classes = data::num_classes_for(o.dataset);
  std::vector<data::ImageSample> samples;
  std::size_t size = o.size;
  if (o.dataset == "disc-a") {
    samples = data::gen_disc_a(o.seed, o.count, o.size);
  } else if (o.dataset == "disc-b") {
    samples = data::gen_disc_b(o.seed, o.count, o.size);
  } else {
    if (o.mnist_images.empty() || o.mnist_labels.empty()) {
      throw ValueError("mnist needs --mnist-images and --mnist-labels");
    }
    samples = data::load_mnist_idx(o.mnist_images, o.mnist_labels);
    if (samples.size() < o.count) {
      throw ValueError("requested " + std::to_string(o.count) + " samples but the IDX files hold " +
                       std::to_string(samples.size()));
    }
    samples.resize(o.count);
    size = samples.front().image.dim(1);
  }
  const data::DatasetInfo info{o.dataset, size, classes, o.seed, samples.size()};
  data::write_dataset(o.out_dir, info, samples);

  RunManifest m;
  m.command = "gen-data";
  m.config = {{"dataset", o.dataset}, {"count", o.count}, {"size", size}};
  m.seeds = {{"seed", o.seed}};
  if (o.dataset == "mnist") m.inputs = {{"mnist_images", o.mnist_images.string()}, {"mnist_labels", o.mnist_labels.string()}};
  m.outputs = {{"dir", o.out_dir.string()}};
  m.argv = {"gen-data", "--dataset", o.dataset, "--count", std::to_string(o.count), "--seed", std::to_string(o.seed),
            "--size", std::to_string(size), "--out", o.out_dir.string()};
  if (o.dataset == "mnist") {
    m.argv.insert(m.argv.end(), {"--mnist-images", o.mnist_images.string(), "--mnist-labels", o.mnist_labels.string()});
  }
  write_run_manifest(o.out_dir / "run.json", m);
  log << "wrote " << samples.size() << " " << o.dataset << " samples to " << o.out_dir.string() << "\n";
}

void cmd_train(const TrainOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ValueError("an output checkpoint path is required");
  const data::Dataset ds = data::load_dataset(o.data_dir);
  train::TrainConfig config;
  config.epochs = o.epochs;
  config.batch_size = o.batch_size;
  config.learning_rate = o.learning_rate;
  config.seed = o.seed;
  config.split = o.split;
  config.dataset = ds.info.dataset;
  config.model = o.model;
  config.head = {o.head_width, o.dropout};
  train::validate(config);

  auto on_epoch = [&](const train::EpochLog& e) {
    log << "epoch " << e.epoch + 1 << "/" << o.epochs << " loss " << fmt_rate(e.train_loss) << " val_acc "
        << fmt_rate(e.val_accuracy) << std::endl;
  };
  train::TrainResult r;
  if (!o.val_dir.empty()) {
    const data::Dataset val = data::load_dataset(o.val_dir);
    if (val.info.dataset != ds.info.dataset) throw ValueError("validation dataset kind differs from training data");
    r = train::train_classifier(config, ds.samples, val.samples, on_epoch);
  } else {
    r = train::train_classifier(config, ds.samples, on_epoch);
  }
  model::save_checkpoint(r.best, o.out);

  RunManifest m;
  m.command = "train";
  m.config = {{"model", o.model},         {"epochs", o.epochs}, {"batch_size", o.batch_size},
              {"learning_rate", o.learning_rate}, {"split", o.split},   {"head_width", o.head_width},
              {"dropout", o.dropout}};
  m.seeds = {{"seed", o.seed}};
  m.inputs = {{"data", o.data_dir.string()}};
  if (!o.val_dir.empty()) m.inputs["val"] = o.val_dir.string();
  m.outputs = {{"checkpoint", o.out.string()},
               {"best_epoch", r.best_epoch},
               {"val_accuracy", r.best.metadata.val_accuracy}};
  m.argv = {"train", "--data", o.data_dir.string(), "--out", o.out.string(), "--model", o.model,
            "--epochs", std::to_string(o.epochs), "--batch-size", std::to_string(o.batch_size),
            "--lr", format_double(o.learning_rate), "--seed", std::to_string(o.seed),
            "--split", format_double(o.split), "--head-width", std::to_string(o.head_width),
            "--dropout", format_double(o.dropout)};
  if (!o.val_dir.empty()) m.argv.insert(m.argv.end(), {"--val", o.val_dir.string()});
  write_run_manifest(manifest_path_for_checkpoint(o.out), m);
  log << "best epoch " << r.best_epoch + 1 << " val_acc " << fmt_rate(r.best.metadata.val_accuracy) << " -> "
      << o.out.string() << "\n";
}

PairSummary cmd_pair(const PairOptions& o, std::ostream& log) {
  if (!(o.theta >= 0.0 && o.theta <= 1.0)) throw ValueError("theta must lie in [0, 1]");
  if (o.data_dir.empty() == o.ingest.empty()) throw ValueError("give exactly one of --data and --ingest");
  if (o.out_dir.empty()) throw ValueError("an output directory is required");
  const model::Checkpoint ck = model::load_checkpoint(o.checkpoint);
  const int classes = static_cast<int>(ck.spec.num_classes);

  std::vector<data::PairRecord> records;
  std::size_t failed = 0;
  if (!o.ingest.empty()) {
    records = data::load_pair_manifest(o.ingest, classes);
    if (o.max_pairs && records.size() > o.max_pairs) records.resize(o.max_pairs);
    for (auto& r : records) {
      check_input_size(ck, r.real, "pair image");
      r.accepted = false;
      r.confidence.reset();
    }
  } else {
    const data::Dataset ds = data::load_dataset(o.data_dir);
    if (ds.info.dataset != "disc-a" && ds.info.dataset != "disc-b") {
      throw ValueError("analytic counterfactuals exist for disc-a and disc-b only; use --ingest for " +
                       ds.info.dataset);
    }
    if (static_cast<int>(ck.spec.num_classes) != ds.info.num_classes) {
      throw ValueError("checkpoint has " + std::to_string(ck.spec.num_classes) + " classes, dataset has " +
                       std::to_string(ds.info.num_classes));
    }
    data::GeneratorConfig gen;
    gen.image_size = ds.info.image_size;
    const std::size_t n = o.max_pairs ? std::min(o.max_pairs, ds.samples.size()) : ds.samples.size();
    for (std::size_t i = 0; i < n; ++i) {
      const data::ImageSample& s = ds.samples[i];
      if (!s.scene) throw FormatError("sample " + sample_id(i) + " has no scene description");
      check_input_size(ck, s.image, "dataset image");
      std::mt19937_64 rng = data::sample_rng(o.seed, i);
      data::ImageSample cf;
      try {
        if (ds.info.dataset == "disc-b") {
          const int offset = std::uniform_int_distribution<int>(1, classes - 1)(rng);
          cf = data::make_counterfactual_disc_b(s, (s.label + offset) % classes);
        } else {
          cf = data::make_counterfactual_disc_a(s, rng, gen);
        }
      } catch (const GenerationError&) {
        ++failed;
        continue;
      }
      data::PairRecord r;
      r.pair_id = sample_id(i);
      r.class_i = s.label;
      r.class_j = cf.label;
      r.real = s.image;
      r.counterfactual = quantize(cf.image);
      records.push_back(std::move(r));
    }
  }
  const std::size_t total = records.size() + failed;
  std::vector<data::PairRecord> accepted = data::filter_pairs(std::move(records), ck, o.theta);
  data::save_pairs(o.out_dir, "pairs.jsonl", accepted);

  PairSummary summary{total, accepted.size()};
  RunManifest m;
  m.command = "pair";
  m.config = {{"theta", o.theta}, {"max_pairs", o.max_pairs}};
  m.seeds = {{"seed", o.seed}};
  m.inputs = {{"checkpoint", o.checkpoint.string()}};
  if (!o.ingest.empty()) m.inputs["ingest"] = o.ingest.string();
  else m.inputs["data"] = o.data_dir.string();
  m.outputs = {{"manifest", (o.out_dir / "pairs.jsonl").string()},
               {"total", summary.total},
               {"accepted", summary.accepted},
               {"generation_failures", failed}};
  m.argv = {"pair", "--checkpoint", o.checkpoint.string(), "--out", o.out_dir.string(), "--theta",
            format_double(o.theta), "--seed", std::to_string(o.seed), "--max-pairs", std::to_string(o.max_pairs)};
  if (!o.ingest.empty()) m.argv.insert(m.argv.end(), {"--ingest", o.ingest.string()});
  else m.argv.insert(m.argv.end(), {"--data", o.data_dir.string()});
  write_run_manifest(o.out_dir / "run.json", m);
  log << "accepted " << summary.accepted << "/" << summary.total << " pairs (rate " << fmt_rate(summary.rate())
      << ", theta " << format_double(o.theta) << ")";
  if (failed) log << ", " << failed << " counterfactuals could not be generated";
  log << "\n";
  return summary;
}

DacRun cmd_dac(const DacOptions& o, std::ostream& log) {
  if (o.out_dir.empty()) throw ValueError("an output directory is required");
  std::vector<attr::Method> methods;
  if (o.methods.empty()) {
    methods = attr::all_methods();
  } else {
    std::set<attr::Method> seen;
    for (const auto& id : o.methods) {
      const attr::Method m = attr::method_from_id(id);
      if (!seen.insert(m).second) throw ValueError("method '" + id + "' listed twice");
      methods.push_back(m);
    }
  }
  const model::Checkpoint ck = model::load_checkpoint(o.checkpoint);
  std::vector<data::PairRecord> pairs;
  for (auto& p : data::load_pair_manifest(o.pairs, static_cast<int>(ck.spec.num_classes))) {
    if (p.accepted) pairs.push_back(std::move(p));
  }
  if (o.max_pairs && pairs.size() > o.max_pairs) pairs.resize(o.max_pairs);
  if (pairs.empty()) throw ValueError("the manifest holds no accepted pairs");
  for (const auto& p : pairs) check_input_size(ck, p.real, "pair " + p.pair_id + " image");

  const std::string dataset = !o.dataset.empty() ? o.dataset : !ck.metadata.dataset.empty() ? ck.metadata.dataset : "unknown";
  const std::string model_kind = ck.spec.architecture;
  if (!(o.sigma >= 0.0)) throw ValueError("--sigma must be positive");
  eval::CurveConfig curve = eval::scaled_curve_config(ck.spec.input_size, o.thresholds);
  if (o.window) curve.window = o.window;
  if (o.sigma > 0.0) curve.sigma = o.sigma;
  const std::size_t workers = o.workers ? o.workers : default_workers();

  struct Task {
    eval::DacResult result;
    grad::Tensor panel;
    bool is_signed = false;
  };
  const std::size_t total = pairs.size() * methods.size();
  std::vector<Task> tasks(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t t = next++; t < total; t = next++) {
      try {
        const std::size_t p = t / methods.size();
        const attr::Method m = methods[t % methods.size()];
        attr::ComputeOptions copt{o.ig_steps, derived_seed(o.seed, p)};
        const attr::AttributionMap map = attr::compute(m, ck, pairs[p], copt);
        tasks[t].result = eval::evaluate_pair(ck, pairs[p], attr::method_id(m), attr::magnitude(map), curve);
        if (p < o.panels) {
          tasks[t].panel = map.values;
          tasks[t].is_signed = map.is_signed;
        }
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
        return;
      }
      const std::size_t d = ++done;
      if (d % std::max<std::size_t>(10, total / 20) == 0 || d == total) {
        std::lock_guard lock(log_mutex);
        log << "dac: " << d << "/" << total << " maps evaluated" << std::endl;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, total); ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  // Single writer from here on.
  std::vector<eval::DacResult> results;
  std::vector<ResultRow> rows;
  results.reserve(total);
  for (const auto& t : tasks) {
    const auto& r = t.result;
    results.push_back(r);
    rows.push_back({dataset, model_kind, r.method, r.class_i, r.class_j, r.pair_id, r.auc, r.minimal.fraction,
                    r.minimal.score});
  }
  const std::vector<eval::AggregateRow> by_name = eval::aggregate(results);
  std::vector<eval::AggregateRow> ordered;
  std::vector<AggregateLine> lines;
  std::vector<std::string> ids;
  for (attr::Method m : methods) {
    ids.push_back(attr::method_id(m));
    for (const auto& a : by_name) {
      if (a.method == ids.back()) {
        ordered.push_back(a);
        lines.push_back({dataset, model_kind, a.method, a.mean_dac, a.pairs, a.class_pairs});
      }
    }
  }

  std::vector<double> grid(101);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = static_cast<double>(k) / 100.0;
  std::vector<CurveLine> curves;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    CurveLine c{dataset, model_kind, ids[mi], grid, std::vector<double>(grid.size(), 0.0)};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto v = eval::resample_curve(tasks[p * methods.size() + mi].result.curve, grid);
      for (std::size_t k = 0; k < grid.size(); ++k) c.mean_delta[k] += v[k];
    }
    for (double& v : c.mean_delta) v /= static_cast<double>(pairs.size());
    curves.push_back(std::move(c));
  }

  fs::create_directories(o.out_dir);
  write_text_atomic(o.out_dir / "results.csv", results_csv(rows));
  write_text_atomic(o.out_dir / "aggregate.csv", aggregate_csv(lines));
  write_text_atomic(o.out_dir / "table.csv", wide_table_csv(lines, ids, false));
  write_text_atomic(o.out_dir / "mean_curves.csv", curves_csv(curves));

  auto curve_of = [&](const std::string& id) -> const CurveLine* {
    for (const auto& c : curves) {
      if (c.method == id) return &c;
    }
    return nullptr;
  };
  std::vector<std::string> svgs;
  for (const auto& [standard, disc] : kFamilies) {
    std::vector<CurveLine> plot;
    for (const auto& id : {disc, standard, std::string("random"), std::string("residual")}) {
      if (const CurveLine* c = curve_of(id)) plot.push_back(*c);
    }
    if (!curve_of(standard) && !curve_of(disc)) continue;
    std::vector<std::string> labels;
    for (const auto& c : plot) labels.push_back(c.method);
    const std::string name = "curves_" + standard + ".svg";
    write_text_atomic(o.out_dir / name, curves_svg(dataset_label(dataset, model_kind) + ": " + disc + " vs " + standard,
                                                   plot, labels));
    svgs.push_back(name);
  }
  {
    std::vector<std::string> labels(ids.begin(), ids.end());
    write_text_atomic(o.out_dir / "curves_all.svg", curves_svg(dataset_label(dataset, model_kind), curves, labels));
    svgs.push_back("curves_all.svg");
  }
  for (std::size_t p = 0; p < std::min(o.panels, pairs.size()); ++p) {
    const fs::path dir = o.out_dir / "panels" / pairs[p].pair_id;
    fs::create_directories(dir);
    data::write_png_gray(dir / "real.png", pairs[p].real);
    data::write_png_gray(dir / "counterfactual.png", pairs[p].counterfactual);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const Task& t = tasks[p * methods.size() + mi];
      write_heatmap_png(dir / (ids[mi] + ".png"), t.panel, t.is_signed);
    }
  }

  RunManifest m;
  m.command = "dac";
  std::string joined;
  for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
  m.config = {{"methods", ids},       {"thresholds", o.thresholds}, {"window", curve.window},
              {"sigma", curve.sigma}, {"ig_steps", o.ig_steps},     {"max_pairs", o.max_pairs},
              {"panels", o.panels},  {"dataset", dataset},         {"model", model_kind}};
  m.seeds = {{"seed", o.seed}};
  m.inputs = {{"pairs", o.pairs.string()}, {"checkpoint", o.checkpoint.string()}};
  m.outputs = {{"dir", o.out_dir.string()},
               {"files", {"results.csv", "aggregate.csv", "table.csv", "mean_curves.csv"}},
               {"svg", svgs},
               {"pairs", pairs.size()}};
  m.argv = {"dac", "--pairs", o.pairs.string(), "--checkpoint", o.checkpoint.string(), "--out", o.out_dir.string(),
            "--methods", joined, "--thresholds", std::to_string(o.thresholds), "--window", std::to_string(curve.window),
            "--sigma", format_double(curve.sigma), "--ig-steps", std::to_string(o.ig_steps), "--seed",
            std::to_string(o.seed), "--max-pairs", std::to_string(o.max_pairs), "--panels", std::to_string(o.panels),
            "--dataset", dataset};
  write_run_manifest(o.out_dir / "run.json", m);

  log << "method,mean_dac,pairs,class_pairs\n";
  for (const auto& a : ordered) {
    log << a.method << "," << fmt_rate(a.mean_dac) << "," << a.pairs << "," << a.class_pairs << "\n";
  }
  return {std::move(ordered), std::move(results)};
}

void cmd_report(const ReportOptions& o, std::ostream& log) {
  if (o.inputs.empty()) throw ValueError("report needs at least one aggregate.csv");
  if (o.out_dir.empty()) throw ValueError("an output directory is required");
  std::vector<AggregateLine> merged;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::string> methods;
  std::vector<CurveLine> curves;
  std::set<std::tuple<std::string, std::string, std::string>> curve_keys;
  for (const auto& path : o.inputs) {
    for (const auto& line : parse_aggregate_csv(read_text(path))) {
      const auto key = std::make_pair(dataset_label(line.dataset, line.model), line.method);
      auto it = index.find(key);
      if (it != index.end()) {
        const AggregateLine& prev = merged[it->second];
        if (prev.mean_dac != line.mean_dac || prev.pairs != line.pairs || prev.class_pairs != line.class_pairs) {
          throw ValueError("conflicting rows for " + key.first + " / " + key.second + " in " + path.string());
        }
        continue;
      }
      index.emplace(key, merged.size());
      merged.push_back(line);
      if (std::find(methods.begin(), methods.end(), line.method) == methods.end()) methods.push_back(line.method);
    }
    const fs::path curve_path = path.parent_path() / "mean_curves.csv";
    if (fs::exists(curve_path)) {
      for (auto& c : parse_curves_csv(read_text(curve_path))) {
        if (curve_keys.insert({c.dataset, c.model, c.method}).second) curves.push_back(std::move(c));
      }
    }
  }
  fs::create_directories(o.out_dir);
  const std::string table = wide_table_csv(merged, methods, true);
  write_text_atomic(o.out_dir / "table.csv", table);
  write_text_atomic(o.out_dir / "aggregate.csv", aggregate_csv(merged));
  if (!curves.empty()) {
    std::vector<std::string> labels;
    for (const auto& c : curves) labels.push_back(dataset_label(c.dataset, c.model) + " " + c.method);
    write_text_atomic(o.out_dir / "curves.svg", curves_svg("mean change in prediction", curves, labels));
  }

  RunManifest m;
  m.command = "report";
  json inputs = json::array();
  m.argv = {"report", "--out", o.out_dir.string()};
  for (const auto& p : o.inputs) {
    inputs.push_back(p.string());
    m.argv.push_back(p.string());
  }
  m.inputs = {{"aggregates", inputs}};
  m.outputs = {{"dir", o.out_dir.string()}, {"rows", merged.size()}, {"curves", curves.size()}};
  write_run_manifest(o.out_dir / "run.json", m);
  log << table;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discriminative attribution from counterfactuals: data, training, pairs, evaluation, reports", "dac"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenDataOptions gen;
  std::string gen_out, mnist_images, mnist_labels;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset (or import MNIST IDX files)");
  g->add_option("--dataset", gen.dataset, "disc-a, disc-b or mnist")->check(CLI::IsMember({"disc-a", "disc-b", "mnist"}));
  g->add_option("--count", gen.count, "Number of samples")->required();
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--size", gen.size, "Image side length")->check(CLI::PositiveNumber);
  g->add_option("--out", gen_out, "Output directory")->required();
  g->add_option("--mnist-images", mnist_images, "IDX image file (mnist)");
  g->add_option("--mnist-labels", mnist_labels, "IDX label file (mnist)");

  TrainOptions tr;
  std::string tr_data, tr_out, tr_val;
  auto* t = app.add_subcommand("train", "Train a classifier and keep the best validation epoch");
  t->add_option("--data", tr_data, "Dataset directory")->required();
  t->add_option("--out", tr_out, "Checkpoint file to write")->required();
  t->add_option("--val", tr_val, "Separate validation dataset (default: carve --split from --data)");
  t->add_option("--model", tr.model, "vgg or resnet")->check(CLI::IsMember({"vgg", "resnet"}));
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--lr", tr.learning_rate);
  t->add_option("--seed", tr.seed);
  t->add_option("--split", tr.split, "Train fraction");
  t->add_option("--head-width", tr.head_width, "Width of the two hidden classifier layers");
  t->add_option("--dropout", tr.dropout);

  PairOptions pa;
  std::string pa_data, pa_ingest, pa_ck, pa_out;
  auto* p = app.add_subcommand("pair", "Create counterfactual pairs and keep those the classifier accepts");
  p->add_option("--data", pa_data, "Disc dataset directory");
  p->add_option("--ingest", pa_ingest, "External pair manifest instead of --data");
  p->add_option("--checkpoint", pa_ck)->required();
  p->add_option("--out", pa_out, "Output directory")->required();
  p->add_option("--theta", pa.theta, "Minimum f(x_c)_j");
  p->add_option("--seed", pa.seed);
  p->add_option("--max-pairs", pa.max_pairs, "Use only the first N samples (0: all)");

  DacOptions da;
  std::string da_pairs, da_ck, da_out, da_methods;
  auto* d = app.add_subcommand("dac", "Attribute, sweep masks and score every accepted pair");
  d->add_option("--pairs", da_pairs, "Pair manifest")->required();
  d->add_option("--checkpoint", da_ck)->required();
  d->add_option("--out", da_out, "Output directory")->required();
  d->add_option("--methods", da_methods, "Comma separated method ids (default: all)");
  d->add_option("--thresholds", da.thresholds);
  d->add_option("--window", da.window, "Closing window (default: 10 px scaled by input size / 128)");
  d->add_option("--sigma", da.sigma, "Mask blur sigma (default: 11 px scaled by input size / 128)");
  d->add_option("--ig-steps", da.ig_steps);
  d->add_option("--seed", da.seed, "Seed for the random baseline");
  d->add_option("--max-pairs", da.max_pairs);
  d->add_option("--panels", da.panels, "Write heatmap panels for the first N pairs");
  d->add_option("--workers", da.workers, "Worker threads (default: DAC_WORKERS or core count)");
  d->add_option("--dataset", da.dataset, "Dataset label for the tables (default: from the checkpoint)");

  ReportOptions re;
  std::vector<std::string> re_inputs;
  std::string re_out;
  auto* r = app.add_subcommand("report", "Merge aggregate.csv files into one table and curve overlay");
  r->add_option("inputs", re_inputs, "aggregate.csv files")->required();
  r->add_option("--out", re_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (g->parsed()) {
      gen.out_dir = gen_out;
      gen.mnist_images = mnist_images;
      gen.mnist_labels = mnist_labels;
      cmd_gen_data(gen, out);
    } else if (t->parsed()) {
      tr.data_dir = tr_data;
      tr.out = tr_out;
      tr.val_dir = tr_val;
      cmd_train(tr, out);
    } else if (p->parsed()) {
      pa.data_dir = pa_data;
      pa.ingest = pa_ingest;
      pa.checkpoint = pa_ck;
      pa.out_dir = pa_out;
      cmd_pair(pa, out);
    } else if (d->parsed()) {
      da.pairs = da_pairs;
      da.checkpoint = da_ck;
      da.out_dir = da_out;
      if (!da_methods.empty()) {
        std::string cur;
        for (char c : da_methods + ",") {
          if (c == ',') {
            if (!cur.empty()) da.methods.push_back(cur);
            cur.clear();
          } else if (c != ' ') {
            cur += c;
          }
        }
      }
      cmd_dac(da, out);
    } else if (r->parsed()) {
      for (const auto& s : re_inputs) re.inputs.emplace_back(s);
      re.out_dir = re_out;
      cmd_report(re, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dac::cli
