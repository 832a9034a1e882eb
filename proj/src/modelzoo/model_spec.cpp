#include "dac/modelzoo/model_spec.hpp"

#include <array>
#include <set>

#include <json.hpp>

#include "dac/common/error.hpp"
#include "dac/gradcore/ops.hpp"

namespace dac::model {

namespace {

constexpr std::array<std::size_t, 4> kChannelLadder{12, 24, 48, 96};

const std::array<std::pair<LayerKind, const char*>, 8> kKindNames{{
    {LayerKind::Conv2d, "conv2d"},
    {LayerKind::BatchNorm2d, "batchnorm2d"},
    {LayerKind::ReLU, "relu"},
    {LayerKind::MaxPool2d, "maxpool2d"},
    {LayerKind::ResBlock, "resblock"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::Linear, "linear"},
    {LayerKind::Dropout, "dropout"},
}};

class Builder {
 public:
  explicit Builder(ModelSpec& spec) : spec_(spec) {}

  void conv(std::size_t in, std::size_t out, std::size_t kernel = 3, std::size_t stride = 1, int pad = 1) {
    push({LayerKind::Conv2d, "conv", in, out, kernel, stride, pad, pad, 0.0});
  }
  void batchnorm(std::size_t channels) { push({LayerKind::BatchNorm2d, "bn", channels, channels}); }
  void relu() { push({LayerKind::ReLU, "relu"}); }
  void pool() { push({LayerKind::MaxPool2d, "pool", 0, 0, 2, 2}); }
  void resblock(std::size_t in, std::size_t out, std::size_t stride) {
    push({LayerKind::ResBlock, "block", in, out, 3, stride});
  }
  void flatten() { push({LayerKind::Flatten, "flatten"}); }
  void linear(std::size_t in, std::size_t out) { push({LayerKind::Linear, "fc", in, out}); }
  void dropout(double p) { push({LayerKind::Dropout, "dropout", 0, 0, 0, 1, 0, 0, p}); }

  void head(std::size_t features, std::size_t classes, const HeadConfig& h) {
    spec_.gradcam_layer = spec_.layers.back().name;
    flatten();
    linear(features, h.width);
    relu();
    dropout(h.dropout);
    linear(h.width, h.width);
    relu();
    dropout(h.dropout);
    linear(h.width, classes);
  }

 private:
  void push(LayerSpec layer) {
    layer.name += std::to_string(spec_.layers.size());
    spec_.layers.push_back(std::move(layer));
  }
  ModelSpec& spec_;
};

void check_classes(std::size_t num_classes) {
  if (num_classes < 2) throw ValueError("a classifier needs at least 2 classes");
}

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& [k, n] : kKindNames)
    if (k == kind) return n;
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (const auto& [k, n] : kKindNames)
    if (s == n) return k;
  throw FormatError("unknown layer kind '" + s + "'");
}

ModelSpec build_vgg(std::size_t input_size, std::size_t num_classes, const HeadConfig& head) {
  std::size_t pools = 0;
  switch (input_size) {
    case 128: pools = 4; break;
    case 64: pools = 3; break;
    case 28: pools = 2; break;
    default: throw ValueError("build_vgg: unsupported input size " + std::to_string(input_size));
  }
  check_classes(num_classes);
  ModelSpec spec{"vgg", input_size, 1, num_classes, {}, {}};
  Builder b(spec);
  std::size_t in = 1, extent = input_size;
  for (std::size_t stage = 0; stage < kChannelLadder.size(); ++stage) {
    const std::size_t out = kChannelLadder[stage];
    b.conv(in, out);
    b.batchnorm(out);
    b.relu();
    b.conv(out, out);
    b.batchnorm(out);
    b.relu();
    if (stage < pools) {
      b.pool();
      extent /= 2;
    }
    in = out;
  }
  b.head(in * extent * extent, num_classes, head);
  validate(spec);
  return spec;
}

ModelSpec build_resnet(std::size_t input_size, std::size_t num_classes, const HeadConfig& head) {
  if (input_size != 128 && input_size != 64 && input_size != 28) {
    throw ValueError("build_resnet: unsupported input size " + std::to_string(input_size));
  }
  check_classes(num_classes);
  ModelSpec spec{"resnet", input_size, 1, num_classes, {}, {}};
  Builder b(spec);
  b.conv(1, kChannelLadder[0]);
  b.batchnorm(kChannelLadder[0]);
  b.relu();
  std::size_t in = kChannelLadder[0], extent = input_size;
  for (std::size_t out : kChannelLadder) {
    b.resblock(in, out, 2);
    b.resblock(out, out, 1);
    extent /= 2;
    in = out;
  }
  b.head(in * extent * extent, num_classes, head);
  validate(spec);
  return spec;
}

std::vector<grad::Shape> layer_output_shapes(const ModelSpec& spec) {
  if (spec.input_size == 0 || spec.input_channels == 0) throw ValueError("model spec has empty input");
  std::vector<grad::Shape> shapes;
  grad::Shape cur{spec.input_channels, spec.input_size, spec.input_size};
  auto need_image = [&](const LayerSpec& l) {
    if (cur.size() != 3) throw DimensionError(l.name + ": expects an image-shaped input");
  };
  auto need_channels = [&](const LayerSpec& l, std::size_t c) {
    if (cur[0] != c) {
      throw DimensionError(l.name + ": expects " + std::to_string(c) + " channels, got " + std::to_string(cur[0]));
    }
  };
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv2d: {
        need_image(l);
        need_channels(l, l.in_channels);
        const grad::ConvGeometry g{l.stride, l.pad_begin, l.pad_end};
        cur = {l.out_channels, grad::conv_output_extent(cur[1], l.kernel, g),
               grad::conv_output_extent(cur[2], l.kernel, g)};
        break;
      }
      case LayerKind::BatchNorm2d:
        need_image(l);
        need_channels(l, l.in_channels);
        break;
      case LayerKind::ReLU:
      case LayerKind::Dropout:
        break;
      case LayerKind::MaxPool2d:
        need_image(l);
        if (cur[1] % l.stride != 0 || cur[2] % l.stride != 0) {
          throw DimensionError(l.name + ": extent " + grad::shape_string(cur) + " not divisible by stride");
        }
        cur = {cur[0], (cur[1] - l.kernel) / l.stride + 1, (cur[2] - l.kernel) / l.stride + 1};
        break;
      case LayerKind::ResBlock:
        need_image(l);
        need_channels(l, l.in_channels);
        if (l.stride != 1 && l.stride != 2) throw ValueError(l.name + ": residual stride must be 1 or 2");
        cur = {l.out_channels, cur[1] / l.stride, cur[2] / l.stride};
        if (cur[1] == 0 || cur[2] == 0) throw DimensionError(l.name + ": extent collapsed to zero");
        break;
      case LayerKind::Flatten:
        cur = {grad::shape_size(cur)};
        break;
      case LayerKind::Linear:
        if (cur.size() != 1 || cur[0] != l.in_channels) {
          throw DimensionError(l.name + ": expects " + std::to_string(l.in_channels) + " features, got " +
                               grad::shape_string(cur));
        }
        cur = {l.out_channels};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate(const ModelSpec& spec) {
  const auto shapes = layer_output_shapes(spec);
  if (shapes.empty() || shapes.back() != grad::Shape{spec.num_classes}) {
    throw DimensionError("model output does not produce " + std::to_string(spec.num_classes) + " classes");
  }
  std::set<std::string> names;
  bool gradcam_found = spec.gradcam_layer.empty() || spec.gradcam_layer == "input";
  for (const LayerSpec& l : spec.layers) {
    if (!names.insert(l.name).second) throw ValueError("duplicate layer name '" + l.name + "'");
    if (l.name == spec.gradcam_layer) gradcam_found = true;
    if (l.kind == LayerKind::Dropout && !(l.dropout >= 0.0 && l.dropout < 1.0)) {
      throw ValueError(l.name + ": dropout probability must lie in [0, 1)");
    }
  }
  if (!gradcam_found) throw ValueError("GradCAM layer '" + spec.gradcam_layer + "' is not in the model spec");
}

std::string to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["architecture"] = spec.architecture;
  j["input_size"] = spec.input_size;
  j["input_channels"] = spec.input_channels;
  j["num_classes"] = spec.num_classes;
  j["gradcam_layer"] = spec.gradcam_layer;
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::ordered_json e;
    e["kind"] = to_string(l.kind);
    e["name"] = l.name;
    e["in"] = l.in_channels;
    e["out"] = l.out_channels;
    e["kernel"] = l.kernel;
    e["stride"] = l.stride;
    e["pad_begin"] = l.pad_begin;
    e["pad_end"] = l.pad_end;
    e["dropout"] = l.dropout;
    layers.push_back(std::move(e));
  }
  return j.dump();
}

ModelSpec model_spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelSpec spec;
    spec.architecture = j.at("architecture").get<std::string>();
    spec.input_size = j.at("input_size").get<std::size_t>();
    spec.input_channels = j.at("input_channels").get<std::size_t>();
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    spec.gradcam_layer = j.at("gradcam_layer").get<std::string>();
    for (const auto& e : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(e.at("kind").get<std::string>());
      l.name = e.at("name").get<std::string>();
      l.in_channels = e.at("in").get<std::size_t>();
      l.out_channels = e.at("out").get<std::size_t>();
      l.kernel = e.at("kernel").get<std::size_t>();
      l.stride = e.at("stride").get<std::size_t>();
      l.pad_begin = e.at("pad_begin").get<int>();
      l.pad_end = e.at("pad_end").get<int>();
      l.dropout = e.at("dropout").get<double>();
      spec.layers.push_back(std::move(l));
    }
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model spec: ") + e.what());
  }
}

std::vector<TensorSlot> tensor_slots(const ModelSpec& spec) {
  std::vector<TensorSlot> slots;
  auto conv = [&](const std::string& prefix, std::size_t in, std::size_t out, std::size_t k) {
    slots.push_back({prefix + ".weight", {out, in, k, k}, true});
    slots.push_back({prefix + ".bias", {out}, true});
  };
  auto bn = [&](const std::string& prefix, std::size_t c) {
    slots.push_back({prefix + ".gamma", {c}, true});
    slots.push_back({prefix + ".beta", {c}, true});
    slots.push_back({prefix + ".running_mean", {c}, false});
    slots.push_back({prefix + ".running_var", {c}, false});
  };
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv2d: conv(l.name, l.in_channels, l.out_channels, l.kernel); break;
      case LayerKind::BatchNorm2d: bn(l.name, l.in_channels); break;
      case LayerKind::Linear:
        slots.push_back({l.name + ".weight", {l.in_channels, l.out_channels}, true});
        slots.push_back({l.name + ".bias", {l.out_channels}, true});
        break;
      case LayerKind::ResBlock:
        conv(l.name + ".conv1", l.in_channels, l.out_channels, 3);
        bn(l.name + ".bn1", l.out_channels);
        conv(l.name + ".conv2", l.out_channels, l.out_channels, 3);
        bn(l.name + ".bn2", l.out_channels);
        if (l.stride != 1 || l.in_channels != l.out_channels) conv(l.name + ".proj", l.in_channels, l.out_channels, 1);
        break;
      default: break;
    }
  }
  return slots;
}

}  // namespace dac::model
