#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dac/gradcore/tensor.hpp"

namespace dac::model {

enum class LayerKind { Conv2d, BatchNorm2d, ReLU, MaxPool2d, ResBlock, Flatten, Linear, Dropout };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

/// One entry of the declarative layer list. Fields that do not apply to a kind
/// stay at their defaults.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::string name;
  std::size_t in_channels = 0;   // conv / resblock input channels, batchnorm channels, linear in-features
  std::size_t out_channels = 0;  // conv / resblock output channels, linear out-features
  std::size_t kernel = 0;        // conv kernel, pool window
  std::size_t stride = 1;
  int pad_begin = 0;
  int pad_end = 0;
  double dropout = 0.0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  std::string architecture;  // "vgg", "resnet" or "custom"
  std::size_t input_size = 0;
  std::size_t input_channels = 1;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;
  std::string gradcam_layer;  // name of the layer whose output GradCAM uses

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct HeadConfig {
  std::size_t width = 512;  // the reference architectures use 4096
  double dropout = 0.5;
};

inline constexpr std::size_t kPaperHeadWidth = 4096;

/// VGG ladder 12/24/48/96 with two conv+bn+relu per stage. Supported input
/// sizes: 128 (four pools), 64 (three pools) and 28 (two pools).
ModelSpec build_vgg(std::size_t input_size, std::size_t num_classes, const HeadConfig& head = {});

/// Stem conv then four (strided ResBlock, ResBlock) stages 12/24/48/96.
/// Strided blocks halve extents with floor division.
ModelSpec build_resnet(std::size_t input_size, std::size_t num_classes, const HeadConfig& head = {});

/// Per-sample output shape of every layer, validating that layers compose.
/// Image layers yield (C, H, W); flattened layers yield (D).
std::vector<grad::Shape> layer_output_shapes(const ModelSpec& spec);

/// Throws DimensionError/ValueError if the model spec is inconsistent.
void validate(const ModelSpec& spec);

std::string to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

/// Name of a layer-owned tensor, e.g. "conv0.weight" or "block4.bn1.running_var".
struct TensorSlot {
  std::string name;
  grad::Shape shape;
  bool trainable = true;
};

/// Every tensor a checkpoint of this spec must hold, in layer order.
std::vector<TensorSlot> tensor_slots(const ModelSpec& spec);

}  // namespace dac::model
