#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dac/gradcore/tensor.hpp"
#include "dac/modelzoo/model_spec.hpp"

namespace dac::model {

struct TrainingMetadata {
  std::int64_t epoch = -1;  // -1: untrained
  double val_accuracy = 0.0;
  std::uint64_t seed = 0;
  std::string dataset;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

/// A model spec plus every named tensor it owns (parameters and batchnorm
/// running statistics).
struct Checkpoint {
  ModelSpec spec;
  std::map<std::string, grad::Tensor> tensors;
  TrainingMetadata metadata;

  const grad::Tensor& tensor(const std::string& name) const;
  grad::Tensor& tensor(const std::string& name);

  /// Every slot of the model spec present with the expected shape, nothing extra.
  void check_complete() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Kaiming-uniform (fan-in) weights, zero biases, unit gamma, zero beta,
/// running statistics (0, 1).
Checkpoint init_checkpoint(const ModelSpec& spec, std::uint64_t seed);

// Binary layout (all integers little-endian):
//   "DACW" | u32 version=1 | u32 len + UTF-8 header JSON {"model": spec, "training": metadata}
//   | u32 tensor count | per tensor: u32 len + name, u8 rank, rank x u32 extents, raw f64 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace dac::model
