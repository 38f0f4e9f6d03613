#pragma once

#include <cstdint>
#include <string>

#include "seg2hoi/config.hpp"
#include "seg2hoi/dataset.hpp"
#include "seg2hoi/nn.hpp"

namespace seg2hoi {

/// Decoder weights plus everything needed to rebuild the model around them.
struct Checkpoint {
  TrainConfig config;
  HoiCategories categories;
  std::string foundation_hash;
  std::int64_t step = 0;
  nn::ParameterStore params;
};

/// Binary container: magic, version, JSON header (config, categories,
/// parameter names and shapes), then float64 parameter values in header order.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// SHA-256 of the serialized checkpoint.
std::string checkpoint_hash(const Checkpoint& ckpt);

/// Copies values by name into `dst`; names, shapes and trainable flags must agree.
void restore_parameters(nn::ParameterStore& dst, const nn::ParameterStore& src);

}  // namespace seg2hoi
