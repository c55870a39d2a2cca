// Self-describing binary checkpoint: JSON header (config, optimizer
// hyperparameters, loss weights, epoch, seed, array directory) followed
// by raw little-endian float32 parameter and moment arrays. Round-trip
// exact for 32-bit values.

#pragma once

#include "epr/loss.hpp"
#include "epr/model.hpp"
#include "epr/optim.hpp"

#include <string>
#include <vector>

namespace epr {

struct Checkpoint {
  ModelParams<float> params;
  AdamState<float> adam;
  LossWeights weights;
  int64_t epoch = 0;
  double best_validation_loss = 0.0;
  uint64_t seed = 0;
  std::vector<std::string> pianist_names;
};

// Deep copy; tensors share nodes otherwise.
ModelParams<float> clone_params(const ModelParams<float>& params);

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace epr
