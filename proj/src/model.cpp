#include "epr/model.hpp"

namespace epr {

int64_t param_count(const ModelConfig& config) {
  config.validate();
  int64_t h = config.hidden_dim;
  int64_t count = config.input_feature_count * h + h;
  int64_t per_layer = 4 * (h * h + h)                       // attention
                      + 2 * h                               // ln1
                      + h * config.ff_dim + config.ff_dim   // ff in
                      + config.ff_dim * h + h               // ff out
                      + 2 * h;                              // ln2
  count += per_layer * config.num_layers;
  count += 3 * ((h + config.num_pianists) * 1 + 1);  // heads
  return count;
}

}  // namespace epr
