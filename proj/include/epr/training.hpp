// The optimization loop: masked relative-error losses per head, GradNorm
// weight balancing once per epoch, cosine warm-restart learning rates,
// early stopping, and checkpointing.

#pragma once

#include "epr/checkpoint.hpp"
#include "epr/features.hpp"
#include "epr/loss.hpp"
#include "epr/model.hpp"
#include "epr/optim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epr {

struct TrainConfig {
  int batch_size = 16;
  int max_epochs = 400;
  int patience = 30;
  double alpha_loss = kLossAlpha;
  double gradnorm_alpha = 1.5;
  double gradnorm_lr = 0.025;
  double learning_rate = 1e-4;
  double weight_decay = 1e-7;
  LrSchedule schedule{1e-4, 10, 2, 0.0};
  uint64_t seed = 0;

  void validate() const;
};

struct TrainExample {
  ModelIO io;
  PianistId pianist;
};

struct EpochMetrics {
  int64_t epoch = 0;
  double lr = 0.0;
  LossWeights weights;
  double train_velocity = 0.0, train_dd = 0.0, train_ioi = 0.0;
  double train_total = 0.0;
  double val_velocity = 0.0, val_dd = 0.0, val_ioi = 0.0;
  double val_total = 0.0;
};

std::string format_log_line(const EpochMetrics& m);

struct FitResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochMetrics> log;
  int64_t stopped_epoch = 0;
};

struct TrainState {
  AdamState<float> adam;
  LossWeights weights;
  LrSchedule schedule;
  std::vector<double> initial_losses;  // epoch-1 averages, GradNorm baseline
  uint64_t shuffle_seed = 0;
  int64_t epoch = 0;
};

// One pass over the batches: forward, per-head losses, weighted total,
// backward, Adam. GradNorm runs once at the end on the last batch.
EpochMetrics train_epoch(ModelParams<float>& params,
                         const std::vector<std::vector<const TrainExample*>>&
                             batches,
                         TrainState& state, const TrainConfig& config);

// Unweighted per-feature losses averaged over a set of examples.
std::array<double, 3> evaluate_losses(const ModelParams<float>& params,
                                      const std::vector<TrainExample>&
                                          examples,
                                      double alpha = kLossAlpha);

// Full recipe: shuffled batches per epoch, per-epoch learning rate,
// GradNorm, constant-weight validation, 30-epoch patience. Writes
// best.ckpt, last.ckpt and train_log.txt under out_dir unless empty.
// resume, when given, continues from a saved last checkpoint.
FitResult fit(const ModelConfig& model_config, const TrainConfig& config,
              const std::vector<TrainExample>& train_set,
              const std::vector<TrainExample>& val_set,
              const std::vector<std::string>& pianist_names,
              const std::string& out_dir = "",
              const Checkpoint* resume = nullptr);

}  // namespace epr
