#include "epr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace epr {

namespace {

std::vector<double> column(const Tensor<float>& t) {
  std::vector<double> out(t.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = t.data()[i];
  return out;
}

std::vector<double> target_column(const ModelIO& io, int feature) {
  std::vector<double> out(io.window());
  for (size_t i = 0; i < out.size(); ++i) out[i] = io.targets[i][feature];
  return out;
}

struct BatchLosses {
  Tensor<float> velocity, dd, ioi;
};

// Per-feature batch loss tensors: mean over windows of the per-window
// masked relative-error loss.
BatchLosses batch_losses(const ModelParams<float>& params,
                         const std::vector<const TrainExample*>& batch,
                         double alpha) {
  BatchLosses out;
  float inv = 1.0f / float(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainExample& ex = *batch[i];
    Predictions<float> pred = forward(params, ex.io, ex.pianist);
    Tensor<float> lv =
        feature_loss(pred.velocity, target_column(ex.io, 0), ex.io.mask,
                     alpha);
    Tensor<float> ld =
        feature_loss(pred.dd, target_column(ex.io, 1), ex.io.mask, alpha);
    Tensor<float> li =
        feature_loss(pred.ioi, target_column(ex.io, 2), ex.io.mask, alpha);
    if (i == 0) {
      out.velocity = lv;
      out.dd = ld;
      out.ioi = li;
    } else {
      out.velocity = add(out.velocity, lv);
      out.dd = add(out.dd, ld);
      out.ioi = add(out.ioi, li);
    }
  }
  out.velocity = scale(out.velocity, inv);
  out.dd = scale(out.dd, inv);
  out.ioi = scale(out.ioi, inv);
  return out;
}

double grad_l2(Tensor<float>& t) {
  double s = 0.0;
  for (float g : t.grad()) s += double(g) * g;
  return std::sqrt(s);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (patience >= max_epochs)
    throw std::invalid_argument("patience must be < max_epochs");
}

std::string format_log_line(const EpochMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g",
                static_cast<long long>(m.epoch), m.lr, m.weights.velocity,
                m.weights.dd, m.weights.ioi, m.train_velocity, m.train_dd,
                m.train_ioi, m.val_velocity, m.val_dd, m.val_ioi,
                m.val_total);
  return buf;
}

EpochMetrics train_epoch(
    ModelParams<float>& params,
    const std::vector<std::vector<const TrainExample*>>& batches,
    TrainState& state, const TrainConfig& config) {
  if (batches.empty())
    throw std::invalid_argument("train_epoch: no batches");
  std::array<double, 3> epoch_loss = {0, 0, 0};
  std::vector<Tensor<float>> param_list = params.all();

  for (size_t b = 0; b < batches.size(); ++b) {
    params.zero_grads();
    BatchLosses losses = batch_losses(params, batches[b], config.alpha_loss);
    Tensor<float> total =
        add(add(scale(losses.velocity, float(state.weights.velocity)),
                scale(losses.dd, float(state.weights.dd))),
            scale(losses.ioi, float(state.weights.ioi)));
    if (!std::isfinite(total.item())) {
      std::ostringstream msg;
      msg << "non-finite training loss at epoch " << state.epoch << " batch "
          << b;
      throw std::runtime_error(msg.str());
    }
    total.backward();
    adam_step(param_list, state.adam);
    epoch_loss[0] += losses.velocity.item();
    epoch_loss[1] += losses.dd.item();
    epoch_loss[2] += losses.ioi.item();
  }
  for (auto& l : epoch_loss) l /= double(batches.size());

  EpochMetrics metrics;
  metrics.epoch = state.epoch;
  metrics.weights = state.weights;
  metrics.train_velocity = epoch_loss[0];
  metrics.train_dd = epoch_loss[1];
  metrics.train_ioi = epoch_loss[2];
  metrics.train_total = total_loss(epoch_loss[0], epoch_loss[1],
                                   epoch_loss[2], state.weights);

  // GradNorm: per-task gradient norms on the shared layer, measured on
  // the last batch of the epoch.
  if (state.initial_losses.empty())
    state.initial_losses = {epoch_loss[0], epoch_loss[1], epoch_loss[2]};
  BatchLosses gn = batch_losses(params, batches.back(), config.alpha_loss);
  Tensor<float> shared = params.gradnorm_shared();
  std::array<double, 3> norms;
  const Tensor<float> task_losses[3] = {gn.velocity, gn.dd, gn.ioi};
  for (int t = 0; t < 3; ++t) {
    params.zero_grads();
    task_losses[t].backward();
    norms[t] = grad_l2(shared);
  }
  params.zero_grads();
  std::array<double, 3> rates;
  double mean_rate = 0.0;
  for (int t = 0; t < 3; ++t) {
    double base = state.initial_losses[t];
    rates[t] = base > 0 ? epoch_loss[t] / base : 1.0;
    mean_rate += rates[t] / 3.0;
  }
  std::array<double, 3> ratios;
  for (int t = 0; t < 3; ++t)
    ratios[t] = mean_rate > 0 ? rates[t] / mean_rate : 1.0;
  state.weights = gradnorm_update(state.weights, norms, ratios,
                                  config.gradnorm_alpha, config.gradnorm_lr);
  return metrics;
}

std::array<double, 3> evaluate_losses(
    const ModelParams<float>& params,
    const std::vector<TrainExample>& examples, double alpha) {
  if (examples.empty())
    throw std::invalid_argument("evaluate_losses: empty example set");
  std::array<double, 3> sums = {0, 0, 0};
  for (const auto& ex : examples) {
    Predictions<float> pred = forward(params, ex.io, ex.pianist);
    sums[0] += feature_loss_value(column(pred.velocity),
                                  target_column(ex.io, 0), ex.io.mask, alpha);
    sums[1] += feature_loss_value(column(pred.dd), target_column(ex.io, 1),
                                  ex.io.mask, alpha);
    sums[2] += feature_loss_value(column(pred.ioi), target_column(ex.io, 2),
                                  ex.io.mask, alpha);
  }
  for (auto& s : sums) s /= double(examples.size());
  return sums;
}

FitResult fit(const ModelConfig& model_config, const TrainConfig& config,
              const std::vector<TrainExample>& train_set,
              const std::vector<TrainExample>& val_set,
              const std::vector<std::string>& pianist_names,
              const std::string& out_dir, const Checkpoint* resume) {
  config.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("fit: empty train or validation split");

  ModelParams<float> params = resume ? clone_params(resume->params)
                                     : init_params<float>(model_config);
  TrainState state;
  state.schedule = config.schedule;
  state.schedule.base_lr = config.learning_rate;
  if (resume) {
    state.adam = resume->adam;
    state.weights = resume->weights;
  } else {
    state.adam.init(params.all());
    state.adam.learning_rate = config.learning_rate;
    state.adam.weight_decay = config.weight_decay;
  }

  FitResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improve = 0;
  int64_t start_epoch = resume ? resume->epoch + 1 : 1;

  auto make_checkpoint = [&](int64_t epoch, double val) {
    Checkpoint c;
    c.params = clone_params(params);
    c.adam = state.adam;
    c.weights = state.weights;
    c.epoch = epoch;
    c.best_validation_loss = val;
    c.seed = config.seed;
    c.pianist_names = pianist_names;
    return c;
  };

  std::string log_text;
  for (int64_t epoch = start_epoch;
       epoch < start_epoch + config.max_epochs; ++epoch) {
    state.epoch = epoch;
    state.adam.learning_rate = lr_at(state.schedule, epoch - 1);

    // Deterministic per-epoch shuffle, stable under resume.
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL +
                        uint64_t(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng() % i]);
    std::vector<std::vector<const TrainExample*>> batches;
    for (size_t at = 0; at < order.size(); at += config.batch_size) {
      std::vector<const TrainExample*> batch;
      for (size_t i = at;
           i < std::min(order.size(), at + config.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      batches.push_back(std::move(batch));
    }

    EpochMetrics metrics = train_epoch(params, batches, state, config);
    metrics.lr = state.adam.learning_rate;

    auto val = evaluate_losses(params, val_set, config.alpha_loss);
    metrics.val_velocity = val[0];
    metrics.val_dd = val[1];
    metrics.val_ioi = val[2];
    // Early stopping compares with constant unit weights so the
    // criterion is invariant to the GradNorm trajectory.
    metrics.val_total = total_loss(val[0], val[1], val[2], LossWeights{});
    result.log.push_back(metrics);
    log_text += format_log_line(metrics) + "\n";

    if (metrics.val_total < best_val) {
      best_val = metrics.val_total;
      since_improve = 0;
      result.best = make_checkpoint(epoch, best_val);
    } else {
      since_improve++;
    }
    result.stopped_epoch = epoch;
    if (since_improve >= config.patience) break;
  }

  result.last = make_checkpoint(result.stopped_epoch, best_val);
  if (result.best.params.layers.empty())
    result.best = result.last;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(out_dir + "/best.ckpt", result.best);
    save_checkpoint(out_dir + "/last.ckpt", result.last);
    std::ofstream log(out_dir + "/train_log.txt", std::ios::binary);
    log << log_text;
  }
  return result;
}

}  // namespace epr
