#include "epr/loss.hpp"

#include <algorithm>

namespace epr {

double feature_loss_value(const std::vector<double>& pred,
                          const std::vector<double>& target,
                          const std::vector<uint8_t>& mask, double alpha) {
  if (pred.size() != target.size())
    throw std::invalid_argument("feature_loss: length mismatch");
  auto c = detail::loss_coefficients(target, mask, alpha);
  double loss = 0.0;
  for (size_t i = 0; i < pred.size(); ++i)
    loss += std::abs(pred[i] - target[i]) * c[i];
  return loss;
}

double total_loss(double loss_velocity, double loss_dd, double loss_ioi,
                  const LossWeights& weights) {
  if (weights.velocity <= 0 || weights.dd <= 0 || weights.ioi <= 0)
    throw std::invalid_argument("loss weights must be positive");
  return weights.velocity * loss_velocity + weights.dd * loss_dd +
         weights.ioi * loss_ioi;
}

LossWeights gradnorm_update(const LossWeights& weights,
                            const std::array<double, 3>& grad_norms,
                            const std::array<double, 3>& loss_ratios,
                            double alpha, double lr_w) {
  for (double n : grad_norms)
    if (!std::isfinite(n) || n < 0)
      throw std::invalid_argument("gradnorm_update: non-finite gradient norm");
  for (double r : loss_ratios)
    if (!std::isfinite(r))
      throw std::invalid_argument("gradnorm_update: non-finite loss ratio");

  std::array<double, 3> w = weights.as_array();
  std::array<double, 3> g;  // weighted norms G_t
  double mean_g = 0.0;
  for (int t = 0; t < 3; ++t) {
    g[t] = w[t] * grad_norms[t];
    mean_g += g[t] / 3.0;
  }
  for (int t = 0; t < 3; ++t) {
    double target = mean_g * std::pow(loss_ratios[t], alpha);
    double diff = g[t] - target;
    double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    w[t] -= lr_w * sign * grad_norms[t];
    w[t] = std::max(w[t], 1e-4);
  }
  // Renormalize the mass above the floor so both invariants survive:
  // every weight stays >= 1e-4 and the sum is exactly 3.
  constexpr double kFloor = 1e-4;
  double sum = w[0] + w[1] + w[2];
  if (sum != 3.0) {
    double above = sum - 3.0 * kFloor;
    if (above <= 0.0) {
      w = {1.0, 1.0, 1.0};
    } else {
      double scale = (3.0 - 3.0 * kFloor) / above;
      for (int t = 0; t < 3; ++t) w[t] = kFloor + (w[t] - kFloor) * scale;
    }
  }
  // Absorb the rounding residue (a few ulps) into a weight with
  // comfortable floor clearance so the left-to-right sum is exactly 3.
  // Iterating `w += 3 - sum` can oscillate by one ulp forever, so scan
  // the ulp neighborhood of the algebraic solution instead.
  bool exact = w[0] + w[1] + w[2] == 3.0;
  for (int idx : {2, 1, 0}) {
    if (exact) break;
    if (w[idx] < 0.5) continue;  // at least one weight is >= 1
    double center = w[idx] + (3.0 - (w[0] + w[1] + w[2]));
    for (int k = -8; k <= 8 && !exact; ++k) {
      double cand = center;
      for (int j = 0; j < k; ++j) cand = std::nextafter(cand, 4.0);
      for (int j = 0; j < -k; ++j) cand = std::nextafter(cand, 0.0);
      w[idx] = cand;
      exact = w[0] + w[1] + w[2] == 3.0;
    }
    if (!exact) w[idx] = center;
  }
  return {w[0], w[1], w[2]};
}

}  // namespace epr
