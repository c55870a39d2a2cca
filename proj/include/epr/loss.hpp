// Masked relative-error feature losses, the weighted total, and the
// GradNorm loss-weight update.

#pragma once

#include "epr/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace epr {

inline constexpr double kLossAlpha = 0.001;

struct LossWeights {
  double velocity = 1.0;
  double dd = 1.0;
  double ioi = 1.0;

  double sum() const { return velocity + dd + ioi; }
  std::array<double, 3> as_array() const { return {velocity, dd, ioi}; }
};

namespace detail {

// Per-position loss coefficients: the relative-error denominator for
// nonzero targets, alpha for zero targets, zero at masked positions;
// divided by the unmasked count so the masked sum is a mean.
inline std::vector<double> loss_coefficients(
    const std::vector<double>& target, const std::vector<uint8_t>& mask,
    double alpha) {
  if (target.size() != mask.size())
    throw std::invalid_argument("feature_loss: length mismatch");
  int64_t count = 0;
  for (auto m : mask) count += m;
  if (count == 0)
    throw std::invalid_argument("feature_loss: all positions masked");
  std::vector<double> c(target.size(), 0.0);
  for (size_t i = 0; i < target.size(); ++i) {
    if (!mask[i]) continue;
    c[i] = (target[i] != 0.0 ? 1.0 / std::abs(target[i]) : alpha) /
           double(count);
  }
  return c;
}

}  // namespace detail

// Mean over unmasked positions of |y - yhat|/|yhat| (alpha*|y - yhat|
// where yhat = 0). Differentiable version for training.
template <typename T>
Tensor<T> feature_loss(const Tensor<T>& pred,
                       const std::vector<double>& target,
                       const std::vector<uint8_t>& mask,
                       double alpha = kLossAlpha) {
  if (pred.size() != int64_t(target.size()))
    throw std::invalid_argument("feature_loss: length mismatch");
  auto c = detail::loss_coefficients(target, mask, alpha);
  std::vector<T> tdata(target.size()), cdata(c.size());
  for (size_t i = 0; i < target.size(); ++i) {
    tdata[i] = T(target[i]);
    cdata[i] = T(c[i]);
  }
  Tensor<T> t = Tensor<T>::from_data(pred.rows(), pred.cols(),
                                     std::move(tdata), false);
  Tensor<T> coeff = Tensor<T>::from_data(pred.rows(), pred.cols(),
                                         std::move(cdata), false);
  return sum_all(mul(abs_op(sub(pred, t)), coeff));
}

// Graph-free evaluation of the same loss.
double feature_loss_value(const std::vector<double>& pred,
                          const std::vector<double>& target,
                          const std::vector<uint8_t>& mask,
                          double alpha = kLossAlpha);

double total_loss(double loss_velocity, double loss_dd, double loss_ioi,
                  const LossWeights& weights);

// One gradient step on the GradNorm objective sum_t |G_t - Gbar*r_t^a|
// where G_t = w_t * grad_norms[t]; weights are floored at 1e-4 and
// renormalized to sum exactly 3.
LossWeights gradnorm_update(const LossWeights& weights,
                            const std::array<double, 3>& grad_norms,
                            const std::array<double, 3>& loss_ratios,
                            double alpha, double lr_w);

}  // namespace epr
