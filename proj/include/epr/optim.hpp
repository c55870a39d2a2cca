// Adam with additive weight decay and the cosine-annealing-warm-restarts
// learning-rate schedule.

#pragma once

#include "epr/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace epr {

template <typename T>
struct AdamState {
  int64_t step = 0;
  double learning_rate = 1e-4;
  double weight_decay = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<T>> m;  // first moments, one entry per parameter
  std::vector<std::vector<T>> v;  // second moments

  void init(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), T(0));
      v.emplace_back(p.size(), T(0));
    }
  }
};

// One Adam update over the parameter list; gradients are read from each
// tensor's grad buffer. Weight decay enters as an additive lambda*param
// gradient term.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: state not initialized");
  state.step++;
  double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].data();
    auto& g = params[pi].grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != p.size() || v.size() != p.size()) {
      std::ostringstream msg;
      msg << "adam_step: moment shape mismatch for parameter " << pi;
      throw std::invalid_argument(msg.str());
    }
    for (size_t i = 0; i < p.size(); ++i) {
      T grad = g[i] + T(state.weight_decay) * p[i];
      m[i] = T(state.beta1) * m[i] + T(1.0 - state.beta1) * grad;
      v[i] = T(state.beta2) * v[i] + T(1.0 - state.beta2) * grad * grad;
      T mhat = m[i] / T(bc1);
      T vhat = v[i] / T(bc2);
      p[i] -= T(state.learning_rate) * mhat / (std::sqrt(vhat) + T(state.epsilon));
    }
  }
}

struct LrSchedule {
  double base_lr = 1e-4;
  int t0 = 10;        // epochs in the first cycle
  int t_mult = 2;     // cycle growth factor
  double eta_min = 0.0;
};

// Cosine annealing with warm restarts, epoch granularity. Restarts land
// exactly on cycle boundaries: lr_at(T_0) == base_lr.
inline double lr_at(const LrSchedule& s, int64_t epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  int64_t t_cur = epoch;
  int64_t t_i = s.t0;
  while (t_cur >= t_i) {
    t_cur -= t_i;
    t_i = s.t_mult > 1 ? t_i * s.t_mult : t_i;
  }
  return s.eta_min + 0.5 * (s.base_lr - s.eta_min) *
                         (1.0 + std::cos(M_PI * double(t_cur) / double(t_i)));
}

}  // namespace epr
