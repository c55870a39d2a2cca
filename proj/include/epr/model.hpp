// The bi-directional transformer encoder: raw-token regression inputs,
// post-norm encoder layers, pianist one-hot concatenated per position
// before three range-bounded regression heads.

#pragma once

#include "epr/features.hpp"
#include "epr/optim.hpp"
#include "epr/tensor.hpp"

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace epr {

struct OutputRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct ModelConfig {
  int num_layers = 4;
  int num_heads = 4;
  int hidden_dim = 128;
  int ff_dim = 512;
  int num_pianists = 6;
  int window = kWindowSize;
  int input_feature_count = 6;
  OutputRange velocity_range{0.0, 63.0};
  OutputRange dd_range{-4608.0, 4608.0};
  OutputRange ioi_range{0.0, kIoiCeiling};
  bool positional_encoding = false;
  uint64_t seed = 0;

  void validate() const {
    if (hidden_dim <= 0 || num_heads <= 0 || hidden_dim % num_heads != 0) {
      std::ostringstream msg;
      msg << "hidden_dim " << hidden_dim << " not divisible by num_heads "
          << num_heads;
      throw std::invalid_argument(msg.str());
    }
    if (num_layers <= 0 || ff_dim <= 0 || num_pianists <= 0 || window <= 0)
      throw std::invalid_argument("model config fields must be positive");
    for (const auto& r : {velocity_range, dd_range, ioi_range})
      if (!(r.lo < r.hi))
        throw std::invalid_argument("output range must satisfy lo < hi");
  }
};

template <typename T>
struct EncoderLayerParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor<T> ln2_gain, ln2_bias;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> input_w, input_b;
  std::vector<EncoderLayerParams<T>> layers;
  Tensor<T> head_velocity_w, head_velocity_b;
  Tensor<T> head_dd_w, head_dd_b;
  Tensor<T> head_ioi_w, head_ioi_b;

  // Fixed-order parameter list shared by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor<T>>> named() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.emplace_back("input.w", input_w);
    out.emplace_back("input.b", input_b);
    for (size_t l = 0; l < layers.size(); ++l) {
      std::string p = "enc" + std::to_string(l) + ".";
      const auto& e = layers[l];
      out.emplace_back(p + "attn.wq", e.wq);
      out.emplace_back(p + "attn.bq", e.bq);
      out.emplace_back(p + "attn.wk", e.wk);
      out.emplace_back(p + "attn.bk", e.bk);
      out.emplace_back(p + "attn.wv", e.wv);
      out.emplace_back(p + "attn.bv", e.bv);
      out.emplace_back(p + "attn.wo", e.wo);
      out.emplace_back(p + "attn.bo", e.bo);
      out.emplace_back(p + "ln1.gain", e.ln1_gain);
      out.emplace_back(p + "ln1.bias", e.ln1_bias);
      out.emplace_back(p + "ff.w1", e.ff_w1);
      out.emplace_back(p + "ff.b1", e.ff_b1);
      out.emplace_back(p + "ff.w2", e.ff_w2);
      out.emplace_back(p + "ff.b2", e.ff_b2);
      out.emplace_back(p + "ln2.gain", e.ln2_gain);
      out.emplace_back(p + "ln2.bias", e.ln2_bias);
    }
    out.emplace_back("head.velocity.w", head_velocity_w);
    out.emplace_back("head.velocity.b", head_velocity_b);
    out.emplace_back("head.dd.w", head_dd_w);
    out.emplace_back("head.dd.b", head_dd_b);
    out.emplace_back("head.ioi.w", head_ioi_w);
    out.emplace_back("head.ioi.b", head_ioi_b);
    return out;
  }

  std::vector<Tensor<T>> all() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  // GradNorm's shared layer: the last encoder layer's feed-forward
  // output weights.
  Tensor<T> gradnorm_shared() const { return layers.back().ff_w2; }

  void zero_grads() {
    for (auto& t : all()) t.zero_grad();
  }
};

int64_t param_count(const ModelConfig& config);

namespace detail {

inline double next_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0, 1)
}

template <typename T>
Tensor<T> init_weight(int rows, int cols, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / double(rows + cols));
  std::vector<T> data(int64_t(rows) * cols);
  for (auto& v : data)
    v = T((2.0 * next_uniform(rng) - 1.0) * bound);
  return Tensor<T>::from_data(rows, cols, std::move(data), true);
}

template <typename T>
Tensor<T> init_const(int rows, int cols, T value) {
  std::vector<T> data(int64_t(rows) * cols, value);
  return Tensor<T>::from_data(rows, cols, std::move(data), true);
}

}  // namespace detail

template <typename T>
ModelParams<T> init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  int h = config.hidden_dim;
  ModelParams<T> p;
  p.config = config;
  p.input_w = detail::init_weight<T>(config.input_feature_count, h, rng);
  p.input_b = detail::init_const<T>(1, h, T(0));
  for (int l = 0; l < config.num_layers; ++l) {
    EncoderLayerParams<T> e;
    e.wq = detail::init_weight<T>(h, h, rng);
    e.bq = detail::init_const<T>(1, h, T(0));
    e.wk = detail::init_weight<T>(h, h, rng);
    e.bk = detail::init_const<T>(1, h, T(0));
    e.wv = detail::init_weight<T>(h, h, rng);
    e.bv = detail::init_const<T>(1, h, T(0));
    e.wo = detail::init_weight<T>(h, h, rng);
    e.bo = detail::init_const<T>(1, h, T(0));
    e.ln1_gain = detail::init_const<T>(1, h, T(1));
    e.ln1_bias = detail::init_const<T>(1, h, T(0));
    e.ff_w1 = detail::init_weight<T>(h, config.ff_dim, rng);
    e.ff_b1 = detail::init_const<T>(1, config.ff_dim, T(0));
    e.ff_w2 = detail::init_weight<T>(config.ff_dim, h, rng);
    e.ff_b2 = detail::init_const<T>(1, h, T(0));
    e.ln2_gain = detail::init_const<T>(1, h, T(1));
    e.ln2_bias = detail::init_const<T>(1, h, T(0));
    p.layers.push_back(std::move(e));
  }
  int head_in = h + config.num_pianists;
  p.head_velocity_w = detail::init_weight<T>(head_in, 1, rng);
  p.head_velocity_b = detail::init_const<T>(1, 1, T(0));
  p.head_dd_w = detail::init_weight<T>(head_in, 1, rng);
  p.head_dd_b = detail::init_const<T>(1, 1, T(0));
  p.head_ioi_w = detail::init_weight<T>(head_in, 1, rng);
  p.head_ioi_b = detail::init_const<T>(1, 1, T(0));
  return p;
}

// Raw token values scaled by their vocabulary/range sizes so they enter
// the network as bounded reals.
template <typename T>
Tensor<T> normalize_inputs(const ModelIO& io) {
  static constexpr double kScales[6] = {89.0, 66.0, 4609.0, 518.0, 1537.0,
                                        kIoiCeiling};
  int n = int(io.window());
  std::vector<T> data(int64_t(n) * 6);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 6; ++c)
      data[int64_t(i) * 6 + c] = T(io.inputs[i][c] / kScales[c]);
  return Tensor<T>::from_data(n, 6, std::move(data), false);
}

template <typename T>
struct Predictions {
  Tensor<T> velocity;  // [n x 1]
  Tensor<T> dd;
  Tensor<T> ioi;
};

namespace detail {

// Additive attention bias: masked key columns get a logit low enough
// that exp() underflows to exactly zero after row-max stabilization.
template <typename T>
Tensor<T> attention_mask_bias(const std::vector<uint8_t>& mask) {
  int n = int(mask.size());
  std::vector<T> data(int64_t(n) * n, T(0));
  for (int c = 0; c < n; ++c)
    if (!mask[c])
      for (int r = 0; r < n; ++r) data[int64_t(r) * n + c] = T(-1e30);
  return Tensor<T>::from_data(n, n, std::move(data), false);
}

template <typename T>
Tensor<T> sinusoidal_encoding(int n, int dim) {
  std::vector<T> data(int64_t(n) * dim);
  for (int pos = 0; pos < n; ++pos)
    for (int i = 0; i < dim; ++i) {
      double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / double(dim));
      data[int64_t(pos) * dim + i] =
          T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return Tensor<T>::from_data(n, dim, std::move(data), false);
}

template <typename T>
Tensor<T> bounded_head(const Tensor<T>& hidden, const Tensor<T>& w,
                       const Tensor<T>& b, const OutputRange& range,
                       bool symmetric) {
  Tensor<T> raw = add_rowvec(matmul(hidden, w), b);
  if (symmetric) return scale(tanh_op(raw), T(range.hi));
  return add_scalar(scale(sigmoid(raw), T(range.hi - range.lo)), T(range.lo));
}

}  // namespace detail

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x,
                                    const EncoderLayerParams<T>& e,
                                    int num_heads,
                                    const Tensor<T>& mask_bias) {
  int hidden = x.cols();
  if (hidden % num_heads != 0)
    throw std::invalid_argument("hidden dim not divisible by head count");
  int dk = hidden / num_heads;
  Tensor<T> q = add_rowvec(matmul(x, e.wq), e.bq);
  Tensor<T> k = add_rowvec(matmul(x, e.wk), e.bk);
  Tensor<T> v = add_rowvec(matmul(x, e.wv), e.bv);
  Tensor<T> heads;
  for (int h = 0; h < num_heads; ++h) {
    Tensor<T> qh = slice_cols(q, h * dk, dk);
    Tensor<T> kh = slice_cols(k, h * dk, dk);
    Tensor<T> vh = slice_cols(v, h * dk, dk);
    Tensor<T> scores =
        scale(matmul(qh, transpose(kh)), T(1.0 / std::sqrt(double(dk))));
    Tensor<T> attn = softmax_rows(add(scores, mask_bias));
    Tensor<T> oh = matmul(attn, vh);
    heads = h == 0 ? oh : concat_cols(heads, oh);
  }
  return add_rowvec(matmul(heads, e.wo), e.bo);
}

template <typename T>
Predictions<T> forward(const ModelParams<T>& params, const ModelIO& io,
                       const PianistId& pianist) {
  const ModelConfig& cfg = params.config;
  if (int(io.window()) != cfg.window) {
    std::ostringstream msg;
    msg << "window length " << io.window() << " does not match model window "
        << cfg.window;
    throw std::invalid_argument(msg.str());
  }
  if (pianist.index < 0 || pianist.index >= cfg.num_pianists) {
    std::ostringstream msg;
    msg << "pianist index " << pianist.index << " outside 0.."
        << cfg.num_pianists - 1;
    throw std::invalid_argument(msg.str());
  }
  int n = cfg.window;

  Tensor<T> x = add_rowvec(
      matmul(normalize_inputs<T>(io), params.input_w), params.input_b);
  if (cfg.positional_encoding)
    x = add(x, detail::sinusoidal_encoding<T>(n, cfg.hidden_dim));

  Tensor<T> mask_bias = detail::attention_mask_bias<T>(io.mask);
  for (const auto& e : params.layers) {
    Tensor<T> attn =
        multi_head_self_attention(x, e, cfg.num_heads, mask_bias);
    x = layer_norm_rows(add(x, attn), e.ln1_gain, e.ln1_bias);
    Tensor<T> ff = add_rowvec(
        matmul(relu(add_rowvec(matmul(x, e.ff_w1), e.ff_b1)), e.ff_w2),
        e.ff_b2);
    x = layer_norm_rows(add(x, ff), e.ln2_gain, e.ln2_bias);
  }

  // Per-position one-hot pianist conditioning before the heads.
  std::vector<T> onehot(int64_t(n) * cfg.num_pianists, T(0));
  for (int i = 0; i < n; ++i)
    onehot[int64_t(i) * cfg.num_pianists + pianist.index] = T(1);
  Tensor<T> hidden = concat_cols(
      x, Tensor<T>::from_data(n, cfg.num_pianists, std::move(onehot), false));

  Predictions<T> out;
  out.velocity = detail::bounded_head(hidden, params.head_velocity_w,
                                      params.head_velocity_b,
                                      cfg.velocity_range, false);
  out.dd = detail::bounded_head(hidden, params.head_dd_w, params.head_dd_b,
                                cfg.dd_range, true);
  out.ioi = detail::bounded_head(hidden, params.head_ioi_w,
                                 params.head_ioi_b, cfg.ioi_range, false);
  return out;
}

}  // namespace epr
