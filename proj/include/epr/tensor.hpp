// Dense 2-D tensors with reverse-mode automatic differentiation.
//
// The graph is a DAG of shared nodes; every op records a backward closure
// that scatters the node's gradient into its parents. Templated on the
// scalar type: float for training, double for finite-difference checks.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace epr {

template <typename T>
class Tensor {
 public:
  struct Node;
  using NodePtr = std::shared_ptr<Node>;

  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;

    int64_t size() const { return int64_t(rows) * cols; }
    void ensure_grad() {
      if (grad.empty()) grad.assign(value.size(), T(0));
    }
  };

  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(int64_t(rows) * cols, T(0));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor from_data(int rows, int cols, std::vector<T> data,
                          bool requires_grad = false) {
    if (int64_t(rows) * cols != int64_t(data.size()))
      throw std::invalid_argument("tensor data length does not match shape");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  int64_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const NodePtr& node() const { return node_; }

  T item() const {
    if (size() != 1) throw std::logic_error("item() on non-scalar tensor");
    return node_->value[0];
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  // Reverse traversal from this scalar. Gradients on leaf (parameter)
  // nodes accumulate additively across calls; interior node gradients
  // are scratch space and are reset on every call.
  void backward() const {
    if (size() != 1)
      throw std::logic_error("backward() requires a scalar loss tensor");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    topo_sort(node_.get(), seen, order);
    for (Node* n : order)
      if (n->backprop) n->grad.assign(n->value.size(), T(0));
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
  }

 private:
  static void topo_sort(Node* n, std::unordered_set<Node*>& seen,
                        std::vector<Node*>& order) {
    if (!n->requires_grad || seen.count(n)) return;
    seen.insert(n);
    for (auto& p : n->parents) topo_sort(p.get(), seen, order);
    order.push_back(n);
  }

  NodePtr node_;
};

namespace detail {

template <typename T>
using EigenMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<EigenMat<T>> as_mat(std::vector<T>& v, int r, int c) {
  return Eigen::Map<EigenMat<T>>(v.data(), r, c);
}

template <typename T>
Eigen::Map<const EigenMat<T>> as_mat(const std::vector<T>& v, int r, int c) {
  return Eigen::Map<const EigenMat<T>>(v.data(), r, c);
}

inline void check_same_shape(int ar, int ac, int br, int bc,
                             const char* op) {
  if (ar != br || ac != bc) {
    std::ostringstream msg;
    msg << op << ": shape mismatch (" << ar << "x" << ac << ") vs (" << br
        << "x" << bc << ")";
    throw std::invalid_argument(msg.str());
  }
}

template <typename T>
typename Tensor<T>::NodePtr make_node(
    int rows, int cols, std::vector<typename Tensor<T>::NodePtr> parents) {
  auto n = std::make_shared<typename Tensor<T>::Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(int64_t(rows) * cols, T(0));
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream msg;
    msg << "matmul: inner dimensions differ (" << a.rows() << "x" << a.cols()
        << ") vs (" << b.rows() << "x" << b.cols() << ")";
    throw std::invalid_argument(msg.str());
  }
  auto an = a.node();
  auto bn = b.node();
  auto n = detail::make_node<T>(a.rows(), b.cols(), {an, bn});
  detail::as_mat(n->value, n->rows, n->cols) =
      detail::as_mat(an->value, an->rows, an->cols) *
      detail::as_mat(bn->value, bn->rows, bn->cols);
  n->backprop = [an, bn](typename Tensor<T>::Node& self) {
    auto g = detail::as_mat(self.grad, self.rows, self.cols);
    if (an->requires_grad) {
      an->ensure_grad();
      detail::as_mat(an->grad, an->rows, an->cols) +=
          g * detail::as_mat(bn->value, bn->rows, bn->cols).transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::as_mat(bn->grad, bn->rows, bn->cols) +=
          detail::as_mat(an->value, an->rows, an->cols).transpose() * g;
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "add");
  auto an = a.node();
  auto bn = b.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an, bn});
  for (int64_t i = 0; i < n->size(); ++i)
    n->value[i] = an->value[i] + bn->value[i];
  n->backprop = [an, bn](typename Tensor<T>::Node& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (int64_t i = 0; i < self.size(); ++i) p->grad[i] += self.grad[i];
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "sub");
  auto an = a.node();
  auto bn = b.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an, bn});
  for (int64_t i = 0; i < n->size(); ++i)
    n->value[i] = an->value[i] - bn->value[i];
  n->backprop = [an, bn](typename Tensor<T>::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < self.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "mul");
  auto an = a.node();
  auto bn = b.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an, bn});
  for (int64_t i = 0; i < n->size(); ++i)
    n->value[i] = an->value[i] * bn->value[i];
  n->backprop = [an, bn](typename Tensor<T>::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < self.size(); ++i)
        an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < self.size(); ++i)
        bn->grad[i] += self.grad[i] * an->value[i];
    }
  };
  return Tensor<T>(n);
}

// Broadcasts a [1 x cols] row vector over every row of a.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_rowvec: expected [1 x cols] row vector");
  auto an = a.node();
  auto rn = row.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an, rn});
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      n->value[int64_t(r) * a.cols() + c] =
          an->value[int64_t(r) * a.cols() + c] + rn->value[c];
  n->backprop = [an, rn](typename Tensor<T>::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (rn->requires_grad) {
      rn->ensure_grad();
      for (int r = 0; r < self.rows; ++r)
        for (int c = 0; c < self.cols; ++c)
          rn->grad[c] += self.grad[int64_t(r) * self.cols + c];
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an});
  for (int64_t i = 0; i < n->size(); ++i) n->value[i] = an->value[i] * s;
  n->backprop = [an, s](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < self.size(); ++i)
      an->grad[i] += self.grad[i] * s;
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an});
  for (int64_t i = 0; i < n->size(); ++i) n->value[i] = an->value[i] + s;
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.cols(), a.rows(), {an});
  detail::as_mat(n->value, n->rows, n->cols) =
      detail::as_mat(an->value, an->rows, an->cols).transpose();
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    detail::as_mat(an->grad, an->rows, an->cols) +=
        detail::as_mat(self.grad, self.rows, self.cols).transpose();
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row counts differ");
  auto an = a.node();
  auto bn = b.node();
  int ac = a.cols(), bc = b.cols();
  auto n = detail::make_node<T>(a.rows(), ac + bc, {an, bn});
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < ac; ++c)
      n->value[int64_t(r) * (ac + bc) + c] = an->value[int64_t(r) * ac + c];
    for (int c = 0; c < bc; ++c)
      n->value[int64_t(r) * (ac + bc) + ac + c] =
          bn->value[int64_t(r) * bc + c];
  }
  n->backprop = [an, bn, ac, bc](typename Tensor<T>::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int r = 0; r < self.rows; ++r)
        for (int c = 0; c < ac; ++c)
          an->grad[int64_t(r) * ac + c] +=
              self.grad[int64_t(r) * (ac + bc) + c];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int r = 0; r < self.rows; ++r)
        for (int c = 0; c < bc; ++c)
          bn->grad[int64_t(r) * bc + c] +=
              self.grad[int64_t(r) * (ac + bc) + ac + c];
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int start, int len) {
  if (start < 0 || len <= 0 || start + len > a.cols())
    throw std::invalid_argument("slice_cols: range outside tensor");
  auto an = a.node();
  int ac = a.cols();
  auto n = detail::make_node<T>(a.rows(), len, {an});
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < len; ++c)
      n->value[int64_t(r) * len + c] = an->value[int64_t(r) * ac + start + c];
  n->backprop = [an, start, len, ac](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int r = 0; r < self.rows; ++r)
      for (int c = 0; c < len; ++c)
        an->grad[int64_t(r) * ac + start + c] +=
            self.grad[int64_t(r) * len + c];
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an});
  for (int64_t i = 0; i < n->size(); ++i)
    n->value[i] = an->value[i] > T(0) ? an->value[i] : T(0);
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < self.size(); ++i)
      if (an->value[i] > T(0)) an->grad[i] += self.grad[i];
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an});
  for (int64_t i = 0; i < n->size(); ++i)
    n->value[i] = std::tanh(an->value[i]);
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < self.size(); ++i) {
      T y = self.value[i];
      an->grad[i] += self.grad[i] * (T(1) - y * y);
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an});
  for (int64_t i = 0; i < n->size(); ++i) {
    T x = an->value[i];
    n->value[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                            : std::exp(x) / (T(1) + std::exp(x));
  }
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < self.size(); ++i) {
      T y = self.value[i];
      an->grad[i] += self.grad[i] * y * (T(1) - y);
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> abs_op(const Tensor<T>& a) {
  auto an = a.node();
  auto n = detail::make_node<T>(a.rows(), a.cols(), {an});
  for (int64_t i = 0; i < n->size(); ++i)
    n->value[i] = std::abs(an->value[i]);
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < self.size(); ++i) {
      T s = an->value[i] > T(0) ? T(1) : (an->value[i] < T(0) ? T(-1) : T(0));
      an->grad[i] += self.grad[i] * s;
    }
  };
  return Tensor<T>(n);
}

// Row-wise softmax; numerically stabilized by the row maximum. Entries
// pushed below roughly -700 relative to the row max come out exactly 0.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  auto an = a.node();
  int R = a.rows(), C = a.cols();
  auto n = detail::make_node<T>(R, C, {an});
  for (int r = 0; r < R; ++r) {
    const T* in = an->value.data() + int64_t(r) * C;
    T* out = n->value.data() + int64_t(r) * C;
    T mx = in[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, in[c]);
    T sum = T(0);
    for (int c = 0; c < C; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (int c = 0; c < C; ++c) out[c] /= sum;
  }
  n->backprop = [an, R, C](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int r = 0; r < R; ++r) {
      const T* y = self.value.data() + int64_t(r) * C;
      const T* gy = self.grad.data() + int64_t(r) * C;
      T* gx = an->grad.data() + int64_t(r) * C;
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += gy[c] * y[c];
      for (int c = 0; c < C; ++c) gx[c] += y[c] * (gy[c] - dot);
    }
  };
  return Tensor<T>(n);
}

// Row-wise layer normalization with learned gain/bias ([1 x cols] each).
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& a, const Tensor<T>& gain,
                          const Tensor<T>& bias, T eps = T(1e-5)) {
  if (gain.rows() != 1 || gain.cols() != a.cols() || bias.rows() != 1 ||
      bias.cols() != a.cols())
    throw std::invalid_argument("layer_norm_rows: affine shape mismatch");
  auto an = a.node();
  auto gn = gain.node();
  auto bn = bias.node();
  int R = a.rows(), C = a.cols();
  auto n = detail::make_node<T>(R, C, {an, gn, bn});
  // Cache normalized values and inverse std per row for backward.
  auto xhat = std::make_shared<std::vector<T>>(int64_t(R) * C);
  auto istd = std::make_shared<std::vector<T>>(R);
  for (int r = 0; r < R; ++r) {
    const T* in = an->value.data() + int64_t(r) * C;
    T mean = T(0);
    for (int c = 0; c < C; ++c) mean += in[c];
    mean /= T(C);
    T var = T(0);
    for (int c = 0; c < C; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= T(C);
    T is = T(1) / std::sqrt(var + eps);
    (*istd)[r] = is;
    for (int c = 0; c < C; ++c) {
      T xh = (in[c] - mean) * is;
      (*xhat)[int64_t(r) * C + c] = xh;
      n->value[int64_t(r) * C + c] = gn->value[c] * xh + bn->value[c];
    }
  }
  n->backprop = [an, gn, bn, xhat, istd, R, C](
                    typename Tensor<T>::Node& self) {
    for (int r = 0; r < R; ++r) {
      const T* gy = self.grad.data() + int64_t(r) * C;
      const T* xh = xhat->data() + int64_t(r) * C;
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int c = 0; c < C; ++c) gn->grad[c] += gy[c] * xh[c];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int c = 0; c < C; ++c) bn->grad[c] += gy[c];
      }
      if (an->requires_grad) {
        an->ensure_grad();
        T* gx = an->grad.data() + int64_t(r) * C;
        T sum_g = T(0), sum_gx = T(0);
        for (int c = 0; c < C; ++c) {
          T g = gy[c] * gn->value[c];
          sum_g += g;
          sum_gx += g * xh[c];
        }
        for (int c = 0; c < C; ++c) {
          T g = gy[c] * gn->value[c];
          gx[c] += (*istd)[r] *
                   (g - sum_g / T(C) - xh[c] * sum_gx / T(C));
        }
      }
    }
  };
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto an = a.node();
  auto n = detail::make_node<T>(1, 1, {an});
  T s = T(0);
  for (int64_t i = 0; i < an->size(); ++i) s += an->value[i];
  n->value[0] = s;
  n->backprop = [an](typename Tensor<T>::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < an->size(); ++i) an->grad[i] += self.grad[0];
  };
  return Tensor<T>(n);
}

}  // namespace epr
