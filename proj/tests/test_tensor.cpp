#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "epr/tensor.hpp"

#include <functional>
#include <random>

using namespace epr;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

Tensor<double> random_param(int rows, int cols, std::mt19937_64& rng) {
  std::vector<double> data(int64_t(rows) * cols);
  for (auto& v : data) v = uniform(rng, -1.0, 1.0);
  return Tensor<double>::from_data(rows, cols, std::move(data), true);
}

// Central finite differences against the analytic gradient, 64-bit,
// relative error <= 1e-4.
void check_gradients(std::vector<Tensor<double>> params,
                     const std::function<Tensor<double>()>& loss_fn,
                     double h = 1e-5, double tol = 1e-4) {
  Tensor<double> loss = loss_fn();
  for (auto& p : params) p.zero_grad();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi].data();
    for (size_t i = 0; i < data.size(); ++i) {
      double orig = data[i];
      data[i] = orig + h;
      double up = loss_fn().item();
      data[i] = orig - h;
      double down = loss_fn().item();
      data[i] = orig;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      CHECK(std::abs(a - numeric) / denom <= tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul shape rule and mismatch error") {
  auto a = Tensor<double>::zeros(2, 3);
  auto b = Tensor<double>::zeros(3, 4);
  auto c = matmul(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 4);
  CHECK_THROWS_WITH_AS(matmul(b, a), doctest::Contains("3x4"),
                       std::invalid_argument);
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(1);
  auto x = random_param(5, 9, rng);
  auto y = softmax_rows(x);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int c = 0; c < 9; ++c) s += y.data()[r * 9 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm output is standardized before affine") {
  std::mt19937_64 rng(2);
  auto x = random_param(4, 16, rng);
  auto gain = Tensor<double>::from_data(1, 16, std::vector<double>(16, 1.0));
  auto bias = Tensor<double>::from_data(1, 16, std::vector<double>(16, 0.0));
  auto y = layer_norm_rows(x, gain, bias);
  for (int r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < 16; ++c) mean += y.data()[r * 16 + c];
    mean /= 16;
    for (int c = 0; c < 16; ++c) {
      double d = y.data()[r * 16 + c] - mean;
      var += d * d;
    }
    var /= 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("backward on sum gives ones") {
  auto x = Tensor<double>::from_data(1, 3, {1.0, 2.0, 3.0}, true);
  sum_all(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward on sum of squares") {
  auto x = Tensor<double>::from_data(1, 2, {1.0, 2.0}, true);
  sum_all(mul(x, x)).backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("repeated backward accumulates parameter gradients") {
  auto x = Tensor<double>::from_data(1, 2, {1.0, 2.0}, true);
  auto loss = sum_all(mul(x, x));
  loss.backward();
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = Tensor<double>::from_data(1, 2, {1.0, 2.0}, true);
  CHECK_THROWS_AS(x.backward(), std::logic_error);
}

TEST_CASE("gradient check: elementwise chain") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param(3, 4, rng);
    auto y = random_param(3, 4, rng);
    check_gradients({x, y}, [&] {
      return sum_all(mul(tanh_op(add(x, y)), sigmoid(sub(x, y))));
    });
  }
}

TEST_CASE("gradient check: matmul with bias and relu") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param(4, 6, rng);
    auto w = random_param(6, 3, rng);
    auto b = random_param(1, 3, rng);
    check_gradients({x, w, b}, [&] {
      return sum_all(relu(add_rowvec(matmul(x, w), b)));
    });
  }
}

TEST_CASE("gradient check: softmax") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param(4, 7, rng);
    auto c = random_param(4, 7, rng);
    check_gradients({x}, [&] {
      return sum_all(mul(softmax_rows(x), c));
    });
  }
}

TEST_CASE("gradient check: layer norm") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param(3, 8, rng);
    auto g = random_param(1, 8, rng);
    auto b = random_param(1, 8, rng);
    auto c = random_param(3, 8, rng);
    check_gradients({x, g, b}, [&] {
      return sum_all(mul(layer_norm_rows(x, g, b), c));
    });
  }
}

TEST_CASE("gradient check: slicing, concat, transpose, abs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param(4, 6, rng);
    auto y = random_param(4, 2, rng);
    check_gradients({x, y}, [&] {
      auto left = slice_cols(x, 0, 3);
      auto right = slice_cols(x, 3, 3);
      auto mixed = concat_cols(matmul(left, transpose(right)), y);
      return sum_all(abs_op(mixed));
    });
  }
}

TEST_CASE("gradient check: scale and add_scalar") {
  std::mt19937_64 rng(8);
  auto x = random_param(2, 5, rng);
  check_gradients({x}, [&] {
    return sum_all(add_scalar(scale(x, 2.5), -0.7));
  });
}

TEST_CASE("shape mismatch errors carry both shapes") {
  auto a = Tensor<double>::zeros(2, 3);
  auto b = Tensor<double>::zeros(2, 4);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("2x3"),
                       std::invalid_argument);
}
