#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "epr/checkpoint.hpp"

#include <filesystem>
#include <random>

using namespace epr;

namespace {

Checkpoint sample_checkpoint(uint64_t seed) {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.hidden_dim = 8;
  cfg.ff_dim = 12;
  cfg.num_pianists = 3;
  cfg.window = 6;
  cfg.seed = seed;
  Checkpoint ckpt;
  ckpt.params = init_params<float>(cfg);
  ckpt.adam.init(ckpt.params.all());
  ckpt.adam.step = 42;
  ckpt.adam.learning_rate = 3.25e-5;
  ckpt.adam.weight_decay = 1e-7;
  std::mt19937_64 rng(seed ^ 0xabcdef);
  for (auto& m : ckpt.adam.m)
    for (auto& v : m) v = float(rng() % 1000) / 999.0f - 0.5f;
  for (auto& mv : ckpt.adam.v)
    for (auto& v : mv) v = float(rng() % 1000) / 999.0f;
  ckpt.weights = {1.1, 0.7, 1.2};
  ckpt.epoch = 17;
  ckpt.best_validation_loss = 0.4375;  // exact in binary
  ckpt.seed = 99;
  ckpt.pianist_names = {"ashkenazy", "gould", "pires"};
  return ckpt;
}

void check_equal(const Checkpoint& a, const Checkpoint& b) {
  auto pa = a.params.all(), pb = b.params.all();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data() == pb[i].data());
  CHECK(a.adam.m == b.adam.m);
  CHECK(a.adam.v == b.adam.v);
  CHECK(a.adam.step == b.adam.step);
  CHECK(a.adam.learning_rate == b.adam.learning_rate);
  CHECK(a.adam.weight_decay == b.adam.weight_decay);
  CHECK(a.weights.velocity == b.weights.velocity);
  CHECK(a.weights.dd == b.weights.dd);
  CHECK(a.weights.ioi == b.weights.ioi);
  CHECK(a.epoch == b.epoch);
  CHECK(a.best_validation_loss == b.best_validation_loss);
  CHECK(a.seed == b.seed);
  CHECK(a.pianist_names == b.pianist_names);
  CHECK(a.params.config.hidden_dim == b.params.config.hidden_dim);
  CHECK(a.params.config.window == b.params.config.window);
}

}  // namespace

TEST_CASE("clone_params copies values without sharing storage") {
  Checkpoint c = sample_checkpoint(1);
  ModelParams<float> copy = clone_params(c.params);
  auto src = c.params.all(), dst = copy.all();
  for (size_t i = 0; i < src.size(); ++i) CHECK(src[i].data() == dst[i].data());
  dst[0].data()[0] += 1.0f;
  CHECK(src[0].data()[0] != dst[0].data()[0]);
}

TEST_CASE("serialize/deserialize round-trips every field exactly") {
  Checkpoint c = sample_checkpoint(2);
  check_equal(deserialize_checkpoint(serialize_checkpoint(c)), c);
}

TEST_CASE("serialization is deterministic") {
  CHECK(serialize_checkpoint(sample_checkpoint(3)) ==
        serialize_checkpoint(sample_checkpoint(3)));
}

TEST_CASE("file round trip") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "epr_ckpt_test.ckpt";
  Checkpoint c = sample_checkpoint(4);
  save_checkpoint(path.string(), c);
  check_equal(load_checkpoint(path.string()), c);
  fs::remove(path);
}

TEST_CASE("bad magic and truncation are rejected") {
  auto bytes = serialize_checkpoint(sample_checkpoint(5));
  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(corrupt),
                       doctest::Contains("magic"), std::runtime_error);
  auto short_header = std::vector<uint8_t>(bytes.begin(), bytes.begin() + 20);
  CHECK_THROWS_AS(deserialize_checkpoint(short_header), std::runtime_error);
  auto short_data = std::vector<uint8_t>(bytes.begin(), bytes.end() - 7);
  CHECK_THROWS_AS(deserialize_checkpoint(short_data), std::runtime_error);
}

TEST_CASE("uninitialized optimizer state cannot be serialized") {
  Checkpoint c = sample_checkpoint(6);
  c.adam.m.clear();
  CHECK_THROWS_AS(serialize_checkpoint(c), std::invalid_argument);
}

TEST_CASE("missing file raises a descriptive error") {
  CHECK_THROWS_WITH_AS(load_checkpoint("/nonexistent/epr.ckpt"),
                       doctest::Contains("cannot open"), std::runtime_error);
}
