#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "epr/training.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace epr;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.hidden_dim = 8;
  cfg.ff_dim = 16;
  cfg.num_pianists = 2;
  cfg.window = 8;
  cfg.seed = 5;
  return cfg;
}

TrainConfig fast_train(int max_epochs, int patience) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = max_epochs;
  cfg.patience = patience;
  cfg.learning_rate = 2e-3;
  cfg.schedule = {2e-3, 10, 2, 0.0};
  cfg.seed = 77;
  return cfg;
}

std::vector<TrainExample> synthetic_examples(int count, int window,
                                             uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainExample> out;
  for (int e = 0; e < count; ++e) {
    TrainExample ex;
    ex.pianist = {int(e % 2), e % 2 ? "b" : "a"};
    ex.io.inputs.assign(window, {0, 0, 0, 0, 0, 0});
    ex.io.targets.assign(window, {0, 0, 0});
    ex.io.mask.assign(window, 1);
    for (int i = 0; i < window; ++i) {
      ex.io.inputs[i] = {double(rng() % 89),  double(rng() % 64),
                         double(rng() % 500), 0.0,
                         double((i * 96) % 1536), double(rng() % 700)};
      ex.io.targets[i] = {20.0 + double(rng() % 20),
                          double(int(rng() % 400) - 200),
                          100.0 + double(rng() % 500)};
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  TrainConfig cfg2;
  cfg2.patience = 400;
  cfg2.max_epochs = 400;
  CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
}

TEST_CASE("log line carries twelve space-separated fields") {
  EpochMetrics m;
  m.epoch = 12;
  m.lr = 1e-4;
  m.weights = {1.25, 0.5, 1.25};
  m.val_total = 0.75;
  std::istringstream in(format_log_line(m));
  std::vector<std::string> fields;
  std::string f;
  while (in >> f) fields.push_back(f);
  REQUIRE(fields.size() == 12);
  CHECK(fields[0] == "12");
  CHECK(fields[1] == "0.0001");
  CHECK(fields[2] == "1.25");
  CHECK(fields[11] == "0.75");
}

TEST_CASE("empty splits and all-masked windows are rejected") {
  auto train = synthetic_examples(4, 8, 1);
  CHECK_THROWS_AS(fit(tiny_model(), fast_train(5, 2), {}, train, {"a", "b"}),
                  std::invalid_argument);
  auto bad = synthetic_examples(4, 8, 1);
  bad[2].io.mask.assign(8, 0);
  CHECK_THROWS_AS(fit(tiny_model(), fast_train(5, 2), bad, train, {"a", "b"}),
                  std::invalid_argument);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  auto train = synthetic_examples(8, 8, 2);
  auto val = synthetic_examples(3, 8, 3);
  auto run = [&] {
    return fit(tiny_model(), fast_train(6, 5), train, val, {"a", "b"});
  };
  FitResult r1 = run();
  FitResult r2 = run();
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t i = 0; i < r1.log.size(); ++i)
    CHECK(format_log_line(r1.log[i]) == format_log_line(r2.log[i]));
  auto p1 = r1.last.params.all(), p2 = r2.last.params.all();
  for (size_t i = 0; i < p1.size(); ++i)
    CHECK(p1[i].data() == p2[i].data());
}

TEST_CASE("the loop overfits a small fixed batch") {
  auto train = synthetic_examples(4, 8, 4);
  FitResult r = fit(tiny_model(), fast_train(80, 79), train, train,
                    {"a", "b"});
  REQUIRE(!r.log.empty());
  double first = r.log.front().train_total;
  double last = r.log.back().train_total;
  CHECK(last < 0.5 * first);
}

TEST_CASE("learning rate column follows the cosine schedule") {
  auto train = synthetic_examples(6, 8, 6);
  auto val = synthetic_examples(2, 8, 7);
  TrainConfig cfg = fast_train(12, 11);
  FitResult r = fit(tiny_model(), cfg, train, val, {"a", "b"});
  for (const auto& m : r.log)
    CHECK(m.lr == doctest::Approx(lr_at(cfg.schedule, m.epoch - 1))
                      .epsilon(1e-12));
}

TEST_CASE("gradnorm weights sum to exactly 3 every epoch") {
  auto train = synthetic_examples(8, 8, 8);
  auto val = synthetic_examples(2, 8, 9);
  FitResult r = fit(tiny_model(), fast_train(10, 9), train, val, {"a", "b"});
  CHECK(r.last.weights.sum() == 3.0);
  for (const auto& m : r.log) CHECK(m.weights.sum() == 3.0);
}

TEST_CASE("early stopping waits exactly patience epochs past the best") {
  // With a zero learning rate the parameters never move, so the first
  // epoch is the only strict improvement over -inf.
  auto train = synthetic_examples(4, 8, 10);
  auto val = synthetic_examples(2, 8, 11);
  TrainConfig cfg = fast_train(50, 5);
  cfg.learning_rate = 0.0;
  cfg.schedule.base_lr = 0.0;
  FitResult r = fit(tiny_model(), cfg, train, val, {"a", "b"});
  CHECK(r.stopped_epoch == 6);  // best at 1, then 5 flat epochs
  CHECK(r.best.epoch == 1);
  CHECK(int64_t(r.log.size()) == 6);
}

TEST_CASE("best checkpoint matches the validation minimum") {
  auto train = synthetic_examples(8, 8, 12);
  auto val = synthetic_examples(3, 8, 13);
  FitResult r = fit(tiny_model(), fast_train(15, 14), train, val, {"a", "b"});
  double min_val = r.log.front().val_total;
  int64_t argmin = r.log.front().epoch;
  for (const auto& m : r.log)
    if (m.val_total < min_val) {
      min_val = m.val_total;
      argmin = m.epoch;
    }
  CHECK(r.best.best_validation_loss == min_val);
  CHECK(r.best.epoch == argmin);
  CHECK(r.best.pianist_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("resuming from the last checkpoint reproduces a straight run") {
  auto train = synthetic_examples(8, 8, 14);
  auto val = synthetic_examples(3, 8, 15);
  ModelConfig mc = tiny_model();
  FitResult straight = fit(mc, fast_train(8, 7), train, val, {"a", "b"});

  FitResult head = fit(mc, fast_train(3, 2), train, val, {"a", "b"});
  FitResult tail = fit(mc, fast_train(5, 4), train, val, {"a", "b"}, "",
                       &head.last);
  CHECK(tail.stopped_epoch == straight.stopped_epoch);
  auto pa = straight.last.params.all(), pb = tail.last.params.all();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].data() == pb[i].data());
  REQUIRE(head.log.size() + tail.log.size() == straight.log.size());
  for (size_t i = 0; i < tail.log.size(); ++i)
    CHECK(format_log_line(tail.log[i]) ==
          format_log_line(straight.log[head.log.size() + i]));
}

TEST_CASE("fit writes checkpoints and a parseable log") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "epr_fit_test";
  fs::remove_all(dir);
  auto train = synthetic_examples(4, 8, 16);
  auto val = synthetic_examples(2, 8, 17);
  FitResult r =
      fit(tiny_model(), fast_train(4, 3), train, val, {"a", "b"}, dir.string());
  CHECK(fs::exists(dir / "best.ckpt"));
  CHECK(fs::exists(dir / "last.ckpt"));
  std::ifstream log(dir / "train_log.txt");
  std::string line;
  size_t lines = 0;
  while (std::getline(log, line)) {
    CHECK(line == format_log_line(r.log[lines]));
    ++lines;
  }
  CHECK(lines == r.log.size());
  fs::remove_all(dir);
}
