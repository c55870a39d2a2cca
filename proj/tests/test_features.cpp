#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "epr/features.hpp"

#include <random>

using namespace epr;

namespace {

TokenSequence seq_from_onsets(const std::vector<int64_t>& onsets,
                              int duration = 100, int pitch_tok = 10) {
  TokenSequence seq;
  for (int64_t onset : onsets) {
    OctupleToken t;
    t.pitch_tok = pitch_tok;
    t.velocity_tok = 40;
    t.duration_tok = duration;
    t.bar_tok = int(onset / 1536);
    t.position_tok = int(onset % 1536);
    seq.tokens.push_back(t);
  }
  return seq;
}

// Brute-force restatement of the IOI definition.
std::vector<int64_t> ioi_oracle(const TokenSequence& seq) {
  size_t n = seq.tokens.size();
  std::vector<int64_t> out(n);
  for (size_t i = 0; i < n; ++i) {
    if (i == n - 1) {
      out[i] = 0;
    } else {
      out[i] = (int64_t(seq.tokens[i + 1].bar_tok) * 1536 +
                seq.tokens[i + 1].position_tok) -
               (int64_t(seq.tokens[i].bar_tok) * 1536 +
                seq.tokens[i].position_tok);
    }
  }
  return out;
}

TokenSequence random_sequence(std::mt19937_64& rng) {
  int n = 1 + int(rng() % 50);
  std::vector<int64_t> onsets;
  int64_t onset = 0;
  for (int i = 0; i < n; ++i) {
    onset += rng() % 800;
    onsets.push_back(onset);
  }
  TokenSequence seq = seq_from_onsets(onsets);
  for (auto& t : seq.tokens) t.duration_tok = int(rng() % 4609);
  return seq;
}

}  // namespace

TEST_CASE("compute_ioi hand cases") {
  CHECK(compute_ioi(seq_from_onsets({0})) == std::vector<int64_t>{0});
  CHECK(compute_ioi(seq_from_onsets({0, 384, 768})) ==
        std::vector<int64_t>{384, 384, 0});
  CHECK(compute_ioi(seq_from_onsets({0, 0, 1536})) ==
        std::vector<int64_t>{0, 1536, 0});
}

TEST_CASE("compute_ioi matches brute-force oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    TokenSequence seq = random_sequence(rng);
    auto got = compute_ioi(seq);
    CHECK(got == ioi_oracle(seq));
    CHECK(got.back() == 0);
    for (int64_t v : got) CHECK(v >= 0);
  }
}

TEST_CASE("compute_dd hand cases") {
  TokenSequence p = seq_from_onsets({0}, 100);
  TokenSequence s = seq_from_onsets({0}, 90);
  CHECK(compute_dd(p, s) == std::vector<int64_t>{10});

  CHECK(compute_dd(p, p) == std::vector<int64_t>{0});

  TokenSequence p2 = seq_from_onsets({0, 10});
  TokenSequence s2 = seq_from_onsets({0, 10});
  p2.tokens[0].duration_tok = 50;
  p2.tokens[1].duration_tok = 4608;
  s2.tokens[0].duration_tok = 60;
  s2.tokens[1].duration_tok = 0;
  CHECK(compute_dd(p2, s2) == std::vector<int64_t>{-10, 4608});

  TokenSequence shorter = seq_from_onsets({0});
  CHECK_THROWS_AS(compute_dd(p2, shorter), std::invalid_argument);
}

TEST_CASE("scale_score_to_performance scales to matching length") {
  MidiDocument score, perf;
  score.notes.push_back({60, 0, 400, 80});
  score.notes.push_back({62, 400, 1000, 80});
  perf.notes.push_back({60, 0, 900, 70});
  perf.notes.push_back({62, 800, 2000, 70});
  score.normalize();
  perf.normalize();
  MidiDocument scaled = scale_score_to_performance(score, perf);
  CHECK(scaled.notes[0].offset == 800);
  CHECK(scaled.notes[1].onset == 800);
  CHECK(scaled.notes[1].offset == 2000);

  CHECK(scale_score_to_performance(score, score) == score);

  MidiDocument empty;
  empty.normalize();
  CHECK_THROWS_AS(scale_score_to_performance(empty, perf),
                  std::invalid_argument);
}

TEST_CASE("augmentation ratio grid") {
  auto ratios = augmentation_ratios();
  REQUIRE(ratios.size() == 10);
  CHECK(ratios.front() == 0.75);
  CHECK(ratios.back() == doctest::Approx(1.25).epsilon(1e-12));
  double step = 0.5 / 9.0;
  for (size_t i = 0; i + 1 < ratios.size(); ++i)
    CHECK(ratios[i + 1] - ratios[i] == doctest::Approx(step).epsilon(1e-12));
  // No exact-1.0 member; the middle pair straddles it symmetrically.
  CHECK(ratios[4] == doctest::Approx(0.9722).epsilon(1e-3));
  CHECK(ratios[5] == doctest::Approx(1.0278).epsilon(1e-3));
  for (size_t i = 0; i < ratios.size(); ++i)
    CHECK(ratios[i] + ratios[ratios.size() - 1 - i] ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("augment produces 10 scaled aligned pairs") {
  MidiDocument score, perf;
  score.notes.push_back({60, 1536, 1936, 80});
  perf.notes.push_back({60, 1500, 2000, 90});
  score.normalize();
  perf.normalize();
  auto pairs = augment({score, perf});
  REQUIRE(pairs.size() == 10);
  CHECK(pairs[0].score.notes[0].onset == 1152);  // 1536 * 0.75
  for (const auto& p : pairs) {
    REQUIRE(p.score.notes.size() == 1);
    CHECK(p.score.notes[0].pitch == p.performance.notes[0].pitch);
    CHECK(p.score.notes[0].velocity == 80);  // velocity untouched
  }
}

TEST_CASE("align validates lengths and pitches") {
  TokenSequence a = seq_from_onsets({0, 100, 200});
  TokenSequence b = seq_from_onsets({0, 90, 210});
  PianistId pianist{1, "arrau"};
  AlignedPair pair = align(a, b, pianist);
  CHECK(pair.score.length() == 3);
  CHECK(pair.pianist.index == 1);

  TokenSequence shorter = seq_from_onsets({0, 100});
  CHECK_THROWS_WITH_AS(align(a, shorter, pianist),
                       doctest::Contains("length mismatch"),
                       std::invalid_argument);

  TokenSequence wrong = seq_from_onsets({0, 90, 210});
  wrong.tokens[2].pitch_tok = 11;
  CHECK_THROWS_WITH_AS(align(a, wrong, pianist),
                       doctest::Contains("index 2"), std::invalid_argument);
}

namespace {

AlignedPair make_pair(int notes) {
  std::vector<int64_t> onsets;
  for (int i = 0; i < notes; ++i) onsets.push_back(int64_t(i) * 120);
  TokenSequence score = seq_from_onsets(onsets, 100);
  TokenSequence perf = seq_from_onsets(onsets, 130);
  for (size_t i = 0; i < perf.tokens.size(); ++i)
    perf.tokens[i].velocity_tok = int(20 + i % 30);
  return align(perf, score, {0, "brendel"});
}

}  // namespace

TEST_CASE("windowing cuts, pads, and masks") {
  auto windows = make_windows(make_pair(2500), 1000);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].mask_sum() == 1000);
  CHECK(windows[1].mask_sum() == 1000);
  CHECK(windows[2].mask_sum() == 500);
  for (const auto& w : windows) CHECK(w.window() == 1000);
  // Padded tail: mask 0 and zeroed rows.
  for (size_t i = 500; i < 1000; ++i) {
    CHECK(windows[2].mask[i] == 0);
    for (double v : windows[2].inputs[i]) CHECK(v == 0.0);
    for (double v : windows[2].targets[i]) CHECK(v == 0.0);
  }

  CHECK(make_windows(make_pair(1000), 1000).size() == 1);
  CHECK(make_windows(make_pair(1000), 1000)[0].mask_sum() == 1000);
  CHECK(make_windows(make_pair(1), 1000)[0].mask_sum() == 1);
}

TEST_CASE("windows rebase bars to zero") {
  AlignedPair pair = make_pair(2500);
  auto windows = make_windows(pair, 1000);
  CHECK(windows[1].inputs[0][3] == 0.0);  // bar column
  CHECK(windows[2].inputs[0][3] == 0.0);
}

TEST_CASE("build_model_io target identities") {
  AlignedPair pair = make_pair(50);
  auto windows = make_windows(pair, 50);
  REQUIRE(windows.size() == 1);
  const ModelIO& io = windows[0];
  auto perf_ioi = compute_ioi(pair.performance);
  for (int i = 0; i < 50; ++i) {
    CHECK(io.targets[i][0] == double(pair.performance.tokens[i].velocity_tok));
    CHECK(io.targets[i][1] == 130.0 - 100.0);  // DD
    CHECK(io.targets[i][2] == double(perf_ioi[i]));
  }

  // score == performance: DD all zero, target IOI equals score IOI.
  TokenSequence s = pair.score;
  AlignedPair same = align(s, s, {0, "x"});
  auto w = make_windows(same, 50)[0];
  for (int i = 0; i < 50; ++i) {
    CHECK(w.targets[i][1] == 0.0);
    CHECK(w.targets[i][2] == w.inputs[i][5]);
  }
}

TEST_CASE("reconstruction inverts the target construction") {
  AlignedPair pair = make_pair(300);
  auto io = make_windows(pair, 300)[0];
  std::vector<double> v(300), dd(300), ioi(300);
  for (int i = 0; i < 300; ++i) {
    v[i] = io.targets[i][0];
    dd[i] = io.targets[i][1];
    ioi[i] = io.targets[i][2];
  }
  int64_t anchor = onset_time(pair.performance.tokens[0].bar_tok,
                              pair.performance.tokens[0].position_tok);
  TokenSequence rec = reconstruct_performance(pair.score, v, dd, ioi, anchor);
  for (int i = 0; i < 300; ++i) {
    CHECK(rec.tokens[i].velocity_tok == pair.performance.tokens[i].velocity_tok);
    CHECK(rec.tokens[i].duration_tok == pair.performance.tokens[i].duration_tok);
    CHECK(rec.tokens[i].bar_tok == pair.performance.tokens[i].bar_tok);
    CHECK(rec.tokens[i].position_tok == pair.performance.tokens[i].position_tok);
  }
}

TEST_CASE("reconstruction clamps and accumulates onsets") {
  TokenSequence score = seq_from_onsets({0, 384}, 100);
  TokenSequence rec = reconstruct_performance(score, {30, 30}, {0, 0},
                                              {500, 0});
  CHECK(onset_time(rec.tokens[1].bar_tok, rec.tokens[1].position_tok) == 500);

  TokenSequence rec2 = reconstruct_performance(score, {30, 30},
                                               {-10000, 0}, {384, 0});
  CHECK(rec2.tokens[0].duration_tok == 0);

  // identity predictions reproduce the score
  TokenSequence rec3 = reconstruct_performance(
      score, {40, 40}, {0, 0}, {384, 0});
  CHECK(rec3.tokens[0].position_tok == 0);
  CHECK(rec3.tokens[1].position_tok == 384);
  CHECK(rec3.tokens[0].duration_tok == 100);
}

TEST_CASE("manifest parsing and split assignment") {
  std::string text =
      "# comment\n"
      "p1.mid\ts1.mid\tbrendel\tpieceA\n"
      "p2.mid\ts2.mid\tarrau\tpieceA\n"
      "p3.mid\ts3.mid\tgulda\tpieceB\n";
  auto entries = parse_manifest(text);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].piece == "pieceA");
  assign_splits(entries, 42);
  CHECK(entries[0].split == entries[1].split);  // same piece, same split

  // 10 pieces split 8:1:1 at the piece level
  std::string many;
  for (int i = 0; i < 10; ++i)
    many += "p" + std::to_string(i) + ".mid\ts" + std::to_string(i) +
            ".mid\tx\tpiece" + std::to_string(i) + "\n";
  auto e10 = parse_manifest(many);
  assign_splits(e10, 1);
  int train = 0, val = 0, test = 0;
  for (const auto& e : e10) {
    if (e.split == "train") train++;
    if (e.split == "val") val++;
    if (e.split == "test") test++;
  }
  CHECK(train == 8);
  CHECK(val == 1);
  CHECK(test == 1);

  // deterministic given the seed
  auto again = parse_manifest(many);
  assign_splits(again, 1);
  for (size_t i = 0; i < e10.size(); ++i)
    CHECK(again[i].split == e10[i].split);
}
