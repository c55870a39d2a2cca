#include "epr/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace epr {

int64_t ModelIO::mask_sum() const {
  int64_t s = 0;
  for (auto m : mask) s += m;
  return s;
}

std::vector<int64_t> compute_ioi(const TokenSequence& seq) {
  if (seq.tokens.empty())
    throw std::invalid_argument("compute_ioi: empty sequence");
  size_t n = seq.tokens.size();
  std::vector<int64_t> ioi(n, 0);
  for (size_t i = 0; i + 1 < n; ++i) {
    const auto& a = seq.tokens[i];
    const auto& b = seq.tokens[i + 1];
    ioi[i] = onset_time(b.bar_tok, b.position_tok) -
             onset_time(a.bar_tok, a.position_tok);
  }
  return ioi;
}

std::vector<int64_t> compute_dd(const TokenSequence& performance,
                                const TokenSequence& score) {
  if (performance.tokens.size() != score.tokens.size()) {
    std::ostringstream msg;
    msg << "compute_dd: length mismatch (" << performance.tokens.size()
        << " vs " << score.tokens.size() << ")";
    throw std::invalid_argument(msg.str());
  }
  std::vector<int64_t> dd(score.tokens.size());
  for (size_t i = 0; i < dd.size(); ++i)
    dd[i] = int64_t(performance.tokens[i].duration_tok) -
            score.tokens[i].duration_tok;
  return dd;
}

namespace {

int64_t last_offset(const MidiDocument& doc) {
  int64_t last = 0;
  for (const auto& n : doc.notes) last = std::max(last, n.offset);
  return last;
}

}  // namespace

MidiDocument scale_score_to_performance(const MidiDocument& score,
                                        const MidiDocument& performance) {
  int64_t score_len = last_offset(score);
  int64_t perf_len = last_offset(performance);
  if (score_len == 0)
    throw std::invalid_argument("scale_score_to_performance: empty score");
  MidiDocument out = score;
  for (auto& n : out.notes) {
    n.onset = mul_div_round(n.onset, perf_len, score_len);
    n.offset = mul_div_round(n.offset, perf_len, score_len);
    if (n.offset <= n.onset) n.offset = n.onset + 1;
  }
  for (auto& t : out.tempos)
    t.tick = mul_div_round(t.tick, perf_len, score_len);
  for (auto& s : out.sustains)
    s.tick = mul_div_round(s.tick, perf_len, score_len);
  out.normalize();
  return out;
}

std::vector<double> augmentation_ratios() {
  std::vector<double> ratios(10);
  for (int i = 0; i < 10; ++i) ratios[i] = 0.75 + i * (0.5 / 9.0);
  return ratios;
}

namespace {

MidiDocument scale_by_ratio(const MidiDocument& doc, double ratio) {
  MidiDocument out = doc;
  for (auto& n : out.notes) {
    n.onset = std::llround(double(n.onset) * ratio);
    n.offset = std::llround(double(n.offset) * ratio);
    if (n.offset <= n.onset) n.offset = n.onset + 1;
  }
  for (auto& t : out.tempos) t.tick = std::llround(double(t.tick) * ratio);
  for (auto& s : out.sustains)
    s.tick = std::llround(double(s.tick) * ratio);
  out.normalize();
  return out;
}

}  // namespace

std::vector<DocumentPair> augment(const DocumentPair& pair) {
  std::vector<DocumentPair> out;
  out.reserve(10);
  for (double r : augmentation_ratios())
    out.push_back({scale_by_ratio(pair.score, r),
                   scale_by_ratio(pair.performance, r)});
  return out;
}

AlignedPair align(const TokenSequence& performance,
                  const TokenSequence& score, const PianistId& pianist) {
  if (performance.tokens.size() != score.tokens.size()) {
    std::ostringstream msg;
    msg << "align: length mismatch (performance " << performance.tokens.size()
        << " vs score " << score.tokens.size() << ")";
    throw std::invalid_argument(msg.str());
  }
  for (size_t i = 0; i < score.tokens.size(); ++i) {
    if (performance.tokens[i].pitch_tok != score.tokens[i].pitch_tok) {
      std::ostringstream msg;
      msg << "align: pitch mismatch at index " << i << " (performance "
          << performance.tokens[i].pitch_tok << " vs score "
          << score.tokens[i].pitch_tok << ")";
      throw std::invalid_argument(msg.str());
    }
  }
  return {score, performance, pianist};
}

namespace {

TokenSequence rebase_bars(const TokenSequence& seq) {
  TokenSequence out = seq;
  if (out.tokens.empty()) return out;
  int base = out.tokens.front().bar_tok;
  for (auto& t : out.tokens) t.bar_tok -= base;
  return out;
}

ModelIO build_window(const TokenSequence& score, const TokenSequence& perf,
                     int size) {
  ModelIO io;
  io.inputs.assign(size, {0, 0, 0, 0, 0, 0});
  io.targets.assign(size, {0, 0, 0});
  io.mask.assign(size, 0);
  size_t n = score.tokens.size();
  auto score_ioi = compute_ioi(score);
  auto perf_ioi = compute_ioi(perf);
  auto dd = compute_dd(perf, score);
  for (size_t i = 0; i < n; ++i) {
    const auto& s = score.tokens[i];
    io.inputs[i] = {double(s.pitch_tok),    double(s.velocity_tok),
                    double(s.duration_tok), double(s.bar_tok),
                    double(s.position_tok), double(score_ioi[i])};
    io.targets[i] = {double(perf.tokens[i].velocity_tok), double(dd[i]),
                     double(perf_ioi[i])};
    io.mask[i] = 1;
  }
  return io;
}

}  // namespace

std::vector<ModelIO> make_windows(const AlignedPair& pair, int size) {
  if (size <= 0) throw std::invalid_argument("window size must be positive");
  size_t n = pair.score.tokens.size();
  if (n != pair.performance.tokens.size())
    throw std::invalid_argument("make_windows: unaligned pair");
  std::vector<ModelIO> out;
  for (size_t start = 0; start < n; start += size) {
    size_t len = std::min<size_t>(size, n - start);
    TokenSequence sw, pw;
    sw.tokens.assign(pair.score.tokens.begin() + start,
                     pair.score.tokens.begin() + start + len);
    pw.tokens.assign(pair.performance.tokens.begin() + start,
                     pair.performance.tokens.begin() + start + len);
    out.push_back(build_window(rebase_bars(sw), rebase_bars(pw), size));
  }
  return out;
}

TokenSequence reconstruct_performance(const TokenSequence& score,
                                      const std::vector<double>& pred_velocity,
                                      const std::vector<double>& pred_dd,
                                      const std::vector<double>& pred_ioi,
                                      int64_t anchor_onset) {
  size_t n = score.tokens.size();
  if (pred_velocity.size() != n || pred_dd.size() != n ||
      pred_ioi.size() != n)
    throw std::invalid_argument(
        "reconstruct_performance: prediction length mismatch");
  TokenSequence out;
  out.tokens.resize(n);
  if (n == 0) return out;
  int64_t onset = anchor_onset >= 0
                      ? anchor_onset
                      : onset_time(score.tokens[0].bar_tok,
                                   score.tokens[0].position_tok);
  for (size_t i = 0; i < n; ++i) {
    OctupleToken& t = out.tokens[i];
    t.pitch_tok = score.tokens[i].pitch_tok;
    t.velocity_tok =
        int(std::clamp<int64_t>(std::llround(pred_velocity[i]), 0, 63));
    int64_t dur =
        std::llround(double(score.tokens[i].duration_tok) + pred_dd[i]);
    t.duration_tok =
        int(std::clamp<int64_t>(dur, 0, vocab::kMaxDuration));
    t.bar_tok = int(std::min<int64_t>(onset / vocab::kTicksPerBar,
                                      vocab::kMaxBar));
    t.position_tok = int(onset % vocab::kTicksPerBar);
    onset += std::max<int64_t>(std::llround(pred_ioi[i]), 0);
  }
  return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) fields.push_back(field);
    if (fields.size() < 3) {
      std::ostringstream msg;
      msg << "manifest line " << line_no
          << ": expected performance<TAB>score<TAB>pianist";
      throw std::runtime_error(msg.str());
    }
    ManifestEntry e;
    e.performance_path = fields[0];
    e.score_path = fields[1];
    e.pianist = fields[2];
    e.piece = fields.size() > 3 && !fields[3].empty() ? fields[3]
                                                      : fields[1];
    if (fields.size() > 4) e.split = fields[4];
    entries.push_back(e);
  }
  return entries;
}

void assign_splits(std::vector<ManifestEntry>& entries, uint64_t seed) {
  std::vector<std::string> pieces;
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (seen.insert(e.piece).second) pieces.push_back(e.piece);

  std::mt19937_64 rng(seed);
  for (size_t i = pieces.size(); i > 1; --i)
    std::swap(pieces[i - 1], pieces[rng() % i]);

  size_t n = pieces.size();
  size_t n_test = std::max<size_t>(1, n / 10);
  size_t n_val = std::max<size_t>(1, n / 10);
  if (n_test + n_val >= n) {
    n_test = n > 1 ? 1 : 0;
    n_val = n > 2 ? 1 : 0;
  }
  std::map<std::string, std::string> piece_split;
  for (size_t i = 0; i < n; ++i) {
    if (i < n_test)
      piece_split[pieces[i]] = "test";
    else if (i < n_test + n_val)
      piece_split[pieces[i]] = "val";
    else
      piece_split[pieces[i]] = "train";
  }
  for (auto& e : entries)
    if (e.split.empty()) e.split = piece_split[e.piece];
}

}  // namespace epr
