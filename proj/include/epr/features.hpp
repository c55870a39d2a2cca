// Aligned score/performance pairs and everything between raw documents
// and model-ready windows: length scaling, tempo augmentation, IOI/DD,
// windowing, and the inverse reconstruction of a performance from
// predicted expressive values.

#pragma once

#include "epr/midi.hpp"
#include "epr/tokenizer.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace epr {

struct PianistId {
  int index = 0;
  std::string name;
};

struct AlignedPair {
  TokenSequence score;
  TokenSequence performance;
  PianistId pianist;
};

inline constexpr int kWindowSize = 1000;
inline constexpr double kIoiCeiling = 6144.0;  // 4 bars

// One model window: raw score token values (plus score IOI) in, the
// performance's expressive values out. Padded positions carry mask 0 and
// all-zero rows.
struct ModelIO {
  std::vector<std::array<double, 6>> inputs;  // pitch, vel, dur, bar, pos, IOI
  std::vector<std::array<double, 3>> targets;  // velocity, DD, IOI
  std::vector<uint8_t> mask;

  size_t window() const { return mask.size(); }
  int64_t mask_sum() const;
};

// IOI_i = OT_{i+1} - OT_i, last entry 0.
std::vector<int64_t> compute_ioi(const TokenSequence& seq);

// DD_i = Dp_i - Ds_i.
std::vector<int64_t> compute_dd(const TokenSequence& performance,
                                const TokenSequence& score);

// Scales every score tick by (last performance offset)/(last score offset).
MidiDocument scale_score_to_performance(const MidiDocument& score,
                                        const MidiDocument& performance);

struct DocumentPair {
  MidiDocument score;
  MidiDocument performance;
};

// The 10 evenly spaced tempo ratios over [0.75, 1.25].
std::vector<double> augmentation_ratios();

// One scaled copy of the pair per ratio; velocities untouched.
std::vector<DocumentPair> augment(const DocumentPair& pair);

// Positional 1:1 pairing; rejects length or per-index pitch mismatches.
AlignedPair align(const TokenSequence& performance,
                  const TokenSequence& score, const PianistId& pianist);

// Consecutive non-overlapping windows; the final short window is padded.
// Bars are rebased so each window starts at bar 0; IOI is computed per
// window after cutting.
std::vector<ModelIO> make_windows(const AlignedPair& pair,
                                  int size = kWindowSize);

// Inverse of the target construction. Onsets accumulate from the anchor
// (score first onset unless overridden); negative predicted IOIs clamp
// to 0 to keep onsets monotone.
TokenSequence reconstruct_performance(const TokenSequence& score,
                                      const std::vector<double>& pred_velocity,
                                      const std::vector<double>& pred_dd,
                                      const std::vector<double>& pred_ioi,
                                      int64_t anchor_onset = -1);

// Dataset manifest: one tab-separated record per line,
//   performance_path <TAB> score_path <TAB> pianist [<TAB> piece [<TAB> split]]
// piece defaults to the score path; split is filled by assign_splits.
struct ManifestEntry {
  std::string performance_path;
  std::string score_path;
  std::string pianist;
  std::string piece;
  std::string split;  // "train" | "val" | "test"
};

std::vector<ManifestEntry> parse_manifest(const std::string& text);

// Deterministic piece-level 8:1:1 split; entries with a preassigned
// split keep it.
void assign_splits(std::vector<ManifestEntry>& entries, uint64_t seed);

}  // namespace epr
