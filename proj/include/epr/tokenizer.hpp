// Octuple-style per-note token records and the MidiDocument conversions.
//
// Vocabulary geometry: pitch 89, velocity 66, duration 4609, position
// 1537, bar 518. Velocity uses 64 width-2 bins plus 2 sentinels; position
// 1536 is the padding sentinel.

#pragma once

#include "epr/midi.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epr {

namespace vocab {
inline constexpr int kPitch = 89;
inline constexpr int kVelocity = 66;
inline constexpr int kDuration = 4609;
inline constexpr int kPosition = 1537;
inline constexpr int kBar = 518;

inline constexpr int kPitchLow = 21;
inline constexpr int kPitchHigh = 109;
inline constexpr int kTicksPerBar = 1536;  // 384 ticks/beat x 4 beats
inline constexpr int kMaxDuration = 4608;
inline constexpr int kMaxBar = 517;
inline constexpr int kVelocityPad = 64;
inline constexpr int kPositionPad = 1536;
inline constexpr int kResolution = 384;
}  // namespace vocab

struct OctupleToken {
  int pitch_tok = 0;     // 0..88
  int velocity_tok = 0;  // 0..65 (64 = PAD)
  int duration_tok = 0;  // 0..4608
  int position_tok = 0;  // 0..1536 (1536 = PAD)
  int bar_tok = 0;       // 0..517

  static OctupleToken padding() {
    return {vocab::kPitch - 1, vocab::kVelocityPad, vocab::kMaxDuration,
            vocab::kPositionPad, vocab::kMaxBar};
  }
  bool is_padding() const { return position_tok == vocab::kPositionPad; }
};

bool operator==(const OctupleToken& a, const OctupleToken& b);

struct TokenSequence {
  std::vector<OctupleToken> tokens;

  size_t length() const { return tokens.size(); }
};

// OT = bar * 1536 + position.
int64_t onset_time(int bar_tok, int position_tok);

// Requires resolution 384 and all pitches in 21..109.
TokenSequence tokenize(const MidiDocument& doc);

// Inverse mapping; velocity_tok t -> velocity 2t+1 clamped to 1..127,
// zero durations repaired to 1 tick. Output carries the default tempo map.
MidiDocument detokenize(const TokenSequence& seq);

// Line-delimited dump, five integers per note.
std::string dump_tokens(const TokenSequence& seq);
TokenSequence parse_tokens(const std::string& text);

}  // namespace epr
