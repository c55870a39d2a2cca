#include "epr/tokenizer.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace epr {

bool operator==(const OctupleToken& a, const OctupleToken& b) {
  return a.pitch_tok == b.pitch_tok && a.velocity_tok == b.velocity_tok &&
         a.duration_tok == b.duration_tok &&
         a.position_tok == b.position_tok && a.bar_tok == b.bar_tok;
}

int64_t onset_time(int bar_tok, int position_tok) {
  return int64_t(bar_tok) * vocab::kTicksPerBar + position_tok;
}

TokenSequence tokenize(const MidiDocument& doc) {
  if (doc.resolution != vocab::kResolution) {
    std::ostringstream msg;
    msg << "tokenizer requires resolution " << vocab::kResolution << ", got "
        << doc.resolution;
    throw std::invalid_argument(msg.str());
  }
  TokenSequence seq;
  seq.tokens.reserve(doc.notes.size());
  for (const auto& n : doc.notes) {
    if (n.pitch < vocab::kPitchLow || n.pitch > vocab::kPitchHigh) {
      std::ostringstream msg;
      msg << "pitch " << n.pitch << " outside tokenizable range ["
          << vocab::kPitchLow << ", " << vocab::kPitchHigh << "]";
      throw std::out_of_range(msg.str());
    }
    if (n.velocity < 1 || n.velocity > 127)
      throw std::out_of_range("velocity outside 1..127");
    OctupleToken tok;
    tok.pitch_tok = n.pitch - vocab::kPitchLow;
    tok.velocity_tok = n.velocity / 2;
    tok.duration_tok =
        int(std::min<int64_t>(n.offset - n.onset, vocab::kMaxDuration));
    tok.bar_tok = int(std::min<int64_t>(n.onset / vocab::kTicksPerBar,
                                        vocab::kMaxBar));
    tok.position_tok = int(n.onset % vocab::kTicksPerBar);
    seq.tokens.push_back(tok);
  }
  std::stable_sort(seq.tokens.begin(), seq.tokens.end(),
                   [](const OctupleToken& a, const OctupleToken& b) {
                     return std::make_pair(onset_time(a.bar_tok,
                                                      a.position_tok),
                                           a.pitch_tok) <
                            std::make_pair(onset_time(b.bar_tok,
                                                      b.position_tok),
                                           b.pitch_tok);
                   });
  return seq;
}

namespace {

void check_token(const OctupleToken& t) {
  bool ok = t.pitch_tok >= 0 && t.pitch_tok < vocab::kPitch &&
            t.velocity_tok >= 0 && t.velocity_tok < vocab::kVelocity &&
            t.duration_tok >= 0 && t.duration_tok < vocab::kDuration &&
            t.position_tok >= 0 && t.position_tok < vocab::kPosition &&
            t.bar_tok >= 0 && t.bar_tok < vocab::kBar;
  if (!ok) throw std::out_of_range("token field outside vocabulary range");
}

}  // namespace

MidiDocument detokenize(const TokenSequence& seq) {
  MidiDocument doc;
  doc.resolution = vocab::kResolution;
  for (const auto& t : seq.tokens) {
    check_token(t);
    if (t.is_padding()) continue;
    NoteEvent n;
    n.pitch = t.pitch_tok + vocab::kPitchLow;
    n.velocity = std::clamp(t.velocity_tok * 2 + 1, 1, 127);
    n.onset = onset_time(t.bar_tok, t.position_tok);
    n.offset = n.onset + std::max(t.duration_tok, 1);
    doc.notes.push_back(n);
  }
  doc.normalize();
  return doc;
}

std::string dump_tokens(const TokenSequence& seq) {
  std::ostringstream out;
  for (const auto& t : seq.tokens)
    out << t.pitch_tok << ' ' << t.velocity_tok << ' ' << t.duration_tok
        << ' ' << t.position_tok << ' ' << t.bar_tok << '\n';
  return out.str();
}

TokenSequence parse_tokens(const std::string& text) {
  TokenSequence seq;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    OctupleToken t;
    if (!(ls >> t.pitch_tok >> t.velocity_tok >> t.duration_tok >>
          t.position_tok >> t.bar_tok)) {
      std::ostringstream msg;
      msg << "bad token record on line " << line_no;
      throw std::runtime_error(msg.str());
    }
    check_token(t);
    seq.tokens.push_back(t);
  }
  return seq;
}

}  // namespace epr
