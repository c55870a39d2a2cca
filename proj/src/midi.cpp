#include "epr/midi.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace epr {

namespace {

[[noreturn]] void fail(const std::string& what, size_t offset) {
  std::ostringstream msg;
  msg << what << " at byte " << offset;
  throw std::runtime_error(msg.str());
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  uint8_t u8() {
    if (pos >= buf.size()) fail("unexpected end of file", pos);
    return buf[pos++];
  }
  uint16_t u16() { return uint16_t(u8()) << 8 | u8(); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | u8();
    return v;
  }
  // Variable-length quantity, at most 4 bytes.
  uint32_t vlq() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      uint8_t b = u8();
      v = v << 7 | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    fail("overlong variable-length quantity", pos);
  }
  void skip(size_t n) {
    if (pos + n > buf.size()) fail("unexpected end of file", pos);
    pos += n;
  }
};

struct ActiveNote {
  int64_t onset;
  int velocity;
};

void close_note(std::vector<NoteEvent>& notes, int pitch, ActiveNote active,
                int64_t tick) {
  int64_t offset = tick > active.onset ? tick : active.onset + 1;
  notes.push_back({pitch, active.onset, offset, active.velocity});
}

struct EventSink {
  std::vector<NoteEvent>& notes;
  std::vector<TempoEvent>& tempos;
  std::vector<SustainEvent>& sustains;
  // One slot per pitch; a note-on over a sounding pitch closes the
  // previous note at the new onset.
  std::vector<ActiveNote> active = std::vector<ActiveNote>(128, {-1, 0});

  void note_on(int pitch, int velocity, int64_t tick) {
    if (active[pitch].onset >= 0)
      close_note(notes, pitch, active[pitch], tick);
    active[pitch] = {tick, velocity};
  }
  void note_off(int pitch, int64_t tick) {
    if (active[pitch].onset < 0) return;  // stray note-off, ignore
    close_note(notes, pitch, active[pitch], tick);
    active[pitch].onset = -1;
  }
  void finish(size_t track_offset) {
    for (int p = 0; p < 128; ++p)
      if (active[p].onset >= 0) {
        std::ostringstream msg;
        msg << "unpaired note-on (pitch " << p << ") in track at byte "
            << track_offset;
        throw std::runtime_error(msg.str());
      }
  }
};

void read_track(Reader& r, size_t track_len, std::vector<NoteEvent>& notes,
                std::vector<TempoEvent>& tempos,
                std::vector<SustainEvent>& sustains) {
  size_t track_start = r.pos;
  size_t track_end = track_start + track_len;
  if (track_end > r.buf.size()) fail("track length mismatch", track_start);

  EventSink sink{notes, tempos, sustains};
  int64_t tick = 0;
  uint8_t running = 0;
  bool done = false;
  while (!done) {
    if (r.pos >= track_end) fail("track length mismatch", r.pos);
    tick += r.vlq();
    uint8_t status = r.buf[r.pos];
    if (status & 0x80) {
      r.pos++;
    } else {
      if (!(running & 0x80)) fail("event without status byte", r.pos);
      status = running;
    }
    switch (status & 0xf0) {
      case 0x80: {
        int pitch = r.u8();
        r.u8();  // release velocity
        sink.note_off(pitch, tick);
        running = status;
        break;
      }
      case 0x90: {
        int pitch = r.u8();
        int velocity = r.u8();
        if (velocity == 0)
          sink.note_off(pitch, tick);
        else
          sink.note_on(pitch, velocity, tick);
        running = status;
        break;
      }
      case 0xb0: {
        int controller = r.u8();
        int value = r.u8();
        if (controller == 64) sustains.push_back({tick, value});
        running = status;
        break;
      }
      case 0xa0:
      case 0xe0:
        r.skip(2);
        running = status;
        break;
      case 0xc0:
      case 0xd0:
        r.skip(1);
        running = status;
        break;
      case 0xf0:
        if (status == 0xff) {
          uint8_t type = r.u8();
          uint32_t len = r.vlq();
          if (type == 0x51) {
            if (len != 3) fail("malformed tempo event", r.pos);
            int64_t uspb = int64_t(r.u8()) << 16;
            uspb |= int64_t(r.u8()) << 8;
            uspb |= r.u8();
            tempos.push_back({tick, uspb});
          } else if (type == 0x2f) {
            r.skip(len);
            done = true;
          } else {
            r.skip(len);
          }
          running = 0;  // meta events cancel running status
        } else if (status == 0xf0 || status == 0xf7) {
          r.skip(r.vlq());
          running = 0;
        } else {
          fail("unsupported system message", r.pos - 1);
        }
        break;
      default:
        fail("unknown status byte", r.pos - 1);
    }
  }
  if (r.pos != track_end) fail("track length mismatch", r.pos);
  sink.finish(track_start);
}

void write_vlq(std::vector<uint8_t>& out, int64_t v) {
  uint8_t bytes[5];
  int n = 0;
  do {
    bytes[n++] = uint8_t(v & 0x7f);
    v >>= 7;
  } while (v > 0);
  for (int i = n - 1; i > 0; --i) out.push_back(bytes[i] | 0x80);
  out.push_back(bytes[0]);
}

void check_range(int64_t v, int64_t lo, int64_t hi, const char* what) {
  if (v < lo || v > hi) {
    std::ostringstream msg;
    msg << what << " " << v << " outside representable range [" << lo << ", "
        << hi << "]";
    throw std::out_of_range(msg.str());
  }
}

struct WireEvent {
  int64_t tick;
  int kind;  // 0 tempo, 1 sustain, 2 note-off, 3 note-on
  int a = 0;
  int b = 0;
  int64_t tempo = 0;
};

}  // namespace

bool operator==(const NoteEvent& a, const NoteEvent& b) {
  return a.pitch == b.pitch && a.onset == b.onset && a.offset == b.offset &&
         a.velocity == b.velocity;
}

bool operator==(const TempoEvent& a, const TempoEvent& b) {
  return a.tick == b.tick &&
         a.microseconds_per_beat == b.microseconds_per_beat;
}

bool operator==(const SustainEvent& a, const SustainEvent& b) {
  return a.tick == b.tick && a.value == b.value;
}

bool operator==(const MidiDocument& a, const MidiDocument& b) {
  return a.resolution == b.resolution && a.notes == b.notes &&
         a.tempos == b.tempos && a.sustains == b.sustains;
}

void MidiDocument::normalize() {
  std::stable_sort(notes.begin(), notes.end(),
                   [](const NoteEvent& a, const NoteEvent& b) {
                     return std::tie(a.onset, a.pitch) <
                            std::tie(b.onset, b.pitch);
                   });
  std::stable_sort(tempos.begin(), tempos.end(),
                   [](const TempoEvent& a, const TempoEvent& b) {
                     return a.tick < b.tick;
                   });
  std::stable_sort(sustains.begin(), sustains.end(),
                   [](const SustainEvent& a, const SustainEvent& b) {
                     return a.tick < b.tick;
                   });
  if (tempos.empty() || tempos.front().tick != 0)
    tempos.insert(tempos.begin(), TempoEvent{0, 500000});
}

MidiDocument read_midi(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  if (bytes.size() < 14 || bytes[0] != 'M' || bytes[1] != 'T' ||
      bytes[2] != 'h' || bytes[3] != 'd')
    fail("malformed header chunk (missing MThd)", 0);
  r.pos = 4;
  uint32_t header_len = r.u32();
  if (header_len < 6) fail("malformed header chunk (length < 6)", 4);
  uint16_t format = r.u16();
  uint16_t ntrks = r.u16();
  uint16_t division = r.u16();
  r.skip(header_len - 6);
  if (format > 1) fail("unsupported SMF format", 8);
  if (division & 0x8000) fail("SMPTE time division unsupported", 12);
  if (division == 0) fail("zero time division", 12);

  MidiDocument doc;
  doc.resolution = division;
  for (uint16_t t = 0; t < ntrks; ++t) {
    size_t chunk_at = r.pos;
    if (r.u8() != 'M' || r.u8() != 'T' || r.u8() != 'r' || r.u8() != 'k')
      fail("malformed track chunk (missing MTrk)", chunk_at);
    uint32_t len = r.u32();
    read_track(r, len, doc.notes, doc.tempos, doc.sustains);
  }
  doc.normalize();
  return doc;
}

std::vector<uint8_t> write_midi(const MidiDocument& doc) {
  check_range(doc.resolution, 1, 0x7fff, "resolution");
  std::vector<WireEvent> events;
  events.reserve(doc.notes.size() * 2 + doc.tempos.size() +
                 doc.sustains.size());
  for (const auto& t : doc.tempos) {
    check_range(t.tick, 0, INT64_MAX, "tempo tick");
    check_range(t.microseconds_per_beat, 1, 0xffffff, "tempo");
    events.push_back({t.tick, 0, 0, 0, t.microseconds_per_beat});
  }
  for (const auto& s : doc.sustains) {
    check_range(s.tick, 0, INT64_MAX, "sustain tick");
    check_range(s.value, 0, 127, "sustain value");
    events.push_back({s.tick, 1, 64, s.value});
  }
  for (const auto& n : doc.notes) {
    check_range(n.pitch, 0, 127, "pitch");
    check_range(n.velocity, 1, 127, "velocity");
    check_range(n.onset, 0, INT64_MAX, "onset");
    if (n.offset <= n.onset)
      throw std::out_of_range("note offset must exceed onset");
    events.push_back({n.onset, 3, n.pitch, n.velocity});
    events.push_back({n.offset, 2, n.pitch, 0});
  }
  // Note-offs before note-ons at the same tick keeps same-pitch
  // back-to-back notes separable on read.
  std::stable_sort(events.begin(), events.end(),
                   [](const WireEvent& a, const WireEvent& b) {
                     return std::tie(a.tick, a.kind, a.a) <
                            std::tie(b.tick, b.kind, b.a);
                   });

  std::vector<uint8_t> track;
  int64_t last_tick = 0;
  for (const auto& e : events) {
    write_vlq(track, e.tick - last_tick);
    last_tick = e.tick;
    switch (e.kind) {
      case 0:
        track.push_back(0xff);
        track.push_back(0x51);
        track.push_back(0x03);
        track.push_back(uint8_t(e.tempo >> 16));
        track.push_back(uint8_t(e.tempo >> 8));
        track.push_back(uint8_t(e.tempo));
        break;
      case 1:
        track.push_back(0xb0);
        track.push_back(64);
        track.push_back(uint8_t(e.b));
        break;
      case 2:
        track.push_back(0x80);
        track.push_back(uint8_t(e.a));
        track.push_back(0x40);
        break;
      case 3:
        track.push_back(0x90);
        track.push_back(uint8_t(e.a));
        track.push_back(uint8_t(e.b));
        break;
    }
  }
  write_vlq(track, 0);
  track.push_back(0xff);
  track.push_back(0x2f);
  track.push_back(0x00);

  std::vector<uint8_t> out;
  auto u32be = [&out](uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
  };
  auto u16be = [&out](uint16_t v) {
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
  };
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  u32be(6);
  u16be(0);  // format 0
  u16be(1);  // one track
  u16be(uint16_t(doc.resolution));
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  u32be(uint32_t(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

int64_t mul_div_round(int64_t v, int64_t num, int64_t den) {
  if (den <= 0 || num < 0) throw std::invalid_argument("bad ratio");
  int64_t sign = v < 0 ? -1 : 1;
  int64_t a = v < 0 ? -v : v;
  return sign * ((2 * a * num + den) / (2 * den));
}

MidiDocument rescale_resolution(const MidiDocument& doc, int target) {
  if (doc.resolution <= 0 || target <= 0)
    throw std::invalid_argument("resolution must be positive");
  MidiDocument out = doc;
  out.resolution = target;
  for (auto& n : out.notes) {
    n.onset = mul_div_round(n.onset, target, doc.resolution);
    n.offset = mul_div_round(n.offset, target, doc.resolution);
    if (n.offset <= n.onset) n.offset = n.onset + 1;
  }
  for (auto& t : out.tempos)
    t.tick = mul_div_round(t.tick, target, doc.resolution);
  for (auto& s : out.sustains)
    s.tick = mul_div_round(s.tick, target, doc.resolution);
  out.normalize();
  return out;
}

double ticks_to_seconds(int64_t tick, const MidiDocument& doc) {
  if (tick < 0) throw std::invalid_argument("negative tick");
  double seconds = 0.0;
  int64_t seg_start = 0;
  int64_t uspb = 500000;
  for (const auto& t : doc.tempos) {
    if (t.tick >= tick) break;
    if (t.tick > seg_start)
      seconds += double(t.tick - seg_start) * uspb / (1e6 * doc.resolution);
    seg_start = std::max(seg_start, t.tick);
    uspb = t.microseconds_per_beat;
  }
  seconds += double(tick - seg_start) * uspb / (1e6 * doc.resolution);
  return seconds;
}

}  // namespace epr
