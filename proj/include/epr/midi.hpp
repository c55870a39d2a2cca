// Standard MIDI File reading/writing and the in-memory note document.
//
// Formats 0 and 1 are accepted; format-1 tracks are merged on read.
// Output is always a single-track format-0 file with no running status,
// so write_midi followed by read_midi reproduces the document exactly.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace epr {

struct NoteEvent {
  int pitch = 0;       // MIDI note number
  int64_t onset = 0;   // absolute ticks
  int64_t offset = 0;  // absolute ticks, > onset
  int velocity = 0;    // 1..127
};

bool operator==(const NoteEvent& a, const NoteEvent& b);

struct TempoEvent {
  int64_t tick = 0;
  int64_t microseconds_per_beat = 500000;
};

bool operator==(const TempoEvent& a, const TempoEvent& b);

// Sustain pedal (CC64); carried through write_midi verbatim, ignored by
// everything downstream of midi_io.
struct SustainEvent {
  int64_t tick = 0;
  int value = 0;  // 0..127
};

bool operator==(const SustainEvent& a, const SustainEvent& b);

struct MidiDocument {
  int resolution = 384;  // ticks per beat
  std::vector<NoteEvent> notes;
  std::vector<TempoEvent> tempos;
  std::vector<SustainEvent> sustains;

  // Sorts notes by (onset, pitch) and guarantees a tempo event at tick 0.
  void normalize();
};

bool operator==(const MidiDocument& a, const MidiDocument& b);

// Parses an SMF format-0/1 byte stream. Errors report the byte offset of
// the offending chunk or event.
MidiDocument read_midi(const std::vector<uint8_t>& bytes);

// Serializes to a single-track format-0 SMF, no running status.
std::vector<uint8_t> write_midi(const MidiDocument& doc);

// Multiplies every tick by target/doc.resolution, rounding half away
// from zero, and sets the new resolution.
MidiDocument rescale_resolution(const MidiDocument& doc, int target);

// Piecewise integration of the tempo map; 500000 us/beat when the map is
// empty before the queried tick.
double ticks_to_seconds(int64_t tick, const MidiDocument& doc);

// Rounded v * num / den in exact integer arithmetic, half away from zero.
int64_t mul_div_round(int64_t v, int64_t num, int64_t den);

}  // namespace epr
