#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "musedit/common.hpp"
#include "musedit/music.hpp"

namespace musedit {

struct NoteEvent {
  int pitch = 60;          // MIDI, valid range [24, 96]
  double onset = 0.0;      // seconds, >= 0
  double duration = 0.0;   // seconds, > 0
  double velocity = 0.8;   // (0, 1]
};

enum class InstrumentRole { Bass, Comp, Arpeggio, Pad, Melody, Drone, Drums };

struct Instrument {
  std::string name;
  std::vector<double> partials;  // relative partial amplitudes, normalized
  // frequency multipliers per partial; empty means harmonic 1..n (a stretched
  // comb models string stiffness and is what keeps guitar unmistakable)
  std::vector<double> partial_mults;
  double attack = 0.005;         // seconds
  double decay_tau = 0.3;        // exponential decay; <= 0 means sustain
  double release = 0.02;         // seconds after note end
  double vibrato_hz = 0.0;
  double vibrato_depth = 0.0;    // relative frequency deviation
  double gain = 1.0;             // loudness balance across roles
  // detuned unison voices (string-section chorus); empty means one voice
  std::vector<double> chorus_detune;
  double tag_sensitivity = 1.0;  // necessity-score scale per instrument
  InstrumentRole role = InstrumentRole::Comp;
  int register_lo = 48, register_hi = 72;  // MIDI range the presets write in
};

// Closed vocabulary, fixed order: piano, guitar, bass, drums, strings,
// flute, accordion.
const std::vector<Instrument>& instrument_vocabulary();
const Instrument& instrument_by_name(const std::string& name);
bool is_known_instrument(const std::string& name);

struct GenrePreset {
  std::string name;
  std::vector<std::string> instrument_pool;
  // rhythm grid: 8 slots per bar; onsets per role
  std::map<std::string, std::vector<int>> rhythm_pattern;
  // each palette entry is a chord cycle; spans are half a bar each
  std::vector<std::vector<Chord>> chord_palette;
  int beats_per_bar = 2;
};

const std::vector<GenrePreset>& genre_presets();
const GenrePreset& preset_by_name(const std::string& name);
bool is_known_genre(const std::string& name);

struct StemSet {
  std::map<std::string, Vec> stems;  // instrument name -> mono waveform
  std::map<std::string, std::vector<NoteEvent>> notes;
  std::vector<ChordSpan> chords;  // tile [0, duration] without overlap
  double tempo = 120.0;           // BPM
  std::string genre;
  int sample_rate = 8000;
  double duration = 1.0;  // seconds
  int beats_per_bar = 2;
  uint64_t seed = 0;

  // fixed per-clip headroom gain: 1/N for N stems; every sub-mix of the clip
  // uses this same gain so mixture differences stay linear in the stems
  double headroom_gain() const { return stems.empty() ? 1.0 : 1.0 / static_cast<double>(stems.size()); }
  double bar_duration() const { return 60.0 * beats_per_bar / tempo; }
  int num_samples() const { return static_cast<int>(std::lround(duration * sample_rate)); }

  Vec mix() const;
  Vec mix_subset(const std::vector<std::string>& names) const;
  std::vector<std::string> stem_names() const;
  std::vector<Chord> chord_labels() const;  // one label per half-bar span
};

// Additive synthesis of one stem. Deterministic in all inputs; throws if a
// note falls outside [0, duration] or outside the valid pitch range.
Vec render_stem(const Instrument& instrument, const std::vector<NoteEvent>& notes,
                int sample_rate, double duration);

// Seedable clip generator. `duration` must be a whole number of bars at
// `tempo` (with the preset's beats_per_bar).
StemSet compose_clip(const GenrePreset& preset, double tempo, double duration,
                     uint64_t seed, int sample_rate = 8000);

// Tagging oracle. On a StemSet the answer is exact (stems with nonzero
// energy); on a bare waveform instruments are detected against the fixed
// spectral templates.
std::set<std::string> oracle_tags(const StemSet& clip);
std::set<std::string> oracle_tags(const Vec& wave, int sample_rate);

// Mel-power template atoms used by the waveform tagger and the
// instrument-energy oracle: several register pitches per tonal instrument,
// one atom per drum voice.
struct InstrumentTemplates {
  std::vector<std::string> names;  // instrument order (vocabulary order)
  Mat features;                    // spectrum bins x atoms, unit L2 norm columns
  Mat gram;                        // features^T features (cached)
  std::vector<int> atom_owner;     // atom -> instrument index
  // leave-one-instrument-out dictionaries for the necessity test
  std::vector<Mat> loo_features;
  std::vector<Mat> loo_gram;
  static const InstrumentTemplates& get(int sample_rate);
};

// Nonnegative decomposition of the mix's mel power onto the instrument
// templates; returns per-instrument explained energy (same order as the
// template names).
Vec template_energies(const Vec& wave, int sample_rate);
double template_energy(const Vec& wave, int sample_rate, const std::string& instrument);

}  // namespace musedit
