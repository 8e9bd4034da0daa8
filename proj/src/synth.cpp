#include "musedit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include "musedit/dsp.hpp"
#include "musedit/rng.hpp"

namespace musedit {

namespace {

std::vector<double> normalized(std::vector<double> a) {
  // unit-power scaling keeps every instrument comparably loud in a mix
  double s = 0.0;
  for (double v : a) s += v * v;
  s = std::sqrt(s) / 0.7;
  for (double& v : a) v /= s;
  return a;
}

}  // namespace

const std::vector<Instrument>& instrument_vocabulary() {
  static const std::vector<Instrument> vocab = [] {
    std::vector<Instrument> v;
    // Harmonic signatures are hand-separated (register + odd/even balance +
    // envelope) so spectral-template tagging has real margins.
    Instrument piano;
    piano.name = "piano";  // dark triad of partials: f0, octave, strong fifth
    piano.partials = normalized({1.0, 0.50, 0.45});
    piano.attack = 0.004;
    piano.decay_tau = 0.35;
    piano.gain = 1.15;
    piano.tag_sensitivity = 1.4;
    piano.release = 0.02;
    piano.role = InstrumentRole::Comp;
    piano.register_lo = 48;
    piano.register_hi = 67;
    v.push_back(piano);

    Instrument guitar;
    guitar.name = "guitar";  // bright pluck with a stiff-string stretched comb
    guitar.partials = normalized({1.0, 0.9, 0.75, 0.6, 0.5, 0.4});
    guitar.partial_mults = {1.0, 2.0, 3.1, 4.18, 5.28, 6.4};
    guitar.attack = 0.003;
    guitar.decay_tau = 0.18;
    guitar.gain = 1.6;  // short pluck duty cycle needs level compensation
    guitar.tag_sensitivity = 0.9;
    guitar.release = 0.015;
    guitar.role = InstrumentRole::Arpeggio;
    guitar.register_lo = 55;
    guitar.register_hi = 76;
    v.push_back(guitar);

    Instrument bass;
    bass.name = "bass";
    bass.partials = normalized({1.0, 0.30, 0.08});
    bass.attack = 0.008;
    bass.decay_tau = 0.45;
    bass.release = 0.03;
    bass.role = InstrumentRole::Bass;
    bass.tag_sensitivity = 0.4;
    bass.register_lo = 36;  // f0 >= 65 Hz keeps clear of the kick band
    bass.register_hi = 47;
    v.push_back(bass);

    Instrument drums;
    drums.name = "drums";
    drums.partials = {};  // noise/thump based, see render_drum_note
    drums.role = InstrumentRole::Drums;
    drums.tag_sensitivity = 4.0;
    drums.register_lo = 35;
    drums.register_hi = 46;
    v.push_back(drums);

    Instrument strings;
    strings.name = "strings";
    strings.partials = normalized({1.0, 0.55, 0.40, 0.30, 0.25, 0.18, 0.12, 0.08});
    strings.attack = 0.07;
    strings.decay_tau = -1.0;  // sustain
    strings.release = 0.06;
    strings.vibrato_hz = 5.5;
    strings.vibrato_depth = 0.0015;
    strings.chorus_detune = {-0.017, 0.0, 0.017};
    strings.role = InstrumentRole::Pad;
    strings.tag_sensitivity = 0.16;
    strings.register_lo = 62;
    strings.register_hi = 84;
    v.push_back(strings);

    Instrument flute;
    flute.name = "flute";  // near-pure tone, high register
    flute.partials = normalized({1.0, 0.08});
    flute.attack = 0.04;
    flute.decay_tau = -1.0;
    flute.release = 0.05;
    flute.vibrato_hz = 4.8;
    flute.vibrato_depth = 0.0012;
    flute.role = InstrumentRole::Melody;
    flute.tag_sensitivity = 0.13;
    flute.register_lo = 79;
    flute.register_hi = 94;
    v.push_back(flute);

    Instrument accordion;
    accordion.name = "accordion";  // flat reed comb (harmonium buzz)
    accordion.partials = normalized({1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
    accordion.attack = 0.02;
    accordion.decay_tau = -1.0;
    accordion.release = 0.03;
    accordion.role = InstrumentRole::Drone;
    accordion.tag_sensitivity = 1.1;
    accordion.register_lo = 50;
    accordion.register_hi = 64;
    v.push_back(accordion);
    return v;
  }();
  return vocab;
}

const Instrument& instrument_by_name(const std::string& name) {
  for (const auto& inst : instrument_vocabulary())
    if (inst.name == name) return inst;
  throw Error("unknown instrument: " + name);
}

bool is_known_instrument(const std::string& name) {
  for (const auto& inst : instrument_vocabulary())
    if (inst.name == name) return true;
  return false;
}

const std::vector<GenrePreset>& genre_presets() {
  static const std::vector<GenrePreset> presets = [] {
    auto prog = [](std::initializer_list<const char*> labels) {
      std::vector<Chord> p;
      for (const char* l : labels) p.push_back(Chord::from_label(l));
      return p;
    };
    std::vector<GenrePreset> v;

    GenrePreset rock;
    rock.name = "rock";
    rock.instrument_pool = {"guitar", "bass", "drums", "piano"};
    rock.rhythm_pattern = {{"guitar", {0, 1, 2, 3, 4, 5, 6, 7}},
                           {"bass", {0, 4}},
                           {"drums", {0, 2, 4, 6}},
                           {"piano", {0, 4}}};
    rock.chord_palette = {prog({"E:min", "C:maj", "G:maj", "D:maj"}),
                          prog({"A:min", "F:maj", "C:maj", "G:maj"}),
                          prog({"E:maj", "A:maj"}),
                          prog({"D:maj", "G:maj", "A:maj", "D:maj"})};
    v.push_back(rock);

    GenrePreset pop;
    pop.name = "pop";
    pop.instrument_pool = {"piano", "guitar", "bass", "drums", "strings"};
    pop.rhythm_pattern = {{"piano", {0, 2, 4, 6}},
                          {"guitar", {0, 1, 2, 3, 4, 5, 6, 7}},
                          {"bass", {0, 4}},
                          {"drums", {0, 2, 4, 6}},
                          {"strings", {0, 4}}};
    pop.chord_palette = {prog({"C:maj", "G:maj", "A:min", "F:maj"}),
                         prog({"F:maj", "C:maj", "D:min", "A#:maj"}),
                         prog({"G:maj", "D:maj", "E:min", "C:maj"}),
                         prog({"A:min", "C:maj"})};
    v.push_back(pop);

    GenrePreset jazz;
    jazz.name = "jazz";
    jazz.instrument_pool = {"piano", "bass", "drums", "flute", "accordion"};
    jazz.rhythm_pattern = {{"piano", {0, 2, 4, 6}},
                           {"bass", {0, 2, 4, 6}},
                           {"drums", {0, 2, 4, 6}},
                           {"flute", {0, 2, 5}},
                           {"accordion", {0, 4}}};
    jazz.chord_palette = {prog({"D:min", "G:maj", "C:maj", "A:min"}),
                          prog({"F:min", "A#:maj", "D#:maj", "C:min"}),
                          prog({"B:min", "E:maj", "A:maj", "F#:min"}),
                          prog({"G:min", "C:maj"})};
    v.push_back(jazz);

    GenrePreset ambient;
    ambient.name = "ambient";
    ambient.instrument_pool = {"strings", "flute", "piano"};
    ambient.rhythm_pattern = {{"strings", {0, 4}},
                              {"flute", {0, 4}},
                              {"piano", {0, 4}}};
    ambient.chord_palette = {prog({"A:min", "E:min"}),
                             prog({"C:maj", "D:maj"}),
                             prog({"F#:min", "E:maj", "A:maj", "B:min"}),
                             prog({"D#:maj", "G#:maj"})};
    v.push_back(ambient);
    return v;
  }();
  return presets;
}

const GenrePreset& preset_by_name(const std::string& name) {
  for (const auto& p : genre_presets())
    if (p.name == name) return p;
  throw Error("unknown genre preset: " + name);
}

bool is_known_genre(const std::string& name) {
  for (const auto& p : genre_presets())
    if (p.name == name) return true;
  return false;
}

// ------------------------------------------------------------------ StemSet

Vec StemSet::mix() const { return mix_subset(stem_names()); }

Vec StemSet::mix_subset(const std::vector<std::string>& names) const {
  Vec out = Vec::Zero(num_samples());
  for (const auto& n : names) {
    auto it = stems.find(n);
    ME_CHECK(it != stems.end(), "mix_subset: no such stem: " + n);
    out += it->second;
  }
  return out * headroom_gain();
}

std::vector<std::string> StemSet::stem_names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : stems) out.push_back(n);
  return out;
}

std::vector<Chord> StemSet::chord_labels() const {
  std::vector<Chord> out;
  for (const auto& s : chords) out.push_back(s.chord);
  return out;
}

// ------------------------------------------------------------------- render

namespace {

void render_drum_note(Vec& x, const NoteEvent& n, int sr) {
  const int start = static_cast<int>(std::lround(n.onset * sr));
  // noise must be reproducible regardless of render order: seed from the note
  uint64_t h = fnv1a64(&n.pitch, sizeof(n.pitch));
  h = fnv1a64(&n.onset, sizeof(n.onset), h);
  Rng rng(h);
  if (n.pitch <= 36) {  // kick: sub-bass swept thump, below the bass register
    const double dur = std::min(0.12, n.duration);
    const int len = static_cast<int>(dur * sr);
    double phase = 0.0;
    for (int i = 0; i < len && start + i < x.size(); ++i) {
      const double t = i / static_cast<double>(sr);
      const double f = 35.0 * std::exp(-t * 25.0) + 27.0;
      phase += 2.0 * M_PI * f / sr;
      const double env = std::exp(-t * 16.0);
      x[start + i] += n.velocity * env * (1.8 * std::sin(phase));
    }
  } else if (n.pitch <= 40) {  // snare: mid/high band noise burst
    const double dur = std::min(0.12, n.duration);
    const int len = static_cast<int>(dur * sr);
    double lp = 0.0, slow = 0.0;
    for (int i = 0; i < len && start + i < x.size(); ++i) {
      const double t = i / static_cast<double>(sr);
      const double w = rng.uniform(-1.0, 1.0);
      lp = 0.45 * lp + 0.55 * w;     // soft lowpass near 3.5 kHz
      slow = 0.88 * slow + 0.12 * w; // slow track for the highpass
      const double env = std::exp(-t * 24.0);
      x[start + i] += n.velocity * env * 1.6 * (lp - slow);
    }
  } else {  // hat: short high-passed noise
    const double dur = std::min(0.06, n.duration);
    const int len = static_cast<int>(dur * sr);
    double prev = 0.0;
    for (int i = 0; i < len && start + i < x.size(); ++i) {
      const double t = i / static_cast<double>(sr);
      const double w = rng.uniform(-1.0, 1.0);
      const double hpf = w - prev;
      prev = w;
      const double env = std::exp(-t * 55.0);
      x[start + i] += n.velocity * env * 0.9 * hpf;
    }
  }
}

}  // namespace

Vec render_stem(const Instrument& instrument, const std::vector<NoteEvent>& notes,
                int sample_rate, double duration) {
  ME_CHECK(sample_rate > 0 && duration > 0, "render_stem: bad rate/duration");
  const int n_samples = static_cast<int>(std::lround(duration * sample_rate));
  Vec x = Vec::Zero(n_samples);
  for (const auto& note : notes) {
    ME_CHECK(note.pitch >= 24 && note.pitch <= 96,
             "render_stem: pitch out of range [24,96]");
    ME_CHECK(note.onset >= 0.0 && note.duration > 0.0 &&
                 note.velocity > 0.0 && note.velocity <= 1.0,
             "render_stem: bad note fields");
    ME_CHECK(note.onset + note.duration <= duration + 1e-9,
             "render_stem: note extends past clip end");
    if (instrument.role == InstrumentRole::Drums) {
      render_drum_note(x, note, sample_rate);
      continue;
    }
    const double f0 = midi_to_hz(note.pitch);
    const int start = static_cast<int>(std::lround(note.onset * sample_rate));
    const double rel = instrument.release;
    const int len = std::min(
        n_samples - start, static_cast<int>((note.duration + rel) * sample_rate));
    const double nyq_guard = 0.45 * sample_rate;
    const std::vector<double> voices =
        instrument.chorus_detune.empty() ? std::vector<double>{0.0}
                                         : instrument.chorus_detune;
    const double voice_scale = 1.0 / std::sqrt(static_cast<double>(voices.size()));
    for (size_t vix = 0; vix < voices.size(); ++vix) {
      for (size_t h = 0; h < instrument.partials.size(); ++h) {
        const double mult = instrument.partial_mults.empty()
                                ? static_cast<double>(h + 1)
                                : instrument.partial_mults[h];
        const double fh = f0 * (1.0 + voices[vix]) * mult;
        if (fh >= nyq_guard) break;
        const double amp = instrument.partials[h] * note.velocity * instrument.gain *
                           voice_scale;
        // golden-angle phase offsets keep the onset crest factor low
        double phase = 2.39996322972865332 * static_cast<double>(h + 7 * vix);
        for (int i = 0; i < len; ++i) {
          const double t = i / static_cast<double>(sample_rate);
          double f = fh;
          if (instrument.vibrato_hz > 0.0)
            f *= 1.0 + instrument.vibrato_depth *
                           std::sin(2.0 * M_PI * instrument.vibrato_hz * t);
          phase += 2.0 * M_PI * f / sample_rate;
          double env;
          if (t < instrument.attack) {
            env = t / instrument.attack;
          } else if (instrument.decay_tau > 0.0) {
            env = std::exp(-(t - instrument.attack) / instrument.decay_tau);
          } else {
            env = 1.0;
          }
          if (t > note.duration)  // release ramp after the nominal note end
            env *= std::max(0.0, 1.0 - (t - note.duration) / std::max(rel, 1e-4));
          x[start + i] += amp * env * std::sin(phase);
        }
      }
    }
  }
  const double peak = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
  if (peak > 0.99) x *= 0.99 / peak;
  return x;
}

// ------------------------------------------------------------- compose_clip

namespace {

int pitch_in_register(int pc, int lo, int hi) {
  // lowest pitch >= lo with the wanted pitch class
  int p = lo + ((pc - lo) % 12 + 12) % 12;
  if (p > hi) p = hi - ((hi - pc) % 12 + 12) % 12;
  return p;
}

}  // namespace

StemSet compose_clip(const GenrePreset& preset, double tempo, double duration,
                     uint64_t seed, int sample_rate) {
  ME_CHECK(!preset.instrument_pool.empty(), "compose_clip: empty instrument pool");
  const double bar = 60.0 * preset.beats_per_bar / tempo;
  const double bars_f = duration / bar;
  const int bars = static_cast<int>(std::lround(bars_f));
  ME_CHECK(std::abs(bars_f - bars) < 1e-9 && bars >= 1,
           "compose_clip: duration is not a whole number of bars at this tempo");

  Rng rng(seed ^ fnv1a64(preset.name));

  // choose stems: 2..6 from the pool, always keeping one chordal instrument
  std::vector<std::string> pool = preset.instrument_pool;
  for (const auto& n : pool) instrument_by_name(n);  // validate
  const int max_n = std::min<int>(6, static_cast<int>(pool.size()));
  const int min_n = std::min<int>(2, max_n);
  const int n_stems = static_cast<int>(rng.uniform_int(min_n, max_n));
  // deterministic shuffle
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
    std::swap(pool[i], pool[rng.uniform_int(0, i)]);
  // every clip carries at least one triad-bearing stem so chord identity is
  // recoverable from any frame (a root-only drone does not qualify)
  auto is_chordal = [](const std::string& n) {
    const auto r = instrument_by_name(n).role;
    return r == InstrumentRole::Comp || r == InstrumentRole::Arpeggio ||
           r == InstrumentRole::Pad;
  };
  std::vector<std::string> chosen(pool.begin(), pool.begin() + n_stems);
  if (std::none_of(chosen.begin(), chosen.end(), is_chordal)) {
    for (size_t i = n_stems; i < pool.size(); ++i) {
      if (is_chordal(pool[i])) {
        chosen.back() = pool[i];
        break;
      }
    }
  }

  // chord spans: half a bar each, cycling a palette entry
  ME_CHECK(!preset.chord_palette.empty(), "compose_clip: empty chord palette");
  const auto& cycle =
      preset.chord_palette[rng.uniform_int(0, static_cast<int>(preset.chord_palette.size()) - 1)];
  StemSet clip;
  clip.tempo = tempo;
  clip.genre = preset.name;
  clip.sample_rate = sample_rate;
  clip.duration = duration;
  clip.beats_per_bar = preset.beats_per_bar;
  clip.seed = seed;
  const int spans = bars * 2;
  for (int s = 0; s < spans; ++s) {
    ChordSpan span;
    span.chord = cycle[s % cycle.size()];
    span.start = s * bar / 2.0;
    span.end = (s + 1) * bar / 2.0;
    if (s == spans - 1) span.end = duration;
    clip.chords.push_back(span);
  }
  auto chord_at = [&](double t) -> const Chord& {
    for (const auto& s : clip.chords)
      if (t >= s.start && t < s.end) return s.chord;
    return clip.chords.back().chord;
  };

  const double slot_dur = bar / 8.0;
  for (const auto& name : chosen) {
    const Instrument& inst = instrument_by_name(name);
    Rng srng = rng.fork(fnv1a64(name));
    std::vector<int> pattern;
    auto pit = preset.rhythm_pattern.find(name);
    if (pit != preset.rhythm_pattern.end()) pattern = pit->second;
    if (pattern.empty()) pattern = {0, 4};
    std::vector<NoteEvent> notes;
    for (int b = 0; b < bars; ++b) {
      const double bar_start = b * bar;
      int arp_step = 0;
      for (int slot : pattern) {
        // light per-seed variation; downbeats always kept
        if (slot != 0 && srng.uniform() < 0.15) continue;
        const double onset = bar_start + slot * slot_dur;
        const Chord& ch = chord_at(onset + 1e-6);
        const auto tones = ch.is_none() ? std::vector<int>{0} : ch.tones();
        const double vel = 0.5 + 0.1 * srng.uniform_int(0, 4);
        auto clip_note = [&](NoteEvent ne) {
          if (ne.onset + ne.duration > duration) ne.duration = duration - ne.onset;
          if (ne.duration > 1e-4) notes.push_back(ne);
        };
        switch (inst.role) {
          case InstrumentRole::Bass: {
            const int pitch = pitch_in_register(tones[0], inst.register_lo, inst.register_hi);
            clip_note({pitch, onset, slot_dur * 3.0, vel});
            break;
          }
          case InstrumentRole::Comp: {
            const int count =
                ch.is_none() ? 1
                             : std::min<int>(srng.uniform() < 0.5 ? 2 : 3,
                                             static_cast<int>(tones.size()));
            for (int v = 0; v < count; ++v) {
              const int pitch = pitch_in_register(tones[v], inst.register_lo,
                                                  inst.register_hi);
              clip_note({pitch, onset, slot_dur * 2.0, vel});
            }
            break;
          }
          case InstrumentRole::Arpeggio: {
            const int pitch = pitch_in_register(tones[arp_step % tones.size()],
                                                inst.register_lo, inst.register_hi);
            ++arp_step;
            clip_note({pitch, onset, slot_dur * 1.5, vel});
            break;
          }
          case InstrumentRole::Pad: {
            // hold only to the end of the current chord span, then re-voice
            const double span_end = bar_start + (slot / 4 + 1) * bar / 2.0;
            for (size_t v = 0; v < std::min<size_t>(2, tones.size()); ++v) {
              const int pitch =
                  pitch_in_register(tones[v], inst.register_lo, inst.register_hi);
              clip_note({pitch, onset, span_end - onset, vel});
            }
            break;
          }
          case InstrumentRole::Drone: {
            const int pitch =
                pitch_in_register(tones[0], inst.register_lo, inst.register_hi);
            clip_note({pitch, onset, slot_dur * 4.0, vel});
            break;
          }
          case InstrumentRole::Melody: {
            int pc;
            if (!ch.is_none() && srng.uniform() < 0.75) {
              pc = tones[srng.uniform_int(0, static_cast<int>(tones.size()) - 1)];
            } else {
              pc = (tones[0] + (srng.uniform() < 0.5 ? 2 : 9)) % 12;  // passing tone
            }
            const int pitch = pitch_in_register(pc, inst.register_lo, inst.register_hi);
            clip_note({pitch, onset, slot_dur * 2.0, vel});
            break;
          }
          case InstrumentRole::Drums: {
            if (slot % 4 == 0) clip_note({36, onset, 0.1, vel});          // kick
            if (slot % 4 == 2) clip_note({38, onset, 0.12, vel});         // snare
            if (srng.uniform() < 0.8) clip_note({42, onset, 0.06, vel * 0.7});  // hat
            break;
          }
        }
      }
    }
    clip.notes[name] = notes;
    clip.stems[name] = render_stem(inst, notes, sample_rate, duration);
  }
  return clip;
}

// -------------------------------------------------------------------- tags

namespace {

constexpr int kTagNfft = 1024;
constexpr int kTagHop = 256;

// power spectra are (near) additive across independent sources
Mat power_frames(const Vec& x, int sr) {
  (void)sr;
  Mat mag = stft_mag(x, kTagNfft, kTagHop);
  return mag.cwiseProduct(mag);
}

// clip-level mean power spectrum; every instrument owns distinct line
// geometry (registers, comb shapes, stretch, chorus splitting)
Vec tag_feature(const Mat& frames) {
  if (frames.cols() == 0) return Vec::Zero(frames.rows());
  return frames.rowwise().mean();
}

}  // namespace

const InstrumentTemplates& InstrumentTemplates::get(int sample_rate) {
  static std::mutex mu;
  static std::map<int, InstrumentTemplates> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(sample_rate);
  if (it != cache.end()) return it->second;

  // Atom dictionary: one unit-norm power-spectrum template per register
  // semitone for tonal instruments, one per drum voice.
  InstrumentTemplates t;
  std::vector<Vec> atoms;
  for (size_t ii = 0; ii < instrument_vocabulary().size(); ++ii) {
    const Instrument& inst = instrument_vocabulary()[ii];
    t.names.push_back(inst.name);
    if (inst.role == InstrumentRole::Drums) {
      // percussive voices sweep/decay fast, so each gets one atom per burst
      // phase: frame-aligned hits averaged over independent noise draws
      const int phases = 4, reps = 16;
      const double hop_s = static_cast<double>(kTagHop) / sample_rate;
      for (int pitch : {36, 38, 42}) {
        std::vector<NoteEvent> notes;
        for (int r = 0; r < reps; ++r)
          notes.push_back({pitch, 4.0 * hop_s * r, 0.12, 0.8});
        Vec ref = render_stem(inst, notes, sample_rate, 4.0 * hop_s * reps + 0.2);
        Mat frames = power_frames(ref, sample_rate);
        for (int ph = 0; ph < phases; ++ph) {
          Vec pw = Vec::Zero(frames.rows());
          for (int r = 0; r < reps; ++r) pw += frames.col(4 * r + ph);
          if (pw.norm() < 1e-9) continue;  // burst shorter than this phase
          atoms.push_back(pw / pw.norm());
          t.atom_owner.push_back(static_cast<int>(ii));
        }
      }
    } else {
      for (int pitch = inst.register_lo; pitch <= inst.register_hi; ++pitch) {
        std::vector<NoteEvent> notes;
        for (int k = 0; k < 4; ++k)
          notes.push_back({pitch, 0.02 + 0.24 * k, 0.2, 0.8});
        Vec ref = render_stem(inst, notes, sample_rate, 1.0);
        Vec prof = tag_feature(power_frames(ref, sample_rate));
        prof /= std::max(prof.norm(), 1e-12);
        atoms.push_back(prof);
        t.atom_owner.push_back(static_cast<int>(ii));
      }
    }
  }
  t.features.resize(atoms[0].size(), static_cast<Eigen::Index>(atoms.size()));
  for (size_t a = 0; a < atoms.size(); ++a)
    t.features.col(static_cast<Eigen::Index>(a)) = atoms[a];
  t.gram = t.features.transpose() * t.features;
  t.gram.diagonal().array() += 1e-9;
  for (size_t ii = 0; ii < t.names.size(); ++ii) {
    std::vector<int> keep;
    for (size_t k = 0; k < t.atom_owner.size(); ++k)
      if (t.atom_owner[k] != static_cast<int>(ii)) keep.push_back(static_cast<int>(k));
    Mat fm(t.features.rows(), static_cast<Eigen::Index>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) fm.col(static_cast<Eigen::Index>(k)) = t.features.col(keep[k]);
    Mat g = fm.transpose() * fm;
    g.diagonal().array() += 1e-9;
    t.loo_features.push_back(std::move(fm));
    t.loo_gram.push_back(std::move(g));
  }
  return cache.emplace(sample_rate, std::move(t)).first->second;
}

namespace {

Vec nnls_cd(const Mat& gram, const Vec& rhs) {
  const int n = static_cast<int>(rhs.size());
  // visit atoms by decreasing correlation so exact matches claim their
  // energy before near-collinear impostors
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return rhs[i] > rhs[j]; });
  Vec a = Vec::Zero(n);
  for (int iter = 0; iter < 300; ++iter) {
    double delta = 0.0;
    for (int i : order) {
      double v = a[i] + (rhs[i] - gram.row(i).dot(a)) / gram(i, i);
      v = std::max(0.0, v);
      delta = std::max(delta, std::abs(v - a[i]));
      a[i] = v;
    }
    if (delta < 1e-13) break;
  }
  return a;
}

}  // namespace

Vec template_energies(const Vec& wave, int sample_rate) {
  const auto& tpl = InstrumentTemplates::get(sample_rate);
  Mat frames = power_frames(wave, sample_rate);
  const int n_inst = static_cast<int>(tpl.names.size());
  Vec out = Vec::Zero(n_inst);
  if (frames.cols() == 0) return out;
  // Decompose the clip-level feature: beats between near-coincident
  // partials of different notes cancel out over time, so power additivity
  // holds much better than in single frames.
  Vec feat = tag_feature(frames);
  Vec a = nnls_cd(tpl.gram, tpl.features.transpose() * feat);
  for (int k = 0; k < a.size(); ++k) out[tpl.atom_owner[k]] += a[k];
  return out;
}

double template_energy(const Vec& wave, int sample_rate, const std::string& instrument) {
  const auto& tpl = InstrumentTemplates::get(sample_rate);
  Vec a = template_energies(wave, sample_rate);
  for (size_t i = 0; i < tpl.names.size(); ++i)
    if (tpl.names[i] == instrument) return a[static_cast<Eigen::Index>(i)];
  throw Error("unknown instrument: " + instrument);
}

std::set<std::string> oracle_tags(const StemSet& clip) {
  std::set<std::string> tags;
  for (const auto& [name, wave] : clip.stems)
    if (wave.squaredNorm() > 0.0) tags.insert(name);
  return tags;
}

std::set<std::string> oracle_tags(const Vec& wave, int sample_rate) {
  std::set<std::string> tags;
  if (wave.size() == 0) return tags;
  const auto& tpl = InstrumentTemplates::get(sample_rate);
  Mat frames = power_frames(wave, sample_rate);
  if (frames.cols() == 0) return tags;
  const Vec feat = tag_feature(frames);
  const double feat_energy = feat.squaredNorm();
  if (feat_energy < 1e-16) return tags;

  // Necessity test: an instrument is present when removing its atoms from
  // the dictionary measurably worsens the fit of the clip spectrum, i.e.
  // part of the spectrum is explainable only by that instrument. This stays
  // robust on codec outputs because broadband reconstruction noise inflates
  // both residuals equally.
  auto residual = [&](const Mat& fm, const Mat& gram) {
    Vec a = nnls_cd(gram, fm.transpose() * feat);
    return (feat - fm * a).squaredNorm();
  };
  const double r_full = residual(tpl.features, tpl.gram);
  constexpr double kNecessityThreshold = 1e-3;
  for (size_t i = 0; i < tpl.names.size(); ++i) {
    const double r_wo = residual(tpl.loo_features[i], tpl.loo_gram[i]);
    const double score = (r_wo - r_full) / feat_energy *
                         instrument_vocabulary()[i].tag_sensitivity;
    if (score > kNecessityThreshold) tags.insert(tpl.names[i]);
  }
  return tags;
}

}  // namespace musedit
