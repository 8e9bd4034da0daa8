#include <doctest.h>

#include <cmath>

#include "musedit/conditioners.hpp"
#include "musedit/synth.hpp"

using namespace musedit;

TEST_SUITE_BEGIN("conditioners");

TEST_CASE("instruction embeddings are deterministic lookups with grammar lengths") {
  TextEncoder enc(64, 1234);
  TextEmb a = enc.encode("Add piano");
  CHECK(a.length() == 2);
  CHECK(a.embeddings.rows() == 64);
  TextEmb b = enc.encode("Add piano");
  CHECK((a.embeddings - b.embeddings).cwiseAbs().maxCoeff() == 0.0);
  CHECK(enc.encode("Replace flute with accordion").length() == 3);
  CHECK_THROWS_AS(enc.encode("Add vuvuzela"), Error);
}

namespace {

Vec sine_mix(const std::vector<double>& freqs, int sr, double dur) {
  const int n = static_cast<int>(sr * dur);
  Vec x = Vec::Zero(n);
  for (double f : freqs)
    for (int i = 0; i < n; ++i)
      x[i] += 0.2 * std::sin(2.0 * M_PI * f * i / sr);
  return x;
}

}  // namespace

TEST_CASE("a rendered C major triad reads C:maj in every frame") {
  // C4, E4, G4 as pure tones
  Vec x = sine_mix({261.63, 329.63, 392.0}, 8000, 1.0);
  ChordMatrix cm = extract_chords(x, 8000);
  REQUIRE(cm.frames() == 4);
  for (const Chord& c : cm.argmax_labels()) CHECK(c.label() == "C:maj");
}

TEST_CASE("silence maps to N") {
  ChordMatrix cm = extract_chords(Vec::Zero(8000), 8000);
  for (const Chord& c : cm.argmax_labels()) CHECK(c.label() == "N");
}

TEST_CASE("columns are stochastic within 1e-6") {
  StemSet clip = compose_clip(preset_by_name("pop"), 120.0, 1.0, 4);
  ChordMatrix cm = extract_chords(clip.mix(), clip.sample_rate);
  for (int f = 0; f < cm.frames(); ++f)
    CHECK(std::abs(cm.probs.col(f).sum() - 1.0) < 1e-6);
}

TEST_CASE("transposition by an octave keeps the labels") {
  Vec lo = sine_mix({220.0, 261.63, 329.63}, 8000, 1.0);   // A minor at A3
  Vec hi = sine_mix({440.0, 523.25, 659.26}, 8000, 1.0);   // +12 semitones
  auto la = extract_chords(lo, 8000).argmax_labels();
  auto lb = extract_chords(hi, 8000).argmax_labels();
  REQUIRE(la.size() == lb.size());
  for (size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("too-short input is rejected") {
  CHECK_THROWS_AS(extract_chords(Vec::Zero(100), 8000), Error);
}

TEST_CASE("ground-truth chords resampled at the extractor hop") {
  StemSet clip = compose_clip(preset_by_name("rock"), 120.0, 2.0, 15);
  auto labels = chords_at_hop(clip.chords, clip.duration, 0.25);
  CHECK(labels.size() == 8);
  // spans are half a bar (0.5 s at 120 BPM 2/4), so labels pair up
  for (size_t i = 0; i + 1 < labels.size(); i += 2) CHECK(labels[i] == labels[i + 1]);
}

TEST_CASE("extractor agrees with ground truth on at least 90% of corpus frames") {
  int agree = 0, total = 0;
  for (int i = 0; i < 40; ++i) {
    StemSet clip = compose_clip(genre_presets()[i % 4], 120.0, 1.0, 5000 + i);
    auto truth = chords_at_hop(clip.chords, clip.duration, 0.25);
    auto got = extract_chords(clip.mix(), clip.sample_rate).argmax_labels();
    REQUIRE(truth.size() == got.size());
    for (size_t f = 0; f < truth.size(); ++f) {
      ++total;
      if (truth[f] == got[f]) ++agree;
    }
  }
  INFO("chord agreement ", agree, "/", total);
  CHECK(static_cast<double>(agree) / total >= 0.90);
}

TEST_CASE("chord matrix JSON export carries labels and columns") {
  StemSet clip = compose_clip(preset_by_name("jazz"), 120.0, 1.0, 77);
  ChordMatrix cm = extract_chords(clip.mix(), clip.sample_rate);
  auto j = cm.to_json();
  CHECK(j["labels"].size() == 25);
  CHECK(j["probs"].size() == static_cast<size_t>(cm.frames()));
  CHECK(j["frame_hop"].get<double>() == 0.25);
}

TEST_SUITE_END();
