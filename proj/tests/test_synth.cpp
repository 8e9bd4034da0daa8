#include <doctest.h>

#include <set>

#include "musedit/dsp.hpp"
#include "musedit/synth.hpp"
#include "test_helpers.hpp"

using namespace musedit;

TEST_SUITE_BEGIN("synth");

TEST_CASE("empty score renders silence") {
  Vec x = render_stem(instrument_by_name("piano"), {}, 8000, 1.0);
  CHECK(x.size() == 8000);
  CHECK(x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single A4 note has its spectral peak at 440 Hz") {
  std::vector<NoteEvent> notes{{69, 0.05, 0.8, 0.8}};
  Vec x = render_stem(instrument_by_name("flute"), notes, 8000, 1.0);
  CHECK(x.cwiseAbs().maxCoeff() > 0.0);
  const int nfft = 4096;
  Vec mag = mean_spectrum(x, nfft);
  Eigen::Index peak;
  mag.maxCoeff(&peak);
  const double hz = static_cast<double>(peak) * 8000 / nfft;
  CHECK(hz == doctest::Approx(440.0).epsilon(0.01));
}

TEST_CASE("notes outside the clip or pitch range are rejected") {
  const Instrument& piano = instrument_by_name("piano");
  CHECK_THROWS_AS(render_stem(piano, {{60, 0.8, 0.5, 0.8}}, 8000, 1.0), Error);
  CHECK_THROWS_AS(render_stem(piano, {{12, 0.0, 0.5, 0.8}}, 8000, 1.0), Error);
  CHECK_THROWS_AS(render_stem(piano, {{60, -0.1, 0.5, 0.8}}, 8000, 1.0), Error);
  CHECK_THROWS_AS(render_stem(piano, {{60, 0.1, 0.5, 1.5}}, 8000, 1.0), Error);
}

TEST_CASE("guitar and piano render the same notes with distinct spectra") {
  std::vector<NoteEvent> notes{{60, 0.0, 0.45, 0.8}, {64, 0.5, 0.45, 0.8}};
  Vec a = render_stem(instrument_by_name("guitar"), notes, 8000, 1.0);
  Vec b = render_stem(instrument_by_name("piano"), notes, 8000, 1.0);
  Vec sa = mean_spectrum(a, 1024), sb = mean_spectrum(b, 1024);
  auto center = [](Vec v) { return Vec(v.array() - v.mean()); };
  Vec ca = center(sa), cb = center(sb);
  const double corr = ca.dot(cb) / (ca.norm() * cb.norm());
  CHECK(corr < 0.8);
}

TEST_CASE("pairwise instrument template correlation stays below 0.8") {
  const auto& tpl = InstrumentTemplates::get(8000);
  const int n_inst = static_cast<int>(tpl.names.size());
  // per-instrument profile: mean of its atoms
  std::vector<Vec> profile(n_inst, Vec::Zero(tpl.features.rows()));
  std::vector<int> counts(n_inst, 0);
  for (Eigen::Index a = 0; a < tpl.features.cols(); ++a) {
    profile[tpl.atom_owner[a]] += tpl.features.col(a);
    counts[tpl.atom_owner[a]]++;
  }
  for (int i = 0; i < n_inst; ++i) profile[i] /= counts[i];
  for (int i = 0; i < n_inst; ++i)
    for (int j = i + 1; j < n_inst; ++j) {
      Vec a = profile[i], b = profile[j];
      a.array() -= a.mean();
      b.array() -= b.mean();
      const double corr = a.dot(b) / (a.norm() * b.norm());
      INFO(tpl.names[i], " vs ", tpl.names[j], " corr=", corr);
      CHECK(corr < 0.8);
    }
}

TEST_CASE("compose_clip is deterministic and seed-sensitive") {
  const GenrePreset& pop = preset_by_name("pop");
  StemSet a = compose_clip(pop, 120.0, 1.0, 42);
  StemSet b = compose_clip(pop, 120.0, 1.0, 42);
  REQUIRE(a.stem_names() == b.stem_names());
  for (const auto& name : a.stem_names()) {
    CHECK(a.stems.at(name).size() == b.stems.at(name).size());
    CHECK((a.stems.at(name) - b.stems.at(name)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.notes.at(name).size() == b.notes.at(name).size());
  }
  CHECK(a.chord_labels().size() == 2);

  StemSet c = compose_clip(pop, 120.0, 1.0, 43);
  bool differs = c.stem_names() != a.stem_names();
  if (!differs) {
    for (const auto& name : a.stem_names()) {
      if (a.notes.at(name).size() != c.notes.at(name).size()) {
        differs = true;
        break;
      }
      for (size_t i = 0; i < a.notes.at(name).size(); ++i)
        if (a.notes.at(name)[i].pitch != c.notes.at(name)[i].pitch ||
            a.notes.at(name)[i].onset != c.notes.at(name)[i].onset) {
          differs = true;
          break;
        }
    }
  }
  CHECK(differs);
}

TEST_CASE("stems stay inside the preset pool and count range") {
  for (uint64_t seed = 0; seed < 12; ++seed) {
    const GenrePreset& rock = preset_by_name("rock");
    StemSet clip = compose_clip(rock, 120.0, 2.0, seed);
    const auto names = clip.stem_names();
    CHECK(names.size() >= 2);
    CHECK(names.size() <= 6);
    for (const auto& n : names)
      CHECK(std::find(rock.instrument_pool.begin(), rock.instrument_pool.end(), n) !=
            rock.instrument_pool.end());
  }
}

TEST_CASE("non-bar-aligned duration is rejected") {
  CHECK_THROWS_AS(compose_clip(preset_by_name("pop"), 120.0, 1.3, 1), Error);
  CHECK_NOTHROW(compose_clip(preset_by_name("pop"), 120.0, 3.0, 1));
}

TEST_CASE("mixing never clips and is exactly linear in the stems") {
  for (uint64_t seed = 100; seed < 110; ++seed) {
    StemSet clip = compose_clip(preset_by_name("jazz"), 120.0, 1.0, seed);
    Vec mix = clip.mix();
    CHECK(mix.cwiseAbs().maxCoeff() <= 1.0);
    Vec manual = Vec::Zero(clip.num_samples());
    for (const auto& [_, wave] : clip.stems) manual += wave;
    manual *= clip.headroom_gain();
    CHECK((mix - manual).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("chord spans tile the clip without overlap") {
  StemSet clip = compose_clip(preset_by_name("ambient"), 120.0, 2.0, 5);
  double cursor = 0.0;
  for (const auto& s : clip.chords) {
    CHECK(s.start == doctest::Approx(cursor));
    CHECK(s.end > s.start);
    cursor = s.end;
  }
  CHECK(cursor == doctest::Approx(clip.duration));
}

TEST_CASE("tag oracle on stem sets reads metadata exactly") {
  StemSet clip = compose_clip(preset_by_name("pop"), 120.0, 1.0, 7);
  auto tags = oracle_tags(clip);
  auto names = clip.stem_names();
  CHECK(tags == std::set<std::string>(names.begin(), names.end()));
  clip.stems["flute"] = Vec::Zero(clip.num_samples());  // silent stem
  CHECK(oracle_tags(clip).count("flute") == 0);
}

TEST_CASE("tag oracle on waveforms: silence and simple mixes") {
  CHECK(oracle_tags(Vec::Zero(8000), 8000).empty());
  std::vector<NoteEvent> pn{{60, 0.0, 0.45, 0.8}, {64, 0.5, 0.45, 0.8}};
  std::vector<NoteEvent> bn{{36, 0.0, 0.9, 0.8}};
  Vec piano = render_stem(instrument_by_name("piano"), pn, 8000, 1.0);
  Vec bass = render_stem(instrument_by_name("bass"), bn, 8000, 1.0);
  Vec mix = 0.5 * (piano + bass);
  auto tags = oracle_tags(mix, 8000);
  CHECK(tags == std::set<std::string>{"piano", "bass"});
}

TEST_CASE("tag oracle recovers the exact stem set on 100 random mixes") {
  int exact = 0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    const auto& presets = genre_presets();
    const GenrePreset& p = presets[i % presets.size()];
    StemSet clip = compose_clip(p, 120.0, 1.0, 9000 + i);
    auto truth = oracle_tags(clip);
    auto detected = oracle_tags(clip.mix(), clip.sample_rate);
    if (truth == detected) ++exact;
  }
  INFO("exact-set recovery: ", exact, "/", trials);
  CHECK(exact >= 95);
}

TEST_CASE("template energy responds to stem removal") {
  StemSet clip = compose_clip(preset_by_name("rock"), 120.0, 1.0, 31);
  auto names = clip.stem_names();
  REQUIRE(names.size() >= 2);
  const std::string victim = names[0];
  std::vector<std::string> rest;
  for (const auto& n : names)
    if (n != victim) rest.push_back(n);
  const double with = template_energy(clip.mix(), clip.sample_rate, victim);
  const double without = template_energy(clip.mix_subset(rest), clip.sample_rate, victim);
  CHECK(with > 8.0 * (without + 1e-12));
}

TEST_SUITE_END();
