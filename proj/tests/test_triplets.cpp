#include <doctest.h>

#include "musedit/corpus_io.hpp"
#include "musedit/triplets.hpp"
#include "test_helpers.hpp"

using namespace musedit;

TEST_SUITE_BEGIN("triplets");

namespace {

StemSet fixture_clip(uint64_t seed = 3, const char* preset = "pop") {
  return compose_clip(preset_by_name(preset), 120.0, 1.0, seed);
}

}  // namespace

TEST_CASE("add/remove pair construction and linearity") {
  StemSet clip = fixture_clip();
  ClipRef ref{"c0", &clip};
  auto [add, rem] = make_add_remove(ref, 5);

  CHECK(add.task.kind == EditKind::Add);
  CHECK(rem.task.kind == EditKind::Remove);
  CHECK(add.instruction == "Add " + add.task.instruments[0]);
  CHECK(add.source_stems.size() >= 1);
  CHECK(add.source_stems.size() <= 4);
  CHECK(add.target_stems.size() == add.source_stems.size() + 1);

  // remove is the exact reversal
  CHECK((rem.source - add.target).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rem.target - add.source).cwiseAbs().maxCoeff() == 0.0);

  // target - source equals the added stem up to the fixed headroom gain
  const std::string& added = add.task.instruments[0];
  Vec expect = clip.stems.at(added) * clip.headroom_gain();
  CHECK((add.target - add.source - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("remove inversion applied twice is the identity") {
  StemSet clip = fixture_clip(11);
  ClipRef ref{"c0", &clip};
  auto [add, rem] = make_add_remove(ref, 1);
  EditTriplet back = invert_add_remove(rem);
  CHECK(back.instruction == add.instruction);
  CHECK((back.source - add.source).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.target - add.target).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-stem clip is rejected") {
  StemSet clip = fixture_clip(7);
  // shrink to one stem
  StemSet one = clip;
  auto names = one.stem_names();
  for (size_t i = 1; i < names.size(); ++i) {
    one.stems.erase(names[i]);
    one.notes.erase(names[i]);
  }
  ClipRef ref{"c1", &one};
  CHECK_THROWS_AS(make_add_remove(ref, 0), Error);
  CHECK_THROWS_AS(make_extract(ref, 0), Error);
  CHECK_THROWS_AS(make_replace(ref, 0), Error);
}

TEST_CASE("extract produces a single-stem target") {
  StemSet clip = fixture_clip(23, "jazz");
  ClipRef ref{"c0", &clip};
  EditTriplet t = make_extract(ref, 9);
  CHECK(t.task.kind == EditKind::Extract);
  CHECK(t.target_stems.size() == 1);
  CHECK(t.source_stems.size() >= 2);
  const std::string& target = t.task.instruments[0];
  CHECK(t.target_stems[0] == target);
  // target waveform is the stem scaled by the clip headroom gain
  CHECK((t.target - clip.stems.at(target) * clip.headroom_gain()).cwiseAbs().maxCoeff() ==
        0.0);
  // tag oracle on the target sees exactly one instrument
  CHECK(oracle_tags(t.target, clip.sample_rate) == std::set<std::string>{target});
  // metadata passthrough: the target stem's notes are the clip's notes
  CHECK(clip.notes.at(target).size() > 0);
}

TEST_CASE("replace keeps the context fixed and swaps one instrument") {
  StemSet clip = fixture_clip(31);
  REQUIRE(clip.stems.size() >= 3);
  ClipRef ref{"c0", &clip};
  EditTriplet t = make_replace(ref, 13);
  const std::string a = t.task.instruments[0], b = t.task.instruments[1];
  CHECK(a != b);
  // source - target = (A - B) * gain
  Vec expect = (clip.stems.at(a) - clip.stems.at(b)) * clip.headroom_gain();
  CHECK((t.source - t.target - expect).cwiseAbs().maxCoeff() < 1e-12);
  // tag difference
  auto st = std::set<std::string>(t.source_stems.begin(), t.source_stems.end());
  auto tt = std::set<std::string>(t.target_stems.begin(), t.target_stems.end());
  CHECK(st.count(a) == 1);
  CHECK(tt.count(a) == 0);
  CHECK(tt.count(b) == 1);
}

TEST_CASE("remix retrieval matches tempo and progression, differs in stems") {
  const std::string dir = testutil::temp_dir("remix");
  SynthConfig cfg;
  cfg.count = 8;
  cfg.seed = 77;
  auto ids = synth_corpus(dir, cfg);
  std::vector<StemSet> clips;
  std::vector<ClipRef> refs;
  for (const auto& id : ids) clips.push_back(load_clip(dir, id));
  for (size_t i = 0; i < ids.size(); ++i) refs.push_back({ids[i], &clips[i]});

  EditTriplet t = make_remix(refs[0], refs, 5);
  CHECK(t.task.kind == EditKind::Remix);
  CHECK(t.source_clip_id != t.target_clip_id);
  const StemSet* partner = nullptr;
  for (size_t i = 0; i < refs.size(); ++i)
    if (refs[i].id == t.target_clip_id) partner = refs[i].clip;
  REQUIRE(partner != nullptr);
  CHECK(partner->tempo == clips[0].tempo);
  CHECK(partner->chord_labels() == clips[0].chord_labels());
  CHECK(partner->stem_names() != clips[0].stem_names());
  CHECK(t.source.size() == t.target.size());

  // no partner -> retrieval error
  std::vector<ClipRef> lonely{refs[0]};
  CHECK_THROWS_AS(make_remix(refs[0], lonely, 1), Error);
}

TEST_CASE("task count allocation stays within 1 of the exact ratio") {
  TaskMix mix;  // defaults 5 : 1.5 : 1.5 : 1 : 1
  for (int count : {10, 100, 999, 1000}) {
    auto alloc = allocate_task_counts(count, mix);
    int total = 0;
    const double wsum = 10.0;
    for (auto [kind, n] : alloc) {
      total += n;
      double exact = 0.0;
      switch (kind) {
        case EditKind::Remix: exact = 5.0; break;
        case EditKind::Add: exact = 1.5; break;
        case EditKind::Replace: exact = 1.5; break;
        case EditKind::Extract: exact = 1.0; break;
        case EditKind::Remove: exact = 1.0; break;
      }
      CHECK(std::abs(n - count * exact / wsum) <= 1.0);
    }
    CHECK(total == count);
  }
}

TEST_SUITE_END();
