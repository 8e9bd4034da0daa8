#include "musedit/triplets.hpp"

#include <algorithm>

#include "musedit/rng.hpp"

namespace musedit {

namespace {

std::vector<std::string> pick_subset(const std::vector<std::string>& names, int n,
                                     Rng& rng) {
  std::vector<std::string> pool = names;
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
    std::swap(pool[i], pool[rng.uniform_int(0, i)]);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::pair<EditTriplet, EditTriplet> make_add_remove(const ClipRef& ref, uint64_t seed) {
  const StemSet& clip = *ref.clip;
  const auto names = clip.stem_names();
  ME_CHECK(names.size() >= 2, "make_add_remove: clip needs at least two stems");
  Rng rng(seed ^ 0xadd0u);
  const int max_ctx = std::min<int>(4, static_cast<int>(names.size()) - 1);
  const int i = static_cast<int>(rng.uniform_int(1, max_ctx));
  std::vector<std::string> chosen = pick_subset(names, i + 1, rng);
  const std::string added = chosen[rng.uniform_int(0, static_cast<int>(chosen.size()) - 1)];
  std::vector<std::string> context;
  for (const auto& n : chosen)
    if (n != added) context.push_back(n);

  EditTriplet add;
  add.task = {EditKind::Add, {added}, ""};
  add.instruction = format_instruction(add.task);
  add.source = clip.mix_subset(context);
  std::vector<std::string> with = context;
  with.push_back(added);
  std::sort(with.begin(), with.end());
  add.target = clip.mix_subset(with);
  add.sample_rate = clip.sample_rate;
  add.source_clip_id = add.target_clip_id = ref.id;
  add.source_stems = context;
  add.target_stems = with;
  return {add, invert_add_remove(add)};
}

EditTriplet invert_add_remove(const EditTriplet& t) {
  ME_CHECK(t.task.kind == EditKind::Add || t.task.kind == EditKind::Remove,
           "invert_add_remove: not an add/remove triplet");
  EditTriplet out = t;
  out.task.kind = t.task.kind == EditKind::Add ? EditKind::Remove : EditKind::Add;
  out.instruction = format_instruction(out.task);
  out.source = t.target;
  out.target = t.source;
  out.source_stems = t.target_stems;
  out.target_stems = t.source_stems;
  return out;
}

EditTriplet make_extract(const ClipRef& ref, uint64_t seed) {
  const StemSet& clip = *ref.clip;
  const auto names = clip.stem_names();
  ME_CHECK(names.size() >= 2, "make_extract: clip needs at least two stems");
  Rng rng(seed ^ 0xe87ac7u);
  const std::string target = names[rng.uniform_int(0, static_cast<int>(names.size()) - 1)];
  std::vector<std::string> others;
  for (const auto& n : names)
    if (n != target) others.push_back(n);
  const int extra = static_cast<int>(rng.uniform_int(1, static_cast<int>(others.size())));
  std::vector<std::string> ctx = pick_subset(others, extra, rng);

  EditTriplet t;
  t.task = {EditKind::Extract, {target}, ""};
  t.instruction = format_instruction(t.task);
  std::vector<std::string> src = ctx;
  src.push_back(target);
  std::sort(src.begin(), src.end());
  t.source = clip.mix_subset(src);
  t.target = clip.mix_subset({target});
  t.sample_rate = clip.sample_rate;
  t.source_clip_id = t.target_clip_id = ref.id;
  t.source_stems = src;
  t.target_stems = {target};
  return t;
}

EditTriplet make_replace(const ClipRef& ref, uint64_t seed) {
  const StemSet& clip = *ref.clip;
  const auto names = clip.stem_names();
  ME_CHECK(names.size() >= 2, "make_replace: clip needs at least two stems");
  Rng rng(seed ^ 0x3e91acedu);
  const int ia = static_cast<int>(rng.uniform_int(0, static_cast<int>(names.size()) - 1));
  int ib = static_cast<int>(rng.uniform_int(0, static_cast<int>(names.size()) - 2));
  if (ib >= ia) ++ib;
  const std::string a = names[ia], b = names[ib];
  ME_CHECK(a != b, "make_replace: degenerate instrument pair");
  std::vector<std::string> others;
  for (const auto& n : names)
    if (n != a && n != b) others.push_back(n);
  std::vector<std::string> ctx;
  if (!others.empty()) {
    const int extra = static_cast<int>(rng.uniform_int(0, static_cast<int>(others.size())));
    if (extra > 0) ctx = pick_subset(others, extra, rng);
  }

  EditTriplet t;
  t.task = {EditKind::Replace, {a, b}, ""};
  t.instruction = format_instruction(t.task);
  std::vector<std::string> src = ctx, tgt = ctx;
  src.push_back(a);
  tgt.push_back(b);
  std::sort(src.begin(), src.end());
  std::sort(tgt.begin(), tgt.end());
  t.source = clip.mix_subset(src);
  t.target = clip.mix_subset(tgt);
  t.sample_rate = clip.sample_rate;
  t.source_clip_id = t.target_clip_id = ref.id;
  t.source_stems = src;
  t.target_stems = tgt;
  return t;
}

EditTriplet make_remix(const ClipRef& ref, const std::vector<ClipRef>& corpus,
                       uint64_t seed) {
  const StemSet& clip = *ref.clip;
  const auto labels = clip.chord_labels();
  std::vector<const ClipRef*> candidates;
  for (const auto& other : corpus) {
    if (other.id == ref.id) continue;
    const StemSet& oc = *other.clip;
    if (oc.tempo != clip.tempo || oc.duration != clip.duration) continue;
    if (!(oc.chord_labels() == labels)) continue;
    const bool same_preset = oc.genre == clip.genre;
    const bool same_stems = oc.stem_names() == clip.stem_names();
    if (same_preset && same_stems) continue;
    candidates.push_back(&other);
  }
  ME_CHECK(!candidates.empty(),
           "make_remix: no rhythm-compatible partner in corpus for " + ref.id);
  Rng rng(seed ^ 0x4e714f8u);
  const ClipRef& partner =
      *candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)];

  EditTriplet t;
  if (partner.clip->genre != clip.genre) {
    t.task = {EditKind::Remix, {}, partner.clip->genre};
  } else {
    t.task = {EditKind::Remix, partner.clip->stem_names(), ""};
  }
  t.instruction = format_instruction(t.task);
  t.source = clip.mix();
  t.target = partner.clip->mix();
  t.sample_rate = clip.sample_rate;
  t.source_clip_id = ref.id;
  t.target_clip_id = partner.id;
  t.source_stems = clip.stem_names();
  t.target_stems = partner.clip->stem_names();
  return t;
}

std::vector<std::pair<EditKind, int>> allocate_task_counts(int count, const TaskMix& mix) {
  ME_CHECK(count >= 0, "allocate_task_counts: negative count");
  const std::vector<std::pair<EditKind, double>> weights = {
      {EditKind::Remix, mix.remix},
      {EditKind::Add, mix.add},
      {EditKind::Replace, mix.replace},
      {EditKind::Extract, mix.extract},
      {EditKind::Remove, mix.remove}};
  double total = 0.0;
  for (const auto& [_, w] : weights) total += w;
  ME_CHECK(total > 0.0, "allocate_task_counts: zero mix");
  std::vector<std::pair<EditKind, int>> out;
  std::vector<std::pair<double, size_t>> rema;
  int assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    const double exact = count * weights[i].second / total;
    const int base = static_cast<int>(std::floor(exact));
    out.emplace_back(weights[i].first, base);
    rema.emplace_back(exact - base, i);
    assigned += base;
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < count - assigned; ++i) out[rema[i % rema.size()].second].second++;
  return out;
}

}  // namespace musedit
