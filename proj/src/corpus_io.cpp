#include "musedit/corpus_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "musedit/rng.hpp"
#include "musedit/wav.hpp"

namespace fs = std::filesystem;

namespace musedit {

using nlohmann::json;

void save_clip(const std::string& root, const std::string& id, const StemSet& clip) {
  const fs::path dir = fs::path(root) / "clips" / id;
  fs::create_directories(dir);
  json meta;
  meta["schema_version"] = kClipSchemaVersion;
  meta["id"] = id;
  meta["tempo"] = clip.tempo;
  meta["genre"] = clip.genre;
  meta["sample_rate"] = clip.sample_rate;
  meta["duration"] = clip.duration;
  meta["beats_per_bar"] = clip.beats_per_bar;
  meta["seed"] = clip.seed;
  json notes = json::object();
  for (const auto& [name, list] : clip.notes) {
    json arr = json::array();
    for (const auto& n : list)
      arr.push_back({{"pitch", n.pitch},
                     {"onset", n.onset},
                     {"duration", n.duration},
                     {"velocity", n.velocity}});
    notes[name] = arr;
  }
  meta["notes"] = notes;
  json chords = json::array();
  for (const auto& s : clip.chords)
    chords.push_back({{"label", s.chord.label()}, {"start", s.start}, {"end", s.end}});
  meta["chords"] = chords;
  json stems = json::array();
  for (const auto& [name, wave] : clip.stems) {
    stems.push_back(name);
    write_wav((dir / (name + ".wav")).string(), wave, clip.sample_rate);
  }
  meta["stems"] = stems;
  std::ofstream f(dir / "clip.json");
  ME_CHECK(f.good(), "save_clip: cannot write " + (dir / "clip.json").string());
  f << meta.dump(2) << "\n";
}

StemSet load_clip(const std::string& root, const std::string& id) {
  const fs::path dir = fs::path(root) / "clips" / id;
  std::ifstream f(dir / "clip.json");
  ME_CHECK(f.good(), "load_clip: cannot open " + (dir / "clip.json").string());
  json meta = json::parse(f);
  ME_CHECK(meta.value("schema_version", -1) == kClipSchemaVersion,
           "load_clip: unsupported schema_version in " + id);
  StemSet clip;
  clip.tempo = meta["tempo"].get<double>();
  clip.genre = meta["genre"].get<std::string>();
  clip.sample_rate = meta["sample_rate"].get<int>();
  clip.duration = meta["duration"].get<double>();
  clip.beats_per_bar = meta["beats_per_bar"].get<int>();
  clip.seed = meta["seed"].get<uint64_t>();
  for (const auto& [name, arr] : meta["notes"].items()) {
    std::vector<NoteEvent> list;
    for (const auto& n : arr)
      list.push_back({n["pitch"].get<int>(), n["onset"].get<double>(),
                      n["duration"].get<double>(), n["velocity"].get<double>()});
    clip.notes[name] = list;
  }
  for (const auto& c : meta["chords"])
    clip.chords.push_back({Chord::from_label(c["label"].get<std::string>()),
                           c["start"].get<double>(), c["end"].get<double>()});
  for (const auto& s : meta["stems"]) {
    const std::string name = s.get<std::string>();
    WavData w = read_wav((dir / (name + ".wav")).string());
    ME_CHECK(w.sample_rate == clip.sample_rate, "load_clip: sample rate mismatch");
    clip.stems[name] = w.samples;
  }
  return clip;
}

std::vector<std::string> list_clip_ids(const std::string& root) {
  const fs::path dir = fs::path(root) / "clips";
  ME_CHECK(fs::is_directory(dir), "list_clip_ids: no clips directory under " + root);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "clip.json"))
      ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> synth_corpus(const std::string& root, const SynthConfig& cfg) {
  ME_CHECK(cfg.count >= 2, "synth_corpus: need at least 2 clips");
  const auto& presets = genre_presets();
  Rng rng(cfg.seed);
  std::vector<std::string> ids;
  char buf[32];
  for (int i = 0; i < cfg.count; i += 2) {
    const GenrePreset& preset = presets[(i / 2) % presets.size()];
    const uint64_t seed_a = rng.next_u64();
    StemSet a = compose_clip(preset, cfg.tempo, cfg.duration, seed_a, cfg.sample_rate);
    snprintf(buf, sizeof(buf), "%06d", i);
    save_clip(root, buf, a);
    ids.emplace_back(buf);
    if (i + 1 >= cfg.count) break;
    // partner: same tempo and chord cycle, different stem set
    StemSet b;
    bool found = false;
    uint64_t seed_b = rng.next_u64();
    for (int tries = 0; tries < 4096; ++tries, ++seed_b) {
      b = compose_clip(preset, cfg.tempo, cfg.duration, seed_b, cfg.sample_rate);
      if (b.chord_labels() == a.chord_labels() && b.stem_names() != a.stem_names()) {
        found = true;
        break;
      }
    }
    ME_CHECK(found, "synth_corpus: could not find a rhythm-matched partner");
    snprintf(buf, sizeof(buf), "%06d", i + 1);
    save_clip(root, buf, b);
    ids.emplace_back(buf);
  }
  return ids;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw Error("bad split");
}

Split clip_split(const std::string& id) {
  const int idx = std::stoi(id);
  const int pair = idx / 2;
  if (pair % 10 == 8) return Split::Val;
  if (pair % 10 == 9) return Split::Test;
  return Split::Train;
}

json TripletRecord::to_json() const {
  return {{"instruction", instruction},
          {"task",
           {{"kind", edit_kind_name(task.kind)},
            {"instruments", task.instruments},
            {"genre", task.genre}}},
          {"source_wav", source_wav},
          {"target_wav", target_wav},
          {"source_clip", source_clip},
          {"target_clip", target_clip},
          {"source_stems", source_stems},
          {"target_stems", target_stems},
          {"sample_rate", sample_rate},
          {"seed", seed}};
}

TripletRecord TripletRecord::from_json(const json& j) {
  TripletRecord r;
  r.instruction = j["instruction"].get<std::string>();
  r.task.kind = edit_kind_from_name(j["task"]["kind"].get<std::string>());
  r.task.instruments = j["task"]["instruments"].get<std::vector<std::string>>();
  r.task.genre = j["task"]["genre"].get<std::string>();
  r.source_wav = j["source_wav"].get<std::string>();
  r.target_wav = j["target_wav"].get<std::string>();
  r.source_clip = j["source_clip"].get<std::string>();
  r.target_clip = j["target_clip"].get<std::string>();
  r.source_stems = j["source_stems"].get<std::vector<std::string>>();
  r.target_stems = j["target_stems"].get<std::vector<std::string>>();
  r.sample_rate = j["sample_rate"].get<int>();
  r.seed = j["seed"].get<uint64_t>();
  return r;
}

void write_manifest(const std::string& path, const std::vector<TripletRecord>& records) {
  std::ofstream f(path);
  ME_CHECK(f.good(), "write_manifest: cannot open " + path);
  for (const auto& r : records) f << r.to_json().dump() << "\n";
}

std::vector<TripletRecord> read_manifest(const std::string& path) {
  std::ifstream f(path);
  ME_CHECK(f.good(), "read_manifest: cannot open " + path);
  std::vector<TripletRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(TripletRecord::from_json(json::parse(line)));
  }
  return out;
}

std::vector<TripletRecord> generate_triplets(const std::string& corpus_root,
                                             const std::vector<std::string>& clip_ids,
                                             const TripletGenConfig& cfg,
                                             const std::string& out_dir) {
  ME_CHECK(!clip_ids.empty(), "generate_triplets: no clips");
  fs::create_directories(fs::path(out_dir) / "wav");

  std::vector<StemSet> clips;
  std::vector<ClipRef> refs;
  clips.reserve(clip_ids.size());
  for (const auto& id : clip_ids) clips.push_back(load_clip(corpus_root, id));
  for (size_t i = 0; i < clips.size(); ++i) refs.push_back({clip_ids[i], &clips[i]});

  Rng rng(cfg.seed);
  std::vector<TripletRecord> records;
  int idx = 0;
  auto emit = [&](const EditTriplet& t, uint64_t seed) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%06d", idx++);
    TripletRecord r;
    r.instruction = t.instruction;
    r.task = t.task;
    r.source_wav = (fs::path("wav") / (std::string(buf) + "_src.wav")).string();
    r.target_wav = (fs::path("wav") / (std::string(buf) + "_tgt.wav")).string();
    r.source_clip = t.source_clip_id;
    r.target_clip = t.target_clip_id;
    r.source_stems = t.source_stems;
    r.target_stems = t.target_stems;
    r.sample_rate = t.sample_rate;
    r.seed = seed;
    write_wav((fs::path(out_dir) / r.source_wav).string(), t.source, t.sample_rate);
    write_wav((fs::path(out_dir) / r.target_wav).string(), t.target, t.sample_rate);
    records.push_back(std::move(r));
  };

  for (const auto& [kind, count] : allocate_task_counts(cfg.count, cfg.mix)) {
    for (int i = 0; i < count; ++i) {
      const ClipRef& ref =
          refs[rng.uniform_int(0, static_cast<int>(refs.size()) - 1)];
      const uint64_t seed = rng.next_u64();
      switch (kind) {
        case EditKind::Add:
          emit(make_add_remove(ref, seed).first, seed);
          break;
        case EditKind::Remove:
          emit(make_add_remove(ref, seed).second, seed);
          break;
        case EditKind::Extract:
          emit(make_extract(ref, seed), seed);
          break;
        case EditKind::Replace:
          emit(make_replace(ref, seed), seed);
          break;
        case EditKind::Remix:
          emit(make_remix(ref, refs, seed), seed);
          break;
      }
    }
  }
  return records;
}

EditTriplet load_triplet(const TripletRecord& rec, const std::string& base_dir) {
  EditTriplet t;
  t.instruction = rec.instruction;
  t.task = rec.task;
  WavData src = read_wav((fs::path(base_dir) / rec.source_wav).string());
  WavData tgt = read_wav((fs::path(base_dir) / rec.target_wav).string());
  ME_CHECK(src.sample_rate == rec.sample_rate && tgt.sample_rate == rec.sample_rate,
           "load_triplet: sample rate mismatch");
  t.source = src.samples;
  t.target = tgt.samples;
  t.sample_rate = rec.sample_rate;
  t.source_clip_id = rec.source_clip;
  t.target_clip_id = rec.target_clip;
  t.source_stems = rec.source_stems;
  t.target_stems = rec.target_stems;
  return t;
}

}  // namespace musedit
