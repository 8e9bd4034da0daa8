#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "musedit/synth.hpp"
#include "musedit/triplets.hpp"

namespace musedit {

inline constexpr int kClipSchemaVersion = 1;

// On-disk layout: <root>/clips/<id>/<stem>.wav plus clip.json sidecar.
void save_clip(const std::string& root, const std::string& id, const StemSet& clip);
StemSet load_clip(const std::string& root, const std::string& id);
std::vector<std::string> list_clip_ids(const std::string& root);

// Clips are generated in rhythm-matched pairs (same tempo and chord cycle,
// different stems) so remix retrieval always has a partner. Returns ids.
struct SynthConfig {
  int count = 500;
  uint64_t seed = 7;
  double duration = 1.0;
  double tempo = 120.0;
  int sample_rate = 8000;
};
std::vector<std::string> synth_corpus(const std::string& root, const SynthConfig& cfg);

enum class Split { Train, Val, Test };
std::string split_name(Split s);
// Pairs stay inside one split: 8/1/1 by pair index.
Split clip_split(const std::string& id);

struct TripletRecord {
  std::string instruction;
  EditTask task;
  std::string source_wav;
  std::string target_wav;
  std::string source_clip;
  std::string target_clip;
  std::vector<std::string> source_stems;
  std::vector<std::string> target_stems;
  int sample_rate = 8000;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TripletRecord from_json(const nlohmann::json& j);
};

void write_manifest(const std::string& path, const std::vector<TripletRecord>& records);
std::vector<TripletRecord> read_manifest(const std::string& path);

struct TripletGenConfig {
  int count = 1000;
  uint64_t seed = 11;
  TaskMix mix;
};

// Builds triplets from the given clips, writes WAV pairs under
// <out_dir>/wav/ and returns manifest records (paths relative to out_dir).
std::vector<TripletRecord> generate_triplets(const std::string& corpus_root,
                                             const std::vector<std::string>& clip_ids,
                                             const TripletGenConfig& cfg,
                                             const std::string& out_dir);

EditTriplet load_triplet(const TripletRecord& rec, const std::string& base_dir);

}  // namespace musedit
