#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "musedit/common.hpp"
#include "musedit/instructions.hpp"
#include "musedit/music.hpp"

namespace musedit {

// Embedding sequence for an instruction: D x L plus the token ids it came
// from. The table is a learned parameter of the diffusion model; a seeded
// table stands in wherever no trained model is involved.
struct TextEmb {
  Mat embeddings;  // D x L
  std::vector<int> token_ids;
  int length() const { return static_cast<int>(token_ids.size()); }
};

class TextEncoder {
 public:
  TextEncoder(int dim, uint64_t seed);       // deterministic random table
  TextEncoder(Mat table);                    // wrap a trained D x vocab table
  TextEmb encode(const std::string& instruction) const;
  TextEmb encode(const EditTask& task) const;
  const Mat& table() const { return table_; }
  int dim() const { return static_cast<int>(table_.rows()); }

 private:
  Mat table_;
};

// Frame-wise chord probabilities, columns sum to 1. d_p = 25 (24 triads plus
// N), default hop 0.25 s.
struct ChordMatrix {
  Mat probs;              // 25 x T_p
  double frame_hop = 0.25;
  int frames() const { return static_cast<int>(probs.cols()); }
  std::vector<Chord> argmax_labels() const;
  nlohmann::json to_json() const;
};

struct ChordExtractorConfig {
  double hop = 0.25;          // seconds per chord frame
  double temperature = 0.1;   // softmax over template scores
  int nfft = 8192;  // zero-padded for fine peak interpolation
  double silence_power = 1e-8;
};

// Chromagram template matching over 24 binary triad templates plus a uniform
// "N" template. Deterministic; silence maps to N.
ChordMatrix extract_chords(const Vec& wave, int sample_rate,
                           const ChordExtractorConfig& cfg = {});

// Ground-truth chord labels resampled at the extractor hop (for CRA).
std::vector<Chord> chords_at_hop(const std::vector<ChordSpan>& spans, double duration,
                                 double hop = 0.25);

}  // namespace musedit
