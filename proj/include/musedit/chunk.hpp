#pragma once

#include <vector>

#include "musedit/common.hpp"
#include "musedit/nn/modules.hpp"

namespace musedit {

// K-frame chunks with 50% overlap (hop = K/2).
struct ChunkSpec {
  int k = 16;
  int hop() const { return k / 2; }
};

// Chunk offsets plus per-frame linear-crossfade fusion weights. Weights for a
// frame covered by two chunks are stored as (w, 1-w) so they sum to exactly
// 1.0 in double arithmetic.
struct ChunkLayout {
  int total_frames = 0;
  int k = 0;
  std::vector<int> offsets;
  std::vector<int> valid;                     // valid frames per chunk
  std::vector<std::vector<double>> weights;   // per chunk, per valid frame
};

ChunkLayout make_chunk_layout(int total_frames, const ChunkSpec& spec);

// Splits seq (D x T) into K-frame chunks at offsets 0, K/2, K, ...; the right
// edge is zero-padded to a full chunk.
std::vector<Mat> segment(const Mat& seq, const ChunkSpec& spec, ChunkLayout* layout);

// Crossfade merge of (possibly transformed) chunks back to D x T.
Mat fuse(const std::vector<Mat>& chunks, const ChunkLayout& layout);

struct AttentionCost {
  long long paper_chunk_ops = 0;  // 2 * ceil(T/K) * K^2, the paper's bound
  long long full_ops = 0;         // T^2
  long long measured_score_elements = 0;  // K^2 per chunk actually computed
  int chunk_count = 0;
};

AttentionCost attention_cost(int T, int K);

// One transformer layer applied chunk-wise: per-chunk pre-LN multi-head
// self-attention and feed-forward with residuals, then crossfade fusion.
struct ChunkTransformerLayer {
  nn::LayerNorm ln_attn;
  nn::Attention attn;
  nn::LayerNorm ln_ff;
  nn::Linear ff1, ff2;
  ChunkSpec spec;
  int dim = 0;

  ChunkTransformerLayer() = default;
  ChunkTransformerLayer(nn::ParamStore& ps, const std::string& name, int dim,
                        int head_dim, int ff_mult, ChunkSpec spec, Rng& rng);

  // whole-sequence forward (segment -> per-chunk layer -> fuse)
  nn::V operator()(nn::Tape& t, nn::V x) const;
  // single chunk with an explicit validity mask (padded keys are masked out)
  nn::V single_chunk(nn::Tape& t, nn::V chunk, const std::vector<bool>& valid) const;
};

}  // namespace musedit
