#include "musedit/chunk.hpp"

namespace musedit {

ChunkLayout make_chunk_layout(int total_frames, const ChunkSpec& spec) {
  ME_CHECK(total_frames >= 1, "chunk layout: empty sequence");
  ME_CHECK(spec.k >= 2 && spec.k % 2 == 0, "chunk layout: K must be even and >= 2");
  const int K = spec.k;
  const int hop = spec.hop();
  ChunkLayout layout;
  layout.total_frames = total_frames;
  layout.k = K;
  const int n_chunks =
      total_frames <= K ? 1 : (total_frames - K + hop - 1) / hop + 1;
  for (int j = 0; j < n_chunks; ++j) {
    const int off = j * hop;
    layout.offsets.push_back(off);
    layout.valid.push_back(std::min(K, total_frames - off));
  }
  // linear crossfade over each K/2 overlap; lone coverage gets weight 1
  const int L = hop;
  for (int j = 0; j < n_chunks; ++j) {
    std::vector<double> w(layout.valid[j], 1.0);
    if (j > 0) {
      for (int c = 0; c < L && c < layout.valid[j]; ++c)
        w[c] = (2.0 * c + 1.0) / (2.0 * L);
    }
    if (j + 1 < n_chunks) {
      for (int c = L; c < layout.valid[j]; ++c) {
        const int p = c - L;
        w[c] = 1.0 - (2.0 * p + 1.0) / (2.0 * L);
      }
    }
    layout.weights.push_back(std::move(w));
  }
  return layout;
}

std::vector<Mat> segment(const Mat& seq, const ChunkSpec& spec, ChunkLayout* layout) {
  ChunkLayout lay = make_chunk_layout(static_cast<int>(seq.cols()), spec);
  std::vector<Mat> chunks;
  for (size_t j = 0; j < lay.offsets.size(); ++j) {
    Mat c = Mat::Zero(seq.rows(), lay.k);
    c.leftCols(lay.valid[j]) = seq.middleCols(lay.offsets[j], lay.valid[j]);
    chunks.push_back(std::move(c));
  }
  if (layout) *layout = std::move(lay);
  return chunks;
}

Mat fuse(const std::vector<Mat>& chunks, const ChunkLayout& layout) {
  ME_CHECK(chunks.size() == layout.offsets.size(), "fuse: chunk count mismatch");
  ME_CHECK(!chunks.empty(), "fuse: no chunks");
  Mat out = Mat::Zero(chunks[0].rows(), layout.total_frames);
  for (size_t j = 0; j < chunks.size(); ++j) {
    ME_CHECK(chunks[j].rows() == out.rows(), "fuse: row mismatch");
    ME_CHECK(chunks[j].cols() >= layout.valid[j], "fuse: chunk shorter than layout");
    for (int c = 0; c < layout.valid[j]; ++c)
      out.col(layout.offsets[j] + c) += layout.weights[j][c] * chunks[j].col(c);
  }
  return out;
}

AttentionCost attention_cost(int T, int K) {
  ME_CHECK(T >= 1 && K >= 1, "attention_cost: T, K must be >= 1");
  AttentionCost c;
  const long long kk = static_cast<long long>(K) * K;
  c.full_ops = static_cast<long long>(T) * T;
  c.paper_chunk_ops = 2LL * ((T + K - 1) / K) * kk;
  // exact overlapped chunk count, ceil((T-K)/(K/2)) + 1; the paper's
  // 2*ceil(T/K) is an upper bound on it
  c.chunk_count = T <= K ? 1 : static_cast<int>((2LL * (T - K) + K - 1) / K) + 1;
  // the implementation computes a full K x K score matrix per chunk
  c.measured_score_elements = static_cast<long long>(c.chunk_count) * kk;
  return c;
}

ChunkTransformerLayer::ChunkTransformerLayer(nn::ParamStore& ps, const std::string& name,
                                             int dim_, int head_dim, int ff_mult,
                                             ChunkSpec spec_, Rng& rng)
    : spec(spec_), dim(dim_) {
  ln_attn = nn::LayerNorm(ps, name + ".ln_attn", dim_);
  attn = nn::Attention(ps, name + ".attn", dim_, dim_, head_dim, rng);
  ln_ff = nn::LayerNorm(ps, name + ".ln_ff", dim_);
  ff1 = nn::Linear(ps, name + ".ff1", dim_, dim_ * ff_mult, rng);
  ff2 = nn::Linear(ps, name + ".ff2", dim_ * ff_mult, dim_, rng);
}

nn::V ChunkTransformerLayer::single_chunk(nn::Tape& t, nn::V chunk,
                                          const std::vector<bool>& valid) const {
  nn::V normed = ln_attn(t, chunk);
  nn::V h = t.add(chunk, attn(t, normed, normed, &valid));
  nn::V f = ff2(t, t.silu(ff1(t, ln_ff(t, h))));
  return t.add(h, f);
}

nn::V ChunkTransformerLayer::operator()(nn::Tape& t, nn::V x) const {
  const int T = static_cast<int>(t.value(x).cols());
  ChunkLayout layout = make_chunk_layout(T, spec);
  std::vector<nn::V> outs;
  for (size_t j = 0; j < layout.offsets.size(); ++j) {
    nn::V chunk = t.slice_cols(x, layout.offsets[j], layout.valid[j]);
    if (layout.valid[j] < layout.k)
      chunk = t.pad_cols(chunk, 0, layout.k - layout.valid[j]);
    std::vector<bool> valid(layout.k, false);
    for (int c = 0; c < layout.valid[j]; ++c) valid[c] = true;
    outs.push_back(single_chunk(t, chunk, valid));
  }
  return t.overlap_add(outs, layout.offsets, layout.weights, T);
}

}  // namespace musedit
