#pragma once

#include <string>
#include <vector>

#include "musedit/nn/tape.hpp"
#include "musedit/rng.hpp"

namespace musedit::nn {

using V = Tape::V;

// Layers register their parameters in a ParamStore at construction and apply
// themselves to a tape at call time. They hold only parameter ids, so a model
// struct can be freely copied or rebuilt around a loaded store.

struct Linear {
  int w = -1, b = -1;
  int in = 0, out = 0;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
         bool bias = true, double gain = 1.0);
  V operator()(Tape& t, V x) const;  // x: in x T -> out x T
};

struct Conv1d {
  int w = -1, b = -1;
  int cin = 0, cout = 0, k = 1, stride = 1, pad = 0;
  Conv1d() = default;
  Conv1d(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
         int pad, Rng& rng, bool bias = true, double gain = 1.0);
  V operator()(Tape& t, V x) const;
};

struct ConvT1d {
  int w = -1, b = -1;
  int cin = 0, cout = 0, k = 1, stride = 1, pad = 0;
  ConvT1d() = default;
  ConvT1d(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
          int pad, Rng& rng, bool bias = true);
  V operator()(Tape& t, V x) const;
};

struct LayerNorm {
  int gamma = -1, beta = -1;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim);
  V operator()(Tape& t, V x) const;
};

struct Embedding {
  int table = -1;
  int dim = 0, vocab = 0;
  Embedding() = default;
  Embedding(ParamStore& ps, const std::string& name, int dim, int vocab, Rng& rng);
  V operator()(Tape& t, const std::vector<int>& ids) const;  // dim x L
};

// Multi-head attention. Query sequence q: D x Tq, context sequence c: Dc x Tc.
// key_mask (optional) marks valid context columns; masked keys get -1e30
// before the softmax.
struct Attention {
  Linear wq, wk, wv, wo;
  int heads = 1, head_dim = 0, dim = 0;
  Attention() = default;
  Attention(ParamStore& ps, const std::string& name, int dim, int context_dim,
            int head_dim, Rng& rng);
  V operator()(Tape& t, V q, V context, const std::vector<bool>* key_mask) const;
};

}  // namespace musedit::nn
