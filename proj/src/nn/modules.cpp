#include "musedit/nn/modules.hpp"

#include <cmath>

namespace musedit::nn {

namespace {

Mat init_uniform(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

Linear::Linear(ParamStore& ps, const std::string& name, int in_, int out_, Rng& rng,
               bool bias, double gain)
    : in(in_), out(out_) {
  const double bound = gain / std::sqrt(static_cast<double>(in_));
  w = ps.add(name + ".w", init_uniform(out_, in_, bound, rng));
  if (bias) b = ps.add(name + ".b", Mat::Zero(out_, 1));
}

V Linear::operator()(Tape& t, V x) const {
  V y = t.matmul(t.param(w), x);
  if (b >= 0) y = t.add_col(y, t.param(b));
  return y;
}

Conv1d::Conv1d(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_,
               int stride_, int pad_, Rng& rng, bool bias, double gain)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
  const double bound = gain / std::sqrt(static_cast<double>(cin_ * k_));
  w = ps.add(name + ".w", init_uniform(cout_, cin_ * k_, bound, rng));
  if (bias) b = ps.add(name + ".b", Mat::Zero(cout_, 1));
}

V Conv1d::operator()(Tape& t, V x) const {
  return t.conv1d(x, t.param(w), b >= 0 ? t.param(b) : V{}, k, stride, pad);
}

ConvT1d::ConvT1d(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_,
                 int stride_, int pad_, Rng& rng, bool bias)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_ * k_) / stride_);
  w = ps.add(name + ".w", init_uniform(cin_, cout_ * k_, bound, rng));
  if (bias) b = ps.add(name + ".b", Mat::Zero(cout_, 1));
}

V ConvT1d::operator()(Tape& t, V x) const {
  return t.conv1d_transpose(x, t.param(w), b >= 0 ? t.param(b) : V{}, k, stride, pad);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim) {
  gamma = ps.add(name + ".g", Mat::Ones(dim, 1));
  beta = ps.add(name + ".b", Mat::Zero(dim, 1));
}

V LayerNorm::operator()(Tape& t, V x) const {
  return t.layer_norm(x, t.param(gamma), t.param(beta));
}

Embedding::Embedding(ParamStore& ps, const std::string& name, int dim_, int vocab_,
                     Rng& rng)
    : dim(dim_), vocab(vocab_) {
  table = ps.add(name + ".table", init_uniform(dim_, vocab_, 1.0, rng));
}

V Embedding::operator()(Tape& t, const std::vector<int>& ids) const {
  return t.cols_from_table(t.param(table), ids);
}

Attention::Attention(ParamStore& ps, const std::string& name, int dim_, int context_dim,
                     int head_dim_, Rng& rng)
    : heads(std::max(1, dim_ / head_dim_)), head_dim(head_dim_), dim(dim_) {
  ME_CHECK(dim_ % head_dim_ == 0, "attention: dim not divisible by head_dim");
  wq = Linear(ps, name + ".q", dim_, dim_, rng, false);
  wk = Linear(ps, name + ".k", context_dim, dim_, rng, false);
  wv = Linear(ps, name + ".v", context_dim, dim_, rng, false);
  wo = Linear(ps, name + ".o", dim_, dim_, rng, true);
}

V Attention::operator()(Tape& t, V q_in, V context, const std::vector<bool>* key_mask) const {
  const int tq = static_cast<int>(t.value(q_in).cols());
  const int tc = static_cast<int>(t.value(context).cols());
  V q = wq(t, q_in);
  V k = wk(t, context);
  V v = wv(t, context);
  Mat mask_row = Mat::Zero(1, tc);
  if (key_mask) {
    ME_CHECK(static_cast<int>(key_mask->size()) == tc, "attention: mask length");
    for (int j = 0; j < tc; ++j)
      if (!(*key_mask)[j]) mask_row(0, j) = -1e30;
  }
  std::vector<V> head_outs;
  head_outs.reserve(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (int h = 0; h < heads; ++h) {
    V qh = t.slice_rows(q, h * head_dim, head_dim);
    V kh = t.slice_rows(k, h * head_dim, head_dim);
    V vh = t.slice_rows(v, h * head_dim, head_dim);
    V scores = t.scale(t.matmul_tn(qh, kh), inv_sqrt);  // Tq x Tc, rows = queries
    if (key_mask) scores = t.add(scores, t.constant(mask_row.replicate(tq, 1)));
    V attn = t.softmax_rows(scores);
    head_outs.push_back(t.matmul_nt(vh, attn));  // head_dim x Tq
  }
  V merged = heads == 1 ? head_outs[0] : t.concat_rows(head_outs);
  return wo(t, merged);
}

}  // namespace musedit::nn
