#include "musedit/nn/tape.hpp"

#include <cmath>

namespace musedit::nn {

// ---------------------------------------------------------------- ParamStore

int ParamStore::add(const std::string& name, Mat value) {
  ME_CHECK(find(name) < 0, "duplicate parameter name: " + name);
  names_.push_back(name);
  values_.push_back(std::move(value));
  return static_cast<int>(values_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

int64_t ParamStore::scalar_count() const {
  int64_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

GradSink::GradSink(const ParamStore& params) {
  grads_.reserve(params.count());
  for (int i = 0; i < params.count(); ++i)
    grads_.push_back(Mat::Zero(params.value(i).rows(), params.value(i).cols()));
}

void GradSink::zero() {
  for (auto& gm : grads_) gm.setZero();
}

void GradSink::accumulate(const GradSink& other) {
  ME_CHECK(grads_.size() == other.grads_.size(), "GradSink size mismatch");
  for (size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

// ---------------------------------------------------------------------- Tape

Tape::Tape(const ParamStore& params, GradSink* sink) : params_(params), sink_(sink) {
  nodes_.reserve(256);
}

Tape::V Tape::make(Mat val, bool needs_grad,
                   std::function<void(Tape&, const Node&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return V{static_cast<int>(nodes_.size()) - 1};
}

Tape::V Tape::param(int id) {
  bool track = sink_ != nullptr;
  V v = make(params_.value(id), track, nullptr);
  if (track) param_nodes_.emplace_back(v.i, id);
  return v;
}

Tape::V Tape::constant(Mat x) { return make(std::move(x), false, nullptr); }

Tape::V Tape::input(Mat x) { return make(std::move(x), true, nullptr); }

// Each op captures its parent handles by value and pulls its own output
// gradient from `out` during the reverse sweep.

Tape::V Tape::add(V a, V b) {
  ME_CHECK(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
           "add: shape mismatch");
  bool tr = ng(a) || ng(b);
  return make(value(a) + value(b), tr, [a, b](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad;
    if (t.ng(b)) t.g(b.i) += out.grad;
  });
}

Tape::V Tape::sub(V a, V b) {
  ME_CHECK(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
           "sub: shape mismatch");
  bool tr = ng(a) || ng(b);
  return make(value(a) - value(b), tr, [a, b](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad;
    if (t.ng(b)) t.g(b.i) -= out.grad;
  });
}

Tape::V Tape::mul(V a, V b) {
  ME_CHECK(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
           "mul: shape mismatch");
  bool tr = ng(a) || ng(b);
  return make(value(a).cwiseProduct(value(b)), tr, [a, b](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad.cwiseProduct(t.value(b));
    if (t.ng(b)) t.g(b.i) += out.grad.cwiseProduct(t.value(a));
  });
}

Tape::V Tape::scale(V a, double s) {
  return make(value(a) * s, ng(a), [a, s](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad * s;
  });
}

Tape::V Tape::add_scalar(V a, double s) {
  return make(value(a).array() + s, ng(a), [a](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad;
  });
}

Tape::V Tape::add_col(V a, V col) {
  ME_CHECK(value(col).cols() == 1 && value(col).rows() == value(a).rows(),
           "add_col: shape mismatch");
  bool tr = ng(a) || ng(col);
  Mat y = value(a);
  y.colwise() += Eigen::VectorXd(value(col).col(0));
  return make(std::move(y), tr, [a, col](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad;
    if (t.ng(col)) t.g(col.i) += out.grad.rowwise().sum();
  });
}

Tape::V Tape::mul_col(V a, V col) {
  ME_CHECK(value(col).cols() == 1 && value(col).rows() == value(a).rows(),
           "mul_col: shape mismatch");
  bool tr = ng(a) || ng(col);
  Mat y = value(a).array().colwise() * value(col).col(0).array();
  return make(std::move(y), tr, [a, col](Tape& t, const Node& out) {
    if (t.ng(a))
      t.g(a.i) += (out.grad.array().colwise() * t.value(col).col(0).array()).matrix();
    if (t.ng(col))
      t.g(col.i) += out.grad.cwiseProduct(t.value(a)).rowwise().sum();
  });
}

Tape::V Tape::relu(V a) {
  return make(value(a).cwiseMax(0.0), ng(a), [a](Tape& t, const Node& out) {
    if (!t.ng(a)) return;
    t.g(a.i) += (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(out.grad);
  });
}

Tape::V Tape::leaky_relu(V a, double slope) {
  Mat y = value(a).unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return make(std::move(y), ng(a), [a, slope](Tape& t, const Node& out) {
    if (!t.ng(a)) return;
    Mat m = t.value(a).unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    t.g(a.i) += m.cwiseProduct(out.grad);
  });
}

Tape::V Tape::silu(V a) {
  Mat sig = (1.0 / (1.0 + (-value(a)).array().exp())).matrix();
  return make(value(a).cwiseProduct(sig), ng(a), [a, sig](Tape& t, const Node& out) {
    if (!t.ng(a)) return;
    // d/dx x*s(x) = s(x) * (1 + x * (1 - s(x)))
    Mat d = sig.array() * (1.0 + t.value(a).array() * (1.0 - sig.array()));
    t.g(a.i) += d.cwiseProduct(out.grad);
  });
}

Tape::V Tape::tanh_(V a) {
  Mat y = value(a).array().tanh();
  return make(y, ng(a), [a, y](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += ((1.0 - y.array().square()) * out.grad.array()).matrix();
  });
}

Tape::V Tape::exp_(V a) {
  Mat y = value(a).array().exp();
  return make(y, ng(a), [a, y](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += y.cwiseProduct(out.grad);
  });
}

Tape::V Tape::log_(V a) {
  return make(value(a).array().log(), ng(a), [a](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad.cwiseQuotient(t.value(a));
  });
}

Tape::V Tape::square(V a) {
  return make(value(a).array().square(), ng(a), [a](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += 2.0 * t.value(a).cwiseProduct(out.grad);
  });
}

Tape::V Tape::softplus(V a) {
  Mat y = value(a).unaryExpr([](double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
  });
  return make(std::move(y), ng(a), [a](Tape& t, const Node& out) {
    if (!t.ng(a)) return;
    Mat s = (1.0 / (1.0 + (-t.value(a)).array().exp())).matrix();
    t.g(a.i) += s.cwiseProduct(out.grad);
  });
}

Tape::V Tape::transpose(V a) {
  return make(value(a).transpose(), ng(a), [a](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad.transpose();
  });
}

Tape::V Tape::concat_rows(const std::vector<V>& parts) {
  ME_CHECK(!parts.empty(), "concat_rows: empty");
  Eigen::Index cols = value(parts[0]).cols(), rows = 0;
  bool tr = false;
  for (V p : parts) {
    ME_CHECK(value(p).cols() == cols, "concat_rows: column mismatch");
    rows += value(p).rows();
    tr = tr || ng(p);
  }
  Mat y(rows, cols);
  Eigen::Index r = 0;
  for (V p : parts) {
    y.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  auto parts_copy = parts;
  return make(std::move(y), tr, [parts_copy](Tape& t, const Node& out) {
    Eigen::Index r = 0;
    for (V p : parts_copy) {
      if (t.ng(p)) t.g(p.i) += out.grad.middleRows(r, t.value(p).rows());
      r += t.value(p).rows();
    }
  });
}

Tape::V Tape::slice_rows(V a, int r0, int n) {
  ME_CHECK(r0 >= 0 && n >= 0 && r0 + n <= value(a).rows(), "slice_rows: out of range");
  return make(value(a).middleRows(r0, n), ng(a), [a, r0, n](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).middleRows(r0, n) += out.grad;
  });
}

Tape::V Tape::slice_cols(V a, int c0, int n) {
  ME_CHECK(c0 >= 0 && n >= 0 && c0 + n <= value(a).cols(), "slice_cols: out of range");
  return make(value(a).middleCols(c0, n), ng(a), [a, c0, n](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).middleCols(c0, n) += out.grad;
  });
}

Tape::V Tape::pad_cols(V a, int left, int right) {
  ME_CHECK(left >= 0 && right >= 0, "pad_cols: negative pad");
  Mat y = Mat::Zero(value(a).rows(), value(a).cols() + left + right);
  y.middleCols(left, value(a).cols()) = value(a);
  return make(std::move(y), ng(a), [a, left](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i) += out.grad.middleCols(left, t.value(a).cols());
  });
}

Tape::V Tape::broadcast_col(V col, int ncols) {
  ME_CHECK(value(col).cols() == 1, "broadcast_col: expects n x 1");
  Mat y = value(col).replicate(1, ncols);
  return make(std::move(y), ng(col), [col](Tape& t, const Node& out) {
    if (t.ng(col)) t.g(col.i) += out.grad.rowwise().sum();
  });
}

Tape::V Tape::matmul(V a, V b) {
  ME_CHECK(value(a).cols() == value(b).rows(), "matmul: inner dim mismatch");
  bool tr = ng(a) || ng(b);
  return make(value(a) * value(b), tr, [a, b](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).noalias() += out.grad * t.value(b).transpose();
    if (t.ng(b)) t.g(b.i).noalias() += t.value(a).transpose() * out.grad;
  });
}

Tape::V Tape::matmul_tn(V a, V b) {
  ME_CHECK(value(a).rows() == value(b).rows(), "matmul_tn: dim mismatch");
  bool tr = ng(a) || ng(b);
  return make(value(a).transpose() * value(b), tr, [a, b](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).noalias() += t.value(b) * out.grad.transpose();
    if (t.ng(b)) t.g(b.i).noalias() += t.value(a) * out.grad;
  });
}

Tape::V Tape::matmul_nt(V a, V b) {
  ME_CHECK(value(a).cols() == value(b).cols(), "matmul_nt: dim mismatch");
  bool tr = ng(a) || ng(b);
  return make(value(a) * value(b).transpose(), tr, [a, b](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).noalias() += out.grad * t.value(b);
    if (t.ng(b)) t.g(b.i).noalias() += out.grad.transpose() * t.value(a);
  });
}

Tape::V Tape::sum(V a) {
  Mat y(1, 1);
  y(0, 0) = value(a).sum();
  return make(std::move(y), ng(a), [a](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).array() += out.grad(0, 0);
  });
}

Tape::V Tape::mean(V a) {
  const double n = static_cast<double>(value(a).size());
  Mat y(1, 1);
  y(0, 0) = value(a).sum() / n;
  return make(std::move(y), ng(a), [a, n](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).array() += out.grad(0, 0) / n;
  });
}

Tape::V Tape::mse(V a, V b) {
  ME_CHECK(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
           "mse: shape mismatch");
  const double n = static_cast<double>(value(a).size());
  Mat diff = value(a) - value(b);
  Mat y(1, 1);
  y(0, 0) = diff.squaredNorm() / n;
  bool tr = ng(a) || ng(b);
  return make(std::move(y), tr, [a, b, diff, n](Tape& t, const Node& out) {
    const double c = 2.0 * out.grad(0, 0) / n;
    if (t.ng(a)) t.g(a.i) += c * diff;
    if (t.ng(b)) t.g(b.i) -= c * diff;
  });
}

Tape::V Tape::row_logsumexp(V a) {
  const Mat& x = value(a);
  Mat y(x.rows(), 1);
  Mat soft(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    const double s = e.sum();
    y(r, 0) = m + std::log(s);
    soft.row(r) = (e / s).matrix();
  }
  return make(std::move(y), ng(a), [a, soft](Tape& t, const Node& out) {
    if (!t.ng(a)) return;
    t.g(a.i) += (soft.array().colwise() * out.grad.col(0).array()).matrix();
  });
}

Tape::V Tape::diag_as_col(V a) {
  ME_CHECK(value(a).rows() == value(a).cols(), "diag_as_col: not square");
  Mat y = value(a).diagonal();
  return make(std::move(y), ng(a), [a](Tape& t, const Node& out) {
    if (t.ng(a)) t.g(a.i).diagonal() += out.grad.col(0);
  });
}

// ------------------------------------------------------------- convolutions

namespace {

// cols: (Cin*k) x T_out, row index = ci*k + kk
void im2col(const Mat& x, int k, int stride, int pad, Mat& cols) {
  const int cin = static_cast<int>(x.rows());
  const int T = static_cast<int>(x.cols());
  const int tout = (T + 2 * pad - k) / stride + 1;
  cols.setZero(cin * k, tout);
  for (int t = 0; t < tout; ++t) {
    const int start = t * stride - pad;
    for (int kk = 0; kk < k; ++kk) {
      const int src = start + kk;
      if (src < 0 || src >= T) continue;
      for (int ci = 0; ci < cin; ++ci) cols(ci * k + kk, t) = x(ci, src);
    }
  }
}

void col2im(const Mat& cols, int k, int stride, int pad, int T, Mat& x) {
  const int cin = static_cast<int>(cols.rows()) / k;
  const int tout = static_cast<int>(cols.cols());
  x.setZero(cin, T);
  for (int t = 0; t < tout; ++t) {
    const int start = t * stride - pad;
    for (int kk = 0; kk < k; ++kk) {
      const int dst = start + kk;
      if (dst < 0 || dst >= T) continue;
      for (int ci = 0; ci < cin; ++ci) x(ci, dst) += cols(ci * k + kk, t);
    }
  }
}

}  // namespace

Tape::V Tape::conv1d(V x, V w, V b, int k, int stride, int pad) {
  const Mat& xm = value(x);
  const Mat& wm = value(w);
  ME_CHECK(wm.cols() == xm.rows() * k, "conv1d: weight shape mismatch");
  ME_CHECK(xm.cols() + 2 * pad >= k, "conv1d: input shorter than kernel");
  Mat cols;
  im2col(xm, k, stride, pad, cols);
  Mat y = wm * cols;
  if (b.valid()) y.colwise() += Eigen::VectorXd(value(b).col(0));
  bool tr = ng(x) || ng(w) || (b.valid() && ng(b));
  return make(std::move(y), tr, [x, w, b, k, stride, pad, cols](Tape& t, const Node& out) {
    if (t.ng(w)) t.g(w.i).noalias() += out.grad * cols.transpose();
    if (b.valid() && t.ng(b)) t.g(b.i) += out.grad.rowwise().sum();
    if (t.ng(x)) {
      Mat dcols = t.value(w).transpose() * out.grad;
      Mat dx;
      col2im(dcols, k, stride, pad, static_cast<int>(t.value(x).cols()), dx);
      t.g(x.i) += dx;
    }
  });
}

Tape::V Tape::conv1d_transpose(V x, V w, V b, int k, int stride, int pad) {
  const Mat& xm = value(x);
  const Mat& wm = value(w);
  ME_CHECK(wm.rows() == xm.rows(), "conv1d_transpose: weight rows != Cin");
  ME_CHECK(wm.cols() % k == 0, "conv1d_transpose: weight cols not multiple of k");
  const int cout = static_cast<int>(wm.cols()) / k;
  const int tout = (static_cast<int>(xm.cols()) - 1) * stride + k - 2 * pad;
  ME_CHECK(tout > 0, "conv1d_transpose: output length <= 0");
  Mat dcols = wm.transpose() * xm;  // (Cout*k) x T_in
  Mat y;
  col2im(dcols, k, stride, pad, tout, y);  // Cout x T_out
  if (b.valid()) y.colwise() += Eigen::VectorXd(value(b).col(0));
  bool tr = ng(x) || ng(w) || (b.valid() && ng(b));
  return make(std::move(y), tr, [x, w, b, k, stride, pad](Tape& t, const Node& out) {
    Mat cols;
    im2col(out.grad, k, stride, pad, cols);  // (Cout*k) x T_in
    if (t.ng(w)) t.g(w.i).noalias() += t.value(x) * cols.transpose();
    if (b.valid() && t.ng(b)) t.g(b.i) += out.grad.rowwise().sum();
    if (t.ng(x)) t.g(x.i).noalias() += t.value(w) * cols;
  });
}

Tape::V Tape::avg_pool1d(V x, int k, int stride) {
  const Mat& xm = value(x);
  const int T = static_cast<int>(xm.cols());
  const int tout = (T - k) / stride + 1;
  ME_CHECK(tout > 0, "avg_pool1d: input too short");
  Mat y(xm.rows(), tout);
  for (int t = 0; t < tout; ++t)
    y.col(t) = xm.middleCols(t * stride, k).rowwise().mean();
  return make(std::move(y), ng(x), [x, k, stride](Tape& t, const Node& out) {
    if (!t.ng(x)) return;
    for (Eigen::Index c = 0; c < out.grad.cols(); ++c)
      for (int kk = 0; kk < k; ++kk)
        t.g(x.i).col(c * stride + kk) += out.grad.col(c) / static_cast<double>(k);
  });
}

Tape::V Tape::layer_norm(V x, V gamma, V beta, double eps) {
  const Mat& xm = value(x);
  ME_CHECK(value(gamma).rows() == xm.rows() && value(gamma).cols() == 1,
           "layer_norm: gamma shape");
  ME_CHECK(value(beta).rows() == xm.rows() && value(beta).cols() == 1,
           "layer_norm: beta shape");
  const double n = static_cast<double>(xm.rows());
  Eigen::RowVectorXd mu = xm.colwise().mean();
  Mat centered = xm.rowwise() - mu;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  Mat xhat = centered.array().rowwise() * inv_std.array();
  Mat y = (xhat.array().colwise() * value(gamma).col(0).array()).matrix();
  y.colwise() += Eigen::VectorXd(value(beta).col(0));
  bool tr = ng(x) || ng(gamma) || ng(beta);
  return make(std::move(y), tr,
              [x, gamma, beta, xhat, inv_std, n](Tape& t, const Node& out) {
                if (t.ng(gamma)) t.g(gamma.i) += out.grad.cwiseProduct(xhat).rowwise().sum();
                if (t.ng(beta)) t.g(beta.i) += out.grad.rowwise().sum();
                if (!t.ng(x)) return;
                Mat dxhat =
                    (out.grad.array().colwise() * t.value(gamma).col(0).array()).matrix();
                // per-column layernorm backward
                Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
                Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
                Mat dx = dxhat;
                dx.array().rowwise() -= sum_d.array() / n;
                dx.array() -= xhat.array().rowwise() * (sum_dx.array() / n);
                dx.array().rowwise() *= inv_std.array();
                t.g(x.i) += dx;
              });
}

Tape::V Tape::softmax_rows(V x) {
  const Mat& xm = value(x);
  Mat y(xm.rows(), xm.cols());
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    const double m = xm.row(r).maxCoeff();
    Eigen::ArrayXd e = (xm.row(r).array() - m).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  return make(y, ng(x), [x, y](Tape& t, const Node& out) {
    if (!t.ng(x)) return;
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = out.grad.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).cwiseProduct(out.grad.row(r).array().matrix() -
                                        Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
    t.g(x.i) += dx;
  });
}

Tape::V Tape::cols_from_table(V table, const std::vector<int>& ids) {
  const Mat& tm = value(table);
  Mat y(tm.rows(), static_cast<Eigen::Index>(ids.size()));
  for (size_t j = 0; j < ids.size(); ++j) {
    ME_CHECK(ids[j] >= 0 && ids[j] < tm.cols(), "cols_from_table: id out of range");
    y.col(static_cast<Eigen::Index>(j)) = tm.col(ids[j]);
  }
  return make(std::move(y), ng(table), [table, ids](Tape& t, const Node& out) {
    if (!t.ng(table)) return;
    for (size_t j = 0; j < ids.size(); ++j)
      t.g(table.i).col(ids[j]) += out.grad.col(static_cast<Eigen::Index>(j));
  });
}

Tape::V Tape::l2_normalize_col(V x, double eps) {
  ME_CHECK(value(x).cols() == 1, "l2_normalize_col: expects n x 1");
  const double nrm = std::sqrt(value(x).squaredNorm() + eps);
  Mat y = value(x) / nrm;
  return make(y, ng(x), [x, y, nrm](Tape& t, const Node& out) {
    if (!t.ng(x)) return;
    const double dot = (out.grad.cwiseProduct(y)).sum();
    t.g(x.i) += (out.grad - dot * y) / nrm;
  });
}

Tape::V Tape::overlap_add(const std::vector<V>& chunks, const std::vector<int>& offsets,
                          const std::vector<std::vector<double>>& weights,
                          int total_cols) {
  ME_CHECK(chunks.size() == offsets.size() && chunks.size() == weights.size(),
           "overlap_add: list size mismatch");
  ME_CHECK(!chunks.empty(), "overlap_add: empty");
  const Eigen::Index rows = value(chunks[0]).rows();
  Mat y = Mat::Zero(rows, total_cols);
  bool tr = false;
  for (size_t j = 0; j < chunks.size(); ++j) {
    const Mat& cm = value(chunks[j]);
    ME_CHECK(cm.rows() == rows, "overlap_add: row mismatch");
    ME_CHECK(static_cast<size_t>(cm.cols()) >= weights[j].size(),
             "overlap_add: weights longer than chunk");
    for (size_t c = 0; c < weights[j].size(); ++c) {
      const int dst = offsets[j] + static_cast<int>(c);
      ME_CHECK(dst >= 0 && dst < total_cols, "overlap_add: column out of range");
      y.col(dst) += weights[j][c] * cm.col(static_cast<Eigen::Index>(c));
    }
    tr = tr || ng(chunks[j]);
  }
  auto chunks_copy = chunks;
  return make(std::move(y), tr,
              [chunks_copy, offsets, weights](Tape& t, const Node& out) {
                for (size_t j = 0; j < chunks_copy.size(); ++j) {
                  if (!t.ng(chunks_copy[j])) continue;
                  for (size_t c = 0; c < weights[j].size(); ++c)
                    t.g(chunks_copy[j].i).col(static_cast<Eigen::Index>(c)) +=
                        weights[j][c] * out.grad.col(offsets[j] + static_cast<int>(c));
                }
              });
}

void Tape::backward(V scalar_loss) {
  ME_CHECK(scalar_loss.valid(), "backward: invalid loss handle");
  ME_CHECK(value(scalar_loss).size() == 1, "backward: loss is not scalar");
  for (auto& n : nodes_)
    if (n.needs_grad) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  nodes_[scalar_loss.i].grad = Mat::Ones(1, 1);
  for (int i = scalar_loss.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.back) continue;
    if (n.grad.size() == 0) continue;
    n.back(*this, n);
  }
  if (sink_) {
    for (auto [node_idx, pid] : param_nodes_) {
      if (nodes_[node_idx].grad.size() > 0) sink_->grad(pid) += nodes_[node_idx].grad;
    }
  }
}

Mat sinusoidal_embedding(double t, int dim, double max_period) {
  ME_CHECK(dim % 2 == 0, "sinusoidal_embedding: dim must be even");
  Mat e(dim, 1);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(max_period) * i / half);
    e(i, 0) = std::cos(t * freq);
    e(half + i, 0) = std::sin(t * freq);
  }
  return e;
}

}  // namespace musedit::nn
