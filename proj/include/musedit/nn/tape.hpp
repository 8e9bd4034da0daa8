#pragma once

#include <functional>
#include <string>
#include <vector>

#include "musedit/common.hpp"

namespace musedit::nn {

// Named parameter registry for one model. Values live here; gradients live in
// a GradSink so batch items can run on separate threads and be reduced in a
// fixed order afterwards (keeps training bit-deterministic under threading).
class ParamStore {
 public:
  int add(const std::string& name, Mat value);
  int count() const { return static_cast<int>(values_.size()); }
  Mat& value(int id) { return values_[id]; }
  const Mat& value(int id) const { return values_[id]; }
  const std::string& name(int id) const { return names_[id]; }
  int find(const std::string& name) const;  // -1 if absent
  int64_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
};

class GradSink {
 public:
  explicit GradSink(const ParamStore& params);
  void zero();
  Mat& grad(int id) { return grads_[id]; }
  const Mat& grad(int id) const { return grads_[id]; }
  // this += other, in fixed parameter order
  void accumulate(const GradSink& other);
  int count() const { return static_cast<int>(grads_.size()); }

 private:
  std::vector<Mat> grads_;
};

// Reverse-mode tape over dense matrices. Convention throughout the codebase:
// rows = channels/features, cols = time/frames. Scalars are 1x1.
class Tape {
 public:
  Tape(const ParamStore& params, GradSink* sink);

  struct V {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  // ---- leaves ----
  V param(int id);
  V constant(Mat x);
  V input(Mat x);  // tracked leaf; gradient readable after backward()
  const Mat& value(V v) const { return nodes_[v.i].val; }
  const Mat& grad_of(V v) const { return nodes_[v.i].grad; }

  // ---- elementwise ----
  V add(V a, V b);
  V sub(V a, V b);
  V mul(V a, V b);
  V scale(V a, double s);
  V add_scalar(V a, double s);
  V add_col(V a, V col);   // col: n x 1, broadcast over columns
  V mul_col(V a, V col);
  V relu(V a);
  V leaky_relu(V a, double slope);
  V silu(V a);
  V tanh_(V a);
  V exp_(V a);
  V log_(V a);
  V square(V a);
  V softplus(V a);

  // ---- shape ----
  V transpose(V a);
  V concat_rows(const std::vector<V>& parts);
  V slice_rows(V a, int r0, int n);
  V slice_cols(V a, int c0, int n);
  V pad_cols(V a, int left, int right);
  V broadcast_col(V col, int ncols);  // n x 1 -> n x ncols

  // ---- linear algebra ----
  V matmul(V a, V b);     // a * b
  V matmul_tn(V a, V b);  // a^T * b
  V matmul_nt(V a, V b);  // a * b^T

  // ---- reductions / losses ----
  V sum(V a);            // 1x1
  V mean(V a);           // 1x1
  V mse(V a, V b);       // mean((a-b)^2), 1x1
  V row_logsumexp(V a);  // n x m -> n x 1
  V diag_as_col(V a);    // square n x n -> n x 1

  // ---- nn blocks ----
  // x: Cin x T; w: Cout x (Cin*k); b: Cout x 1 (or invalid for bias-free)
  V conv1d(V x, V w, V b, int k, int stride, int pad);
  // x: Cin x T; w: Cin x (Cout*k); b: Cout x 1; output Cout x ((T-1)*s + k - 2p)
  V conv1d_transpose(V x, V w, V b, int k, int stride, int pad);
  V avg_pool1d(V x, int k, int stride);
  V layer_norm(V x, V gamma, V beta, double eps = 1e-5);  // per column
  V softmax_rows(V x);  // softmax along each row
  V cols_from_table(V table, const std::vector<int>& ids);  // gather columns
  V l2_normalize_col(V x, double eps = 1e-12);              // x: n x 1
  // out.col(offsets[j]+c) += chunks[j].col(c) * weights[j][c]
  V overlap_add(const std::vector<V>& chunks, const std::vector<int>& offsets,
                const std::vector<std::vector<double>>& weights, int total_cols);

  void backward(V scalar_loss);
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Node&)> back;  // pulls from node.grad
  };

  V make(Mat val, bool needs_grad, std::function<void(Tape&, const Node&)> back);
  Mat& g(int i) { return nodes_[i].grad; }
  bool ng(V v) const { return nodes_[v.i].needs_grad; }

  const ParamStore& params_;
  GradSink* sink_;
  std::vector<Node> nodes_;
  std::vector<std::pair<int, int>> param_nodes_;  // (node index, param id)
};

// Sinusoidal position/time features as a column vector (dim even).
Mat sinusoidal_embedding(double t, int dim, double max_period = 10000.0);

}  // namespace musedit::nn
