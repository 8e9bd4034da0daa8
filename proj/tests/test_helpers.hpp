#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "musedit/nn/modules.hpp"
#include "musedit/rng.hpp"

namespace testutil {

using musedit::Mat;
using musedit::Rng;
using musedit::Vec;

inline Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.gaussian();
  return m;
}

// Central-difference check of d loss / d params[id](r,c) against `analytic`.
// `loss` must recompute the scalar from the store's current values.
inline double central_diff(musedit::nn::ParamStore& ps, int id, int r, int c,
                           const std::function<double()>& loss, double h) {
  double& p = ps.value(id)(r, c);
  const double orig = p;
  p = orig + h;
  const double fp = loss();
  p = orig - h;
  const double fm = loss();
  p = orig;
  return (fp - fm) / (2.0 * h);
}

struct GradCheckStats {
  double max_rel_err = 0.0;
  int checked = 0;
};

// Compares `sink` gradients (already computed) against central differences on
// `n_samples` randomly chosen parameter entries.
inline GradCheckStats gradcheck_params(musedit::nn::ParamStore& ps,
                                       const musedit::nn::GradSink& sink,
                                       const std::function<double()>& loss,
                                       int n_samples, uint64_t seed,
                                       double h_scale = 1e-5) {
  Rng rng(seed);
  GradCheckStats stats;
  for (int k = 0; k < n_samples; ++k) {
    const int id = static_cast<int>(rng.uniform_int(0, ps.count() - 1));
    const Mat& val = ps.value(id);
    if (val.size() == 0) continue;
    const int r = static_cast<int>(rng.uniform_int(0, val.rows() - 1));
    const int c = static_cast<int>(rng.uniform_int(0, val.cols() - 1));
    const double h = h_scale * (1.0 + std::abs(val(r, c)));
    const double num = central_diff(ps, id, r, c, loss, h);
    const double ana = sink.grad(id)(r, c);
    const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
    stats.max_rel_err = std::max(stats.max_rel_err, std::abs(num - ana) / denom);
    ++stats.checked;
  }
  return stats;
}

// Plain-loop transformer layer mirroring ChunkTransformerLayer's contract:
// pre-LN multi-head self-attention + residual, pre-LN silu MLP + residual.
// Reads weights straight from the store by name; shares no tape code.
inline Mat naive_transformer_layer(const musedit::nn::ParamStore& ps,
                                   const std::string& prefix, const Mat& x,
                                   const std::vector<bool>& valid, int head_dim) {
  auto value = [&](const std::string& n) {
    const int id = ps.find(prefix + n);
    if (id < 0) throw std::runtime_error("naive layer: missing param " + prefix + n);
    return ps.value(id);
  };
  auto layer_norm = [](const Mat& m, const Mat& g, const Mat& b) {
    Mat out = m;
    for (int c = 0; c < m.cols(); ++c) {
      const double mu = m.col(c).mean();
      double var = 0.0;
      for (int r = 0; r < m.rows(); ++r) var += (m(r, c) - mu) * (m(r, c) - mu);
      var /= m.rows();
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (int r = 0; r < m.rows(); ++r)
        out(r, c) = g(r, 0) * ((m(r, c) - mu) * inv) + b(r, 0);
    }
    return out;
  };
  auto silu = [](const Mat& m) {
    Mat out = m;
    for (int c = 0; c < m.cols(); ++c)
      for (int r = 0; r < m.rows(); ++r)
        out(r, c) = m(r, c) / (1.0 + std::exp(-m(r, c)));
    return out;
  };

  const int D = static_cast<int>(x.rows());
  const int T = static_cast<int>(x.cols());
  const int heads = D / head_dim;
  const Mat normed = layer_norm(x, value(".ln_attn.g"), value(".ln_attn.b"));
  const Mat q = value(".attn.q.w") * normed;
  const Mat k = value(".attn.k.w") * normed;
  const Mat v = value(".attn.v.w") * normed;
  Mat merged(D, T);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < T; ++i) {
      // scores for query i over keys
      std::vector<double> score(T, 0.0);
      double mx = -1e300;
      for (int j = 0; j < T; ++j) {
        double s = 0.0;
        for (int d = 0; d < head_dim; ++d)
          s += q(h * head_dim + d, i) * k(h * head_dim + d, j);
        s /= std::sqrt(static_cast<double>(head_dim));
        if (!valid[j]) s = -1e30;
        score[j] = s;
        mx = std::max(mx, s);
      }
      double denom = 0.0;
      for (int j = 0; j < T; ++j) {
        score[j] = std::exp(score[j] - mx);
        denom += score[j];
      }
      for (int d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (int j = 0; j < T; ++j) acc += score[j] / denom * v(h * head_dim + d, j);
        merged(h * head_dim + d, i) = acc;
      }
    }
  }
  Mat attn_out = value(".attn.o.w") * merged;
  attn_out.colwise() += Eigen::VectorXd(value(".attn.o.b").col(0));
  Mat h1 = x + attn_out;
  Mat f = value(".ff1.w") * layer_norm(h1, value(".ln_ff.g"), value(".ln_ff.b"));
  f.colwise() += Eigen::VectorXd(value(".ff1.b").col(0));
  f = silu(f);
  Mat f2 = value(".ff2.w") * f;
  f2.colwise() += Eigen::VectorXd(value(".ff2.b").col(0));
  return h1 + f2;
}

inline std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("musedit_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testutil
