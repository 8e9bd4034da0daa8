#pragma once

#include <vector>

#include "musedit/nn/tape.hpp"

namespace musedit::nn {

// Adam with optional decoupled weight decay, restricted to a subset of the
// store's parameters (a GAN's generator and discriminator share one store but
// train on alternating steps). Moment buffers are exposed for checkpointing
// so interrupted runs resume exactly.
class Adam {
 public:
  Adam(ParamStore& params, std::vector<int> ids, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);
  Adam(ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8, double weight_decay = 0.0);

  void step(const GradSink& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return step_; }
  const std::vector<int>& ids() const { return ids_; }

  // serialization
  std::vector<Mat>& m() { return m_; }
  std::vector<Mat>& v() { return v_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  ParamStore& params_;
  std::vector<int> ids_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  int64_t step_ = 0;
  std::vector<Mat> m_, v_;  // indexed like ids_
};

}  // namespace musedit::nn
